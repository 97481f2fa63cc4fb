"""Small steganalysis CNN with hand-written backpropagation.

Architecture (fixed):

    x/255 - 0.5 -> fixed 5x5 KV high-pass (valid) * RESIDUAL_GAIN
    -> conv3x3(8)  -> |.| -> tanh -> avgpool2
    -> conv3x3(16) -> tanh       -> avgpool2
    -> conv3x3(32) -> tanh       -> avgpool2
    -> global average -> affine -> logistic

3x3 convolutions use zero "same" padding; pooling drops a trailing odd
row/column. Inference and input gradients run in float64 so they can be
checked against finite differences; training defaults to float32 for speed
and stores the result back as float64.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .grid import ElementGrid

log = logging.getLogger(__name__)

KV = np.array([[-1, 2, -2, 2, -1],
               [2, -6, 8, -6, 2],
               [-2, 8, -12, 8, -2],
               [2, -6, 8, -6, 2],
               [-1, 2, -2, 2, -1]], dtype=np.float64) / 12.0

# residuals in units of grey levels / 4; keeps a single +-1 change at O(0.25)
RESIDUAL_GAIN = 255.0 / 4.0
CHANNELS = (8, 16, 32)
F_CLAMP = 1e-7
ARCHITECTURE = (f"kv5x5-valid-gain{RESIDUAL_GAIN!r}|conv3x3-{CHANNELS[0]}-abs-tanh-pool2"
                f"|conv3x3-{CHANNELS[1]}-tanh-pool2|conv3x3-{CHANNELS[2]}-tanh-pool2|gap|affine|logistic")
PARAM_NAMES = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b", "fc_w", "fc_b")
MAGIC = b"ACN1"


class ModelFormatError(ValueError):
    pass


def _param_shapes():
    c1, c2, c3 = CHANNELS
    return {
        "conv1_w": (c1, 1, 3, 3), "conv1_b": (c1,),
        "conv2_w": (c2, c1, 3, 3), "conv2_b": (c2,),
        "conv3_w": (c3, c2, 3, 3), "conv3_b": (c3,),
        "fc_w": (c3,), "fc_b": (1,),
    }


def architecture_hash() -> bytes:
    return hashlib.sha256(ARCHITECTURE.encode()).digest()


@dataclass(eq=False)
class ClassifierModel:
    height: int
    width: int
    params: dict[str, np.ndarray]
    iterations: int = 0
    seed: int = 0

    @classmethod
    def initialize(cls, height: int, width: int, seed: int = 0) -> "ClassifierModel":
        if height < 12 or width < 12:
            raise ValueError("input must be at least 12x12")
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in _param_shapes().items():
            if name.endswith("_b"):
                params[name] = np.zeros(shape)
            elif name == "fc_w":
                params[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), shape)
            else:
                fan_in = shape[1] * shape[2] * shape[3]
                params[name] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), shape)
        return cls(height, width, params, 0, seed)

    def copy(self) -> "ClassifierModel":
        return ClassifierModel(self.height, self.width,
                               {k: v.copy() for k, v in self.params.items()},
                               self.iterations, self.seed)

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def to_bytes(self) -> bytes:
        out = [MAGIC, architecture_hash(),
               struct.pack("<IIQQ", self.height, self.width, self.iterations, self.seed & (2**64 - 1))]
        for name in PARAM_NAMES:
            out.append(np.ascontiguousarray(self.params[name], dtype="<f8").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ClassifierModel":
        if data[:4] != MAGIC:
            raise ModelFormatError("bad model magic")
        if data[4:36] != architecture_hash():
            raise ModelFormatError("architecture hash mismatch")
        height, width, iterations, seed = struct.unpack_from("<IIQQ", data, 36)
        pos = 36 + 24
        params = {}
        for name, shape in _param_shapes().items():
            count = int(np.prod(shape))
            chunk = data[pos:pos + 8 * count]
            if len(chunk) != 8 * count:
                raise ModelFormatError("truncated parameter data")
            params[name] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
            pos += 8 * count
        if pos != len(data):
            raise ModelFormatError("trailing bytes after parameters")
        return cls(height, width, params, iterations, seed)


# ---------------------------------------------------------------- primitives
# Activations use a channel-major (C, B, H, W) layout so every convolution
# is one matrix product over an im2col buffer.

def _im2col(x, k):
    """(C,B,H,W) -> (k*k*C, B*H*W) patches of the zero-padded 'same' input."""
    C, B, H, W = x.shape
    p = k // 2
    xp = np.zeros((C, B, H + 2 * p, W + 2 * p), dtype=x.dtype)
    xp[:, :, p:p + H, p:p + W] = x
    cols = np.empty((k * k, C, B, H, W), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[i * k + j] = xp[:, :, i:i + H, j:j + W]
    return cols.reshape(k * k * C, B * H * W)


def _conv_same(x, w, b):
    O, C, k, _ = w.shape
    _, B, H, W = x.shape
    cols = _im2col(x, k)
    wm = w.transpose(0, 2, 3, 1).reshape(O, k * k * C)
    out = (wm @ cols).reshape(O, B, H, W)
    out += b[:, None, None, None]
    return out, cols


def _conv_same_backward(dout, cols, w, need_dx=True):
    O, C, k, _ = w.shape
    _, B, H, W = dout.shape
    p = k // 2
    d2 = dout.reshape(O, -1)
    dw = (d2 @ cols.T).reshape(O, k, k, C).transpose(0, 3, 1, 2)
    db = d2.sum(axis=1)
    if not need_dx:
        return None, dw, db
    wm = w.transpose(0, 2, 3, 1).reshape(O, k * k * C)
    dcols = (wm.T @ d2).reshape(k * k, C, B, H, W)
    dxp = np.zeros((C, B, H + 2 * p, W + 2 * p), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + H, j:j + W] += dcols[i * k + j]
    return dxp[:, :, p:p + H, p:p + W], dw, db


def _kv_valid(x):
    """(B,H,W) -> (1,B,H-4,W-4) high-pass residual."""
    B, H, W = x.shape
    kv = KV.astype(x.dtype)
    out = np.zeros((1, B, H - 4, W - 4), dtype=x.dtype)
    for i in range(5):
        for j in range(5):
            out[0] += kv[i, j] * x[:, i:i + H - 4, j:j + W - 4]
    return out


def _kv_valid_backward(dr):
    """(1,B,H-4,W-4) -> (B,H,W)."""
    _, B, h, w = dr.shape
    kv = KV.astype(dr.dtype)
    dx = np.zeros((B, h + 4, w + 4), dtype=dr.dtype)
    for i in range(5):
        for j in range(5):
            dx[:, i:i + h, j:j + w] += kv[i, j] * dr[0]
    return dx


def _pool(x):
    C, B, H, W = x.shape
    h2, w2 = H // 2, W // 2
    v = x[:, :, :2 * h2, :2 * w2].reshape(C, B, h2, 2, w2, 2)
    return v.mean(axis=(3, 5))


def _pool_backward(dout, shape):
    h2, w2 = dout.shape[2], dout.shape[3]
    dx = np.zeros(shape, dtype=dout.dtype)
    q = dout / 4.0
    for i in range(2):
        for j in range(2):
            dx[:, :, i:2 * h2:2, j:2 * w2:2] = q
    return dx


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


# ------------------------------------------------------------------ network

def _as_batch(model: ClassifierModel, images) -> np.ndarray:
    if isinstance(images, ElementGrid):
        images = [images]
    if isinstance(images, np.ndarray) and images.ndim == 2:
        arr = images[None].astype(np.float64)
    elif isinstance(images, np.ndarray) and images.ndim == 3:
        arr = images.astype(np.float64)
    else:
        arr = np.stack([g.elements if isinstance(g, ElementGrid) else np.asarray(g)
                        for g in images]).astype(np.float64)
    if arr.shape[1:] != (model.height, model.width):
        raise ValueError(f"input {arr.shape[1:]} does not match model {(model.height, model.width)}")
    return arr


def _forward(params, x, keep=False):
    cache = {}
    xc = x / 255.0 - 0.5
    r = _kv_valid(xc) * RESIDUAL_GAIN
    a1, c1 = _conv_same(r, params["conv1_w"], params["conv1_b"])
    t1 = np.tanh(np.abs(a1))
    p1 = _pool(t1)
    a2, c2 = _conv_same(p1, params["conv2_w"], params["conv2_b"])
    t2 = np.tanh(a2)
    p2 = _pool(t2)
    a3, c3 = _conv_same(p2, params["conv3_w"], params["conv3_b"])
    t3 = np.tanh(a3)
    p3 = _pool(t3)
    g = p3.mean(axis=(2, 3)).T  # (B, C3)
    z = g @ params["fc_w"] + params["fc_b"][0]
    if keep:
        cache.update(a1=a1, c1=c1, t1=t1, c2=c2, t2=t2, c3=c3, t3=t3, p3=p3, g=g)
    return z, cache


def _backward(params, cache, dz, need_input=False, need_params=True):
    grads = {}
    g, p3 = cache["g"], cache["p3"]
    if need_params:
        grads["fc_w"] = g.T @ dz
        grads["fc_b"] = np.array([dz.sum()], dtype=dz.dtype)
    dg = dz[:, None] * params["fc_w"][None, :]  # (B, C3)
    hw = p3.shape[2] * p3.shape[3]
    dp3 = np.broadcast_to((dg.T / hw)[:, :, None, None], p3.shape)
    da3 = _pool_backward(dp3, cache["t3"].shape) * (1.0 - cache["t3"] ** 2)
    dp2, grads["conv3_w"], grads["conv3_b"] = _conv_same_backward(da3, cache["c3"], params["conv3_w"])
    da2 = _pool_backward(dp2, cache["t2"].shape) * (1.0 - cache["t2"] ** 2)
    dp1, grads["conv2_w"], grads["conv2_b"] = _conv_same_backward(da2, cache["c2"], params["conv2_w"])
    da1 = _pool_backward(dp1, cache["t1"].shape) * (1.0 - cache["t1"] ** 2) * np.sign(cache["a1"])
    dr, grads["conv1_w"], grads["conv1_b"] = _conv_same_backward(
        da1, cache["c1"], params["conv1_w"], need_dx=need_input)
    if need_input:
        # chain rule through the gain, the KV filter and the x/255 centering
        grads["input"] = _kv_valid_backward(dr) * (RESIDUAL_GAIN / 255.0)
    return grads


def logits(model: ClassifierModel, images) -> np.ndarray:
    z, _ = _forward(model.params, _as_batch(model, images))
    return z


def forward(model: ClassifierModel, grid) -> float | np.ndarray:
    """Stego probability F(X). A single grid gives a float, a batch an array."""
    f = _sigmoid(logits(model, grid))
    return float(f[0]) if isinstance(grid, ElementGrid) else f


def classify(model: ClassifierModel, grid) -> int | np.ndarray:
    """1 (stego) iff F >= 0.5."""
    f = forward(model, grid)
    return int(f >= 0.5) if np.isscalar(f) else (f >= 0.5).astype(np.int8)


def decision(f) -> int:
    return int(f >= 0.5)


def _loss_from_f(f, y):
    f = np.clip(f, F_CLAMP, 1.0 - F_CLAMP)
    return -(y * np.log(f) + (1 - y) * np.log(1.0 - f))


def _dloss_dz(z, y):
    f = _sigmoid(z)
    d = f - y
    # clamp plateau: loss is constant there
    d = np.where((f < F_CLAMP) | (f > 1.0 - F_CLAMP), 0.0, d)
    return d


def loss(model: ClassifierModel, grid, label: int) -> float:
    return float(np.mean(_loss_from_f(_sigmoid(logits(model, grid)), label)))


def input_gradient(model: ClassifierModel, grid, target_label: int = 0) -> np.ndarray:
    """dL(X, target)/dX in grey-level units, same shape as the grid."""
    x = _as_batch(model, grid)
    z, cache = _forward(model.params, x, keep=True)
    dz = _dloss_dz(z, target_label)
    grads = _backward(model.params, cache, dz, need_input=True, need_params=False)
    g = grads["input"]
    return g[0] if isinstance(grid, ElementGrid) or np.ndim(grid) == 2 else g


def loss_and_param_grads(params, x, y):
    z, cache = _forward(params, x, keep=True)
    y = np.asarray(y, dtype=x.dtype)
    f = _sigmoid(z)
    batch_loss = float(np.mean(_loss_from_f(f, y)))
    dz = _dloss_dz(z, y) / len(y)
    return batch_loss, _backward(params, cache, dz)


@dataclass
class TrainParams:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    iterations: int = 5000
    weight_decay: float = 0.0
    precision: str = "float32"
    log_every: int = 0
    history: list = field(default_factory=list, repr=False)


def train(covers, stegos, hyper: TrainParams | None = None, seed: int = 0) -> ClassifierModel:
    """Momentum descent on paired cover/stego batches.

    Every batch holds ``batch_size // 2`` covers and their own stego
    counterparts. Pair order is reshuffled each epoch from ``seed``.
    """
    hyper = hyper or TrainParams()
    if hyper.iterations == 0:
        return ClassifierModel.initialize(*_stack(covers).shape[1:], seed)
    dtype = np.dtype(hyper.precision)
    cov = _stack(covers).astype(dtype)
    steg = _stack(stegos).astype(dtype)
    if len(cov) == 0:
        raise ValueError("empty training set")
    if cov.shape != steg.shape:
        raise ValueError("cover and stego sets must be paired and equally shaped")
    n, height, width = cov.shape
    model = ClassifierModel.initialize(height, width, seed)
    params = {k: v.astype(dtype) for k, v in model.params.items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    rng = np.random.default_rng([seed, 1])
    half = max(1, min(hyper.batch_size // 2, n))
    perm = rng.permutation(n)
    pos = 0
    for it in range(hyper.iterations):
        if pos + half > n:
            perm = rng.permutation(n)
            pos = 0
        idx = perm[pos:pos + half]
        pos += half
        x = np.concatenate([cov[idx], steg[idx]])
        y = np.concatenate([np.zeros(half), np.ones(half)])
        batch_loss, grads = loss_and_param_grads(params, x, y)
        for name in PARAM_NAMES:
            g = grads[name].astype(dtype, copy=False)
            if hyper.weight_decay and name.endswith("_w"):
                g = g + dtype.type(hyper.weight_decay) * params[name]
            velocity[name] = dtype.type(hyper.momentum) * velocity[name] - dtype.type(hyper.learning_rate) * g
            params[name] = params[name] + velocity[name]
        model.iterations += 1
        hyper.history.append(batch_loss)
        if hyper.log_every and (it + 1) % hyper.log_every == 0:
            log.info("iter %d loss %.4f", it + 1, float(np.mean(hyper.history[-hyper.log_every:])))
    model.params = {k: v.astype(np.float64) for k, v in params.items()}
    return model


def _stack(images) -> np.ndarray:
    if isinstance(images, np.ndarray):
        return images.astype(np.float64)
    images = list(images)
    if not images:
        return np.zeros((0, 0, 0))
    return np.stack([g.elements for g in images]).astype(np.float64)
