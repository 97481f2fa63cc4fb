"""Adversarial embedding with minimum alteration.

The cover is split along a keyed embedding order into a common prefix and
an adjustable suffix holding a fraction ``beta`` of the elements. The
common part is embedded with baseline costs; the adjustable part with
costs skewed by the targeted classifier's input gradient. ``beta`` walks a
grid 0, dbeta, ..., 1 until the classifier says "cover".
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from . import cnn
from .coding import simulator
from .coding.stc import StcParams, embed_segments, usable_order
from .cost import AdjustMode, CostMap, adjust_costs, baseline_costs
from .grid import ElementGrid, diff

log = logging.getLogger(__name__)

CostProvider = Callable[[ElementGrid], CostMap]
MESSAGE_STREAM = 2 ** 32


class AmaMode(str, Enum):
    INVERSE_SIGN = "inverse-sign"
    SAME_SIGN = "same-sign"
    FIXED_BETA = "fixed-beta"


class Coder(str, Enum):
    SIMULATOR = "simulator"
    STC = "stc"


@dataclass
class AmaConfig:
    alpha: float = 2.0
    delta_beta: float = 0.1
    mode: AmaMode = AmaMode.INVERSE_SIGN
    fixed_beta: float | None = None
    coder: Coder = Coder.SIMULATOR
    key: int | None = 0  # None selects the fixed raster order
    seed: int = 0
    stc_height: int = 7
    keep_diagnostics: bool = False

    def __post_init__(self):
        self.mode = AmaMode(self.mode)
        self.coder = Coder(self.coder)
        if not self.alpha > 1:
            raise ValueError("alpha must be > 1")
        if not 0 < self.delta_beta <= 1:
            raise ValueError("delta_beta must be in (0, 1]")
        if self.mode is AmaMode.FIXED_BETA:
            if self.fixed_beta is None or not 0 <= self.fixed_beta <= 1:
                raise ValueError("fixed-beta mode needs fixed_beta in [0, 1]")

    @property
    def adjust_mode(self) -> AdjustMode:
        return AdjustMode.SAME_SIGN if self.mode is AmaMode.SAME_SIGN else AdjustMode.INVERSE_SIGN

    def beta_grid(self) -> list[float]:
        if self.mode is AmaMode.FIXED_BETA:
            return [float(self.fixed_beta)]
        return beta_grid(self.delta_beta)


def beta_grid(delta_beta: float) -> list[float]:
    steps = int(np.ceil(1.0 / delta_beta - 1e-9))
    return [min(1.0, round(i * delta_beta, 12)) for i in range(steps + 1)]


def round_half_up(x: float) -> int:
    # snap values like 69.99999999999999 produced by binary fractions
    return int(np.floor(round(x, 9) + 0.5))


@dataclass
class GroupPartition:
    order: np.ndarray
    beta: float
    l1: int

    @property
    def l2(self) -> int:
        return len(self.order) - self.l1

    @property
    def common(self) -> np.ndarray:
        return self.order[:self.l1]

    @property
    def adjustable(self) -> np.ndarray:
        return self.order[self.l1:]

    def masks(self, shape) -> tuple[np.ndarray, np.ndarray]:
        common = np.zeros(int(np.prod(shape)), dtype=bool)
        common[self.common] = True
        common = common.reshape(shape)
        return common, ~common


def embedding_order(shape, key: int | None) -> np.ndarray:
    n = int(np.prod(shape))
    if key is None:
        return np.arange(n)
    return np.random.default_rng([int(key) & (2**64 - 1), 0x0DE5]).permutation(n)


def make_partition(grid: ElementGrid, key: int | None, beta: float) -> GroupPartition:
    if not 0 <= beta <= 1:
        raise ValueError("beta must be in [0, 1]")
    order = embedding_order(grid.shape, key)
    l1 = round_half_up(len(order) * (1.0 - beta))
    return GroupPartition(order, float(beta), l1)


@dataclass
class AmaResult:
    stego: ElementGrid
    beta_used: float | None
    success: bool
    fallback: bool
    payload_bits: float
    change_count: int
    attempts: list = field(default_factory=list)  # (beta, F) per tried beta
    gradient: np.ndarray | None = None
    adjusted_costs: CostMap | None = None
    message: np.ndarray | None = None

    def record(self) -> dict:
        return {
            "beta": self.beta_used,
            "success": bool(self.success),
            "fallback": bool(self.fallback),
            "change_count": int(self.change_count),
            "payload_bits": float(self.payload_bits),
        }

    def to_json(self) -> str:
        return json.dumps(self.record(), sort_keys=True)


def _attempt_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & (2**64 - 1), index])


def _stc_setup(cover: ElementGrid, payload_bits: float, config: AmaConfig, message):
    order = usable_order(cover, embedding_order(cover.shape, config.key))
    k = int(round(payload_bits))
    if message is None:
        rng = _attempt_rng(config.seed, MESSAGE_STREAM)
        message = rng.integers(0, 2, k).astype(np.uint8)
    message = np.asarray(message, dtype=np.uint8)
    params = StcParams.for_payload(len(order), max(len(message), 1), config.stc_height,
                                   seed=0 if config.key is None else config.key)
    return order, message, params


def stc_params_for(cover: ElementGrid, message_len: int, key: int | None, height: int = 7) -> StcParams:
    """Code parameters a receiver rebuilds from the key and message length."""
    n = cover.usable_count
    return StcParams.for_payload(n, max(message_len, 1), height, seed=0 if key is None else key)


def conventional_embed(cover: ElementGrid, payload_bits: float,
                       cost_provider: CostProvider = baseline_costs,
                       coder: Coder | str = Coder.SIMULATOR, key: int | None = 0,
                       seed: int = 0, message=None, stc_height: int = 7) -> ElementGrid:
    """Single-phase embedding over all usable elements with baseline costs."""
    config = AmaConfig(coder=coder, key=key, seed=seed, stc_height=stc_height)
    cost = cost_provider(cover)
    return _conventional(cover, payload_bits, cost, config, message)


def _conventional(cover, payload_bits, cost, config, message=None):
    if config.coder is Coder.STC:
        order, message, params = _stc_setup(cover, payload_bits, config, message)
        return embed_segments(cover, [(cost, len(order))], message, params, order)
    rng = _attempt_rng(config.seed, 0)
    return simulator.simulate_embedding(cover, cost, payload_bits, rng=rng)


def ama_embed(cover: ElementGrid, payload_bits: float, model: cnn.ClassifierModel,
              config: AmaConfig | None = None,
              cost_provider: CostProvider = baseline_costs, message=None) -> AmaResult:
    config = config or AmaConfig()
    cost = cost_provider(cover)
    max_bits = simulator.max_entropy(cost, cover.usable_mask)
    if payload_bits > max_bits + 1e-6 * cover.usable_count:
        raise simulator.PayloadTooLarge(f"payload {payload_bits} exceeds {max_bits:.1f} bits")
    stc = None
    if config.coder is Coder.STC:
        stc = _stc_setup(cover, payload_bits, config, message)

    attempts = []
    last = None
    for index, beta in enumerate(config.beta_grid()):
        stego, grad, adjusted = embed_at_beta(cover, payload_bits, cost, model, config,
                                              beta, index, stc)
        f = cnn.forward(model, stego)
        attempts.append((beta, f))
        last = (stego, grad, adjusted, beta, f)
        if cnn.decision(f) == 0:
            return _result(cover, stego, beta, True, False, payload_bits, attempts,
                           grad, adjusted, config, stc)
        if config.mode is AmaMode.FIXED_BETA:
            return _result(cover, stego, beta, False, False, payload_bits, attempts,
                           grad, adjusted, config, stc)

    log.debug("beta grid exhausted; falling back to conventional embedding")
    stego = _conventional(cover, payload_bits, cost, config, None if stc is None else stc[1])
    return _result(cover, stego, None, False, True, payload_bits, attempts,
                   last[1], last[2], config, stc)


def embed_at_beta(cover: ElementGrid, payload_bits: float, cost: CostMap,
                  model: cnn.ClassifierModel, config: AmaConfig, beta: float, index: int,
                  stc=None):
    """One pass of the two-phase embedding for a given beta.

    Returns (stego, gradient at the common-phase image, adjusted costs).
    """
    part = make_partition(cover, config.key, beta)
    common, adjustable = part.masks(cover.shape)
    k1 = round_half_up(payload_bits * (1.0 - beta))
    k2 = payload_bits - k1

    if stc is not None:
        return _stc_two_phase(cover, cost, model, config, part, common, adjustable, stc)

    rng = _attempt_rng(config.seed, index)
    z_c = simulator.simulate_embedding(cover, cost, k1, mask=common, rng=rng)
    if part.l2 == 0 or k2 <= 0:
        simulator.simulate_embedding(z_c, cost, 0, rng=rng)
        return z_c, None, None
    grad = cnn.input_gradient(model, z_c, target_label=0)
    adjusted = adjust_costs(cost, grad, config.alpha, config.adjust_mode, adjustable)
    z = simulator.simulate_embedding(z_c, adjusted, k2, mask=adjustable, rng=rng)
    return z, grad, adjusted


def _stc_two_phase(cover, cost, model, config, part, common, adjustable, stc):
    order, message, params = stc
    usable = cover.usable_mask.ravel()
    n_common = int(usable[part.common].sum())
    if part.l2 == 0:
        return embed_segments(cover, [(cost, len(order))], message, params, order), None, None
    # phase 1: fix the common prefix against the rows it completes
    z_c = embed_segments(cover, [(cost, n_common), (cost, len(order) - n_common)],
                         message, params, order)
    z_c = _revert(cover, z_c, adjustable)
    grad = cnn.input_gradient(model, z_c, target_label=0)
    adjusted = adjust_costs(cost, grad, config.alpha, config.adjust_mode, adjustable)
    z = embed_segments(cover, [(cost, n_common), (adjusted, len(order) - n_common)],
                       message, params, order)
    return z, grad, adjusted


def _revert(cover: ElementGrid, stego: ElementGrid, region: np.ndarray) -> ElementGrid:
    el = stego.elements.copy()
    el[region] = cover.elements[region]
    return stego.with_elements(el)


def _result(cover, stego, beta, success, fallback, payload_bits, attempts, grad, adjusted,
            config, stc):
    change_count = int(np.count_nonzero(diff(cover, stego)))
    res = AmaResult(stego, beta, success, fallback, float(payload_bits), change_count, attempts,
                    message=None if stc is None else stc[1])
    if config.keep_diagnostics:
        res.gradient, res.adjusted_costs = grad, adjusted
    return res


def sign_accordance(modmap: np.ndarray, grad: np.ndarray, adjustable=None) -> float:
    """Share of changed adjustable elements whose sign opposes the gradient.

    Returns 0.5 when no adjustable element has both a change and a non-zero
    gradient.
    """
    m = np.asarray(modmap)
    g = np.asarray(grad)
    if m.shape != g.shape:
        raise ValueError("modification map and gradient shapes differ")
    sel = np.ones(m.shape, dtype=bool)
    if adjustable is not None:
        adjustable = np.asarray(adjustable)
        if adjustable.dtype == bool:
            sel = adjustable
        else:
            sel = np.zeros(m.size, dtype=bool)
            sel[adjustable.astype(np.intp)] = True
            sel = sel.reshape(m.shape)
    sel = sel & (m != 0) & (g != 0)
    if not sel.any():
        return 0.5
    return float(np.mean(np.sign(m[sel]) == -np.sign(g[sel])))
