"""Feature-based steganalysis: SPAM-style residual co-occurrences, a
Fisher linear discriminant ensemble on random subspaces, and MMD."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .grid import ElementGrid

T = 3
BINS = 2 * T + 1
DIM_PER_DIRECTION = BINS ** 3
FEATURE_DIM = 2 * DIM_PER_DIRECTION  # 686


class DegenerateTraining(ValueError):
    pass


def _triples(r: np.ndarray) -> np.ndarray:
    """Histogram of consecutive residual triples along the last axis."""
    idx = (r[..., :-2] + T) * BINS * BINS + (r[..., 1:-1] + T) * BINS + (r[..., 2:] + T)
    return np.bincount(idx.ravel(), minlength=DIM_PER_DIRECTION).astype(np.float64)


def extract_features(grid: ElementGrid) -> np.ndarray:
    """686-D co-occurrence vector of truncated first-order residuals.

    For each of the horizontal and vertical directions, the counts of
    residual triples (r_j, r_j+1, r_j+2) scanned forwards and backwards are
    averaged; the backward scan sees the sign-flipped, reversed residuals.
    Each 343-bin half therefore sums to the number of residual triples.
    """
    x = grid.elements.astype(np.int64)
    if x.shape[0] < 3 or x.shape[1] < 3:
        raise ValueError("feature extraction needs at least a 3x3 grid")
    parts = []
    for arr in (x, x.T):
        r = np.clip(arr[:, 1:] - arr[:, :-1], -T, T)
        fwd = _triples(r)
        bwd = _triples(-r[:, ::-1])
        parts.append((fwd + bwd) / 2.0)
    return np.concatenate(parts)


def features_matrix(grids) -> np.ndarray:
    return np.stack([extract_features(g) for g in grids])


def features_to_csv(matrix: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"f{i}" for i in range(matrix.shape[1])])
    for row in matrix:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def features_from_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    return np.array([[float(v) for v in row] for row in rows[1:]], dtype=np.float64)


@dataclass
class FldLearner:
    subspace: np.ndarray
    w: np.ndarray
    b: float

    def vote(self, f: np.ndarray) -> np.ndarray:
        proj = np.asarray(f)[..., self.subspace] @ self.w
        return (proj - self.b >= 0).astype(np.int8)


@dataclass
class FldEnsemble:
    learners: list[FldLearner]
    dim: int
    seed: int = 0


def _fld(cov: np.ndarray, steg: np.ndarray) -> tuple[np.ndarray, float]:
    mu_c, mu_s = cov.mean(axis=0), steg.mean(axis=0)
    delta = mu_s - mu_c
    scatter = np.atleast_2d(np.cov(cov, rowvar=False)) + np.atleast_2d(np.cov(steg, rowvar=False))
    d = scatter.shape[0]
    tau = 1e-6 * np.trace(scatter) / d
    if not np.any(delta):
        raise DegenerateTraining("class means coincide on a subspace")
    try:
        w = np.linalg.solve(scatter + tau * np.eye(d), delta)
    except np.linalg.LinAlgError as exc:
        raise DegenerateTraining("pooled scatter is singular even with ridge") from exc
    if not np.all(np.isfinite(w)):
        raise DegenerateTraining("non-finite discriminant")
    b = float(0.5 * (mu_c @ w + mu_s @ w))
    return w, b


def train_fld(cover_features, stego_features, subspace_dim: int = 100,
              learners: int = 51, seed: int = 0) -> FldEnsemble:
    """Random-subspace FLD ensemble; each learner sees ``subspace_dim``
    coordinates (fewer if the training set has fewer non-constant ones)."""
    cov = np.asarray(cover_features, dtype=np.float64)
    steg = np.asarray(stego_features, dtype=np.float64)
    if cov.ndim == 1:
        cov, steg = cov[:, None], steg[:, None]
    if len(cov) < 2 or len(steg) < 2:
        raise ValueError("need at least two examples per class")
    dim = cov.shape[1]
    if steg.shape[1] != dim:
        raise ValueError("cover and stego feature dimensions differ")
    if not 1 <= subspace_dim <= dim:
        raise ValueError("subspace dimension must be in [1, feature dim]")
    # features constant over the whole training set carry no information;
    # subspaces are drawn from the rest
    informative = np.flatnonzero(np.ptp(np.concatenate([cov, steg]), axis=0) > 0)
    if informative.size == 0:
        raise DegenerateTraining("every feature is constant over the training set")
    k = min(subspace_dim, informative.size)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(learners):
        sub = np.sort(rng.choice(informative, size=k, replace=False))
        w, b = _fld(cov[:, sub], steg[:, sub])
        out.append(FldLearner(sub, w, b))
    return FldEnsemble(out, dim, seed)


def ensemble_votes(model: FldEnsemble, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != model.dim:
        raise ValueError(f"feature dimension {f.shape[-1]} != {model.dim}")
    return np.sum([lr.vote(f) for lr in model.learners], axis=0)


def classify_ensemble(model: FldEnsemble, f: np.ndarray):
    """Majority vote; a tie counts as stego."""
    votes = ensemble_votes(model, f)
    out = (2 * votes >= len(model.learners)).astype(np.int8)
    return int(out) if out.ndim == 0 else out


def median_gamma(*sets) -> float:
    """Gaussian-kernel gamma = 1 / median squared pairwise distance."""
    pooled = np.concatenate([np.atleast_2d(s) for s in sets])
    d2 = pdist(pooled, "sqeuclidean")
    d2 = d2[d2 > 0]
    if d2.size == 0:
        return 1.0
    return 1.0 / float(np.median(d2))


def mmd(features_a, features_b, gamma: float) -> float:
    """Biased (V-statistic) MMD with k(a,b) = exp(-gamma |a-b|^2)."""
    a = np.atleast_2d(np.asarray(features_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(features_b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("MMD needs non-empty sets")
    if a.shape[1] != b.shape[1]:
        raise ValueError("feature dimensions differ")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    kaa = np.exp(-gamma * cdist(a, a, "sqeuclidean")).mean()
    kbb = np.exp(-gamma * cdist(b, b, "sqeuclidean")).mean()
    kab = np.exp(-gamma * cdist(a, b, "sqeuclidean")).mean()
    return float(np.sqrt(max(0.0, kaa + kbb - 2.0 * kab)))
