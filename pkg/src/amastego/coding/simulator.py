"""Optimal embedding simulator for ternary (+-1) embedding.

Each usable element changes by +1 / -1 with Gibbs probabilities
exp(-lambda*rho) / Z; lambda is tuned so the total ternary entropy equals
the requested payload.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..cost import CostMap
from ..grid import ElementGrid

log = logging.getLogger(__name__)

LN2 = np.log(2.0)
TOL_PER_ELEMENT = 1e-6
MAX_BISECTIONS = 200


class PayloadTooLarge(ValueError):
    pass


class LambdaNotConverged(RuntimeError):
    pass


@dataclass
class ModProbabilities:
    p_plus: np.ndarray
    p_minus: np.ndarray

    @property
    def p_zero(self) -> np.ndarray:
        return 1.0 - self.p_plus - self.p_minus


def _log_probs(cost: CostMap, lam: float):
    """Log-probabilities of (+1, -1, 0) with wet directions forced to -inf."""
    with np.errstate(divide="ignore"):
        lp = np.where(cost.wet_plus, -np.inf, -lam * cost.rho_plus)
        lm = np.where(cost.wet_minus, -np.inf, -lam * cost.rho_minus)
    log_z = np.logaddexp(np.logaddexp(lp, lm), 0.0)
    return lp - log_z, lm - log_z, -log_z


def ternary_probs(cost: CostMap, lam: float) -> ModProbabilities:
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    # ratio of max-shifted exponentials, so lambda = 0 gives exactly 1/3
    with np.errstate(divide="ignore"):
        ap = np.where(cost.wet_plus, -np.inf, -lam * cost.rho_plus)
        am = np.where(cost.wet_minus, -np.inf, -lam * cost.rho_minus)
    top = np.maximum(np.maximum(ap, am), 0.0)
    ep, em, e0 = np.exp(ap - top), np.exp(am - top), np.exp(-top)
    z = ep + em + e0
    return ModProbabilities(ep / z, em / z)


def _entropy_terms(lp, lm, l0) -> np.ndarray:
    out = np.zeros(lp.shape)
    for logp in (lp, lm, l0):
        finite = np.isfinite(logp)
        out[finite] -= np.exp(logp[finite]) * logp[finite]
    return out / LN2


def payload_entropy(probs: ModProbabilities, usable_mask: np.ndarray | None = None) -> float:
    """Ternary entropy in bits summed over usable elements (0 log 0 = 0)."""
    total = np.zeros(probs.p_plus.shape)
    for p in (probs.p_plus, probs.p_minus, probs.p_zero):
        p = np.clip(p, 0.0, 1.0)
        nz = p > 0
        total[nz] -= p[nz] * np.log2(p[nz])
    if usable_mask is not None:
        total = total[np.asarray(usable_mask, dtype=bool)]
    return float(total.sum())


def _entropy_at(cost: CostMap, mask: np.ndarray, lam: float) -> float:
    return float(_entropy_terms(*_log_probs(cost, lam))[mask].sum())


def max_entropy(cost: CostMap, usable_mask: np.ndarray) -> float:
    return _entropy_at(cost, np.asarray(usable_mask, dtype=bool), 0.0)


def solve_lambda(cost: CostMap, usable_mask: np.ndarray, target_bits: float) -> float:
    """Bisection for the multiplier lambda giving ``target_bits`` of entropy."""
    mask = np.asarray(usable_mask, dtype=bool)
    n = int(mask.sum())
    tol = TOL_PER_ELEMENT * max(n, 1)
    if target_bits <= 0:
        raise ValueError("target payload must be positive")
    h_max = _entropy_at(cost, mask, 0.0)
    if target_bits > h_max + tol:
        raise PayloadTooLarge(f"target {target_bits:.3f} bits exceeds maximum {h_max:.3f}")
    if abs(h_max - target_bits) <= tol:
        return 0.0

    lo, hi = 0.0, 1.0
    while _entropy_at(cost, mask, hi) >= target_bits:
        lo, hi = hi, hi * 2
        if hi > 1e300:
            raise LambdaNotConverged("could not bracket lambda")
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        h = _entropy_at(cost, mask, mid)
        if abs(h - target_bits) <= tol:
            return mid
        if h > target_bits:
            lo = mid
        else:
            hi = mid
    raise LambdaNotConverged(f"no lambda within tolerance after {MAX_BISECTIONS} steps")


def sample_modifications(probs: ModProbabilities, usable_mask: np.ndarray,
                         rng: np.random.Generator) -> np.ndarray:
    u = rng.random(probs.p_plus.shape)
    m = np.zeros(u.shape, dtype=np.int8)
    m[u < probs.p_plus] = 1
    m[(u >= probs.p_plus) & (u < probs.p_plus + probs.p_minus)] = -1
    m[~np.asarray(usable_mask, dtype=bool)] = 0
    return m


def simulate_embedding(grid: ElementGrid, cost: CostMap, target_bits: float,
                       rng_seed=None, *, mask: np.ndarray | None = None,
                       rng: np.random.Generator | None = None) -> ElementGrid:
    """Sample a stego image from the payload-constrained Gibbs distribution.

    ``mask`` restricts embedding to a subset of the usable elements; ``rng``
    overrides ``rng_seed`` when the caller threads one generator through
    several phases.
    """
    sel = grid.usable_mask if mask is None else (grid.usable_mask & mask)
    if rng is None:
        rng = np.random.default_rng(rng_seed)
    if target_bits <= 0 or not sel.any():
        # still consume the draw so downstream phases see a stable stream
        rng.random(grid.shape)
        return grid.with_elements(grid.elements.copy())
    lam = solve_lambda(cost, sel, target_bits)
    probs = ternary_probs(cost, lam)
    m = sample_modifications(probs, sel, rng)
    return grid.with_elements(grid.elements + m)
