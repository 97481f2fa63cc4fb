"""Embedding costs: HILL-style baseline, gradient-driven asymmetric
adjustment, and additive distortion."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.ndimage import correlate, uniform_filter

from .grid import ElementGrid, diff
from .planes import dump_planes, load_planes

WET_VALUE = 1e10
EPS = 1e-10

HIGH_PASS = np.array([[-1, 2, -1],
                      [2, -4, 2],
                      [-1, 2, -1]], dtype=np.float64) / 4.0


class AdjustMode(str, Enum):
    INVERSE_SIGN = "inverse-sign"
    SAME_SIGN = "same-sign"


@dataclass(eq=False)
class CostMap:
    rho_plus: np.ndarray
    rho_minus: np.ndarray
    wet_value: float = WET_VALUE

    def __post_init__(self):
        self.rho_plus = np.asarray(self.rho_plus, dtype=np.float64)
        self.rho_minus = np.asarray(self.rho_minus, dtype=np.float64)
        if self.rho_plus.shape != self.rho_minus.shape:
            raise ValueError("rho_plus and rho_minus shapes differ")
        for plane in (self.rho_plus, self.rho_minus):
            if not np.all(np.isfinite(plane)) or np.any(plane < 0):
                raise ValueError("costs must be finite and non-negative")

    @property
    def shape(self):
        return self.rho_plus.shape

    @property
    def wet_plus(self) -> np.ndarray:
        return self.rho_plus >= self.wet_value

    @property
    def wet_minus(self) -> np.ndarray:
        return self.rho_minus >= self.wet_value

    def copy(self) -> "CostMap":
        return CostMap(self.rho_plus.copy(), self.rho_minus.copy(), self.wet_value)

    def to_bytes(self) -> bytes:
        return dump_planes(self.rho_plus, self.rho_minus)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CostMap":
        planes = load_planes(data)
        if len(planes) != 2:
            raise ValueError(f"cost dump needs 2 planes, found {len(planes)}")
        return cls(planes[0], planes[1])


def baseline_costs(grid: ElementGrid) -> CostMap:
    """Symmetric HILL-style costs with dynamic-range clamping.

    rho = 1 / (avg15(avg3(|KB * X|)) + eps), all filters with symmetric
    (half-sample) mirror padding.
    """
    x = grid.elements.astype(np.float64)
    residual = np.abs(correlate(x, HIGH_PASS, mode="reflect"))
    smoothed = uniform_filter(uniform_filter(residual, 3, mode="reflect"), 15, mode="reflect")
    rho = 1.0 / (smoothed + EPS)
    rho = np.minimum(rho, WET_VALUE)
    rho_plus = rho.copy()
    rho_minus = rho.copy()
    rho_plus[grid.elements == 255] = WET_VALUE
    rho_minus[grid.elements == 0] = WET_VALUE
    return CostMap(rho_plus, rho_minus)


def adjust_costs(cost: CostMap, grad: np.ndarray, alpha: float = 2.0,
                 mode: AdjustMode | str = AdjustMode.INVERSE_SIGN,
                 adjustable: np.ndarray | None = None) -> CostMap:
    """Scale costs asymmetrically by the sign of the loss gradient.

    In inverse-sign mode a negative gradient makes +1 cheaper (rho+/alpha)
    and -1 dearer (rho-*alpha); a positive gradient does the opposite.
    Same-sign mode swaps the two branches. ``adjustable`` is a boolean mask
    or flat index array; wet entries are never scaled.
    """
    if not alpha > 1:
        raise ValueError("alpha must be > 1")
    mode = AdjustMode(mode)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != cost.shape:
        raise ValueError("gradient and cost shapes differ")
    sel = _as_mask(adjustable, cost.shape)

    sign = np.sign(grad)
    if mode is AdjustMode.SAME_SIGN:
        sign = -sign
    # factor applied to rho+: alpha**sign; rho- gets the reciprocal
    up = np.ones(cost.shape)
    up[sign > 0] = alpha
    up[sign < 0] = 1.0 / alpha
    down = np.ones(cost.shape)
    down[sign > 0] = 1.0 / alpha
    down[sign < 0] = alpha

    rp, rm = cost.rho_plus.copy(), cost.rho_minus.copy()
    pm = sel & ~cost.wet_plus
    mm = sel & ~cost.wet_minus
    rp[pm] *= up[pm]
    rm[mm] *= down[mm]
    # a scaled-up cost must not turn into a wet marker
    np.minimum(rp, np.where(cost.wet_plus, rp, np.nextafter(cost.wet_value, 0)), out=rp)
    np.minimum(rm, np.where(cost.wet_minus, rm, np.nextafter(cost.wet_value, 0)), out=rm)
    return CostMap(rp, rm, cost.wet_value)


def _as_mask(adjustable, shape) -> np.ndarray:
    if adjustable is None:
        return np.ones(shape, dtype=bool)
    adjustable = np.asarray(adjustable)
    if adjustable.dtype == bool:
        if adjustable.shape != shape:
            raise ValueError("adjustable mask shape differs from costs")
        return adjustable
    mask = np.zeros(int(np.prod(shape)), dtype=bool)
    mask[adjustable.astype(np.intp)] = True
    return mask.reshape(shape)


def distortion(cover: ElementGrid, stego: ElementGrid, cost: CostMap) -> float:
    m = diff(cover, stego)
    return float(cost.rho_plus[m == 1].sum() + cost.rho_minus[m == -1].sum())
