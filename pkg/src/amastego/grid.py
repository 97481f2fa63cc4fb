"""Grayscale element grids, synthetic covers and binary PGM I/O."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

MIN_SYNTH_SIZE = 16


class PgmError(ValueError):
    """Base class for PGM parse failures."""


class PgmHeaderError(PgmError):
    pass


class PgmMaxvalError(PgmError):
    pass


class PgmTruncatedError(PgmError):
    pass


class TernaryViolation(ValueError):
    """Raised when a stego differs from its cover by more than one level."""


@dataclass(eq=False)
class ElementGrid:
    elements: np.ndarray
    usable_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        el = np.asarray(self.elements)
        if el.ndim != 2 or el.size == 0:
            raise ValueError("elements must be a non-empty 2-D array")
        if el.min() < 0 or el.max() > 255:
            raise ValueError("elements must lie in [0, 255]")
        self.elements = el.astype(np.int16, copy=False)
        if self.usable_mask is None:
            self.usable_mask = np.ones(el.shape, dtype=bool)
        else:
            self.usable_mask = np.asarray(self.usable_mask, dtype=bool)
            if self.usable_mask.shape != el.shape:
                raise ValueError("usable_mask shape differs from elements")

    @property
    def height(self) -> int:
        return self.elements.shape[0]

    @property
    def width(self) -> int:
        return self.elements.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.elements.shape

    @property
    def usable_count(self) -> int:
        return int(self.usable_mask.sum())

    def with_elements(self, elements: np.ndarray) -> "ElementGrid":
        return ElementGrid(elements, self.usable_mask.copy())

    def __eq__(self, other):
        if not isinstance(other, ElementGrid):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.elements, other.elements)
                and np.array_equal(self.usable_mask, other.usable_mask))


_HEADER = re.compile(rb"\AP5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def load_pgm(data: bytes) -> ElementGrid:
    """Parse a binary (P5) 8-bit PGM."""
    if not data.startswith(b"P5"):
        raise PgmHeaderError("not a binary P5 PGM")
    m = _HEADER.match(data)
    if m is None:
        raise PgmHeaderError("malformed P5 header")
    width, height, maxval = (int(g) for g in m.groups())
    if width == 0 or height == 0:
        raise PgmHeaderError("zero image dimension")
    if maxval != 255:
        raise PgmMaxvalError(f"maxval {maxval} unsupported, need 255")
    payload = data[m.end():]
    if len(payload) < width * height:
        raise PgmTruncatedError(
            f"expected {width * height} pixel bytes, got {len(payload)}")
    pix = np.frombuffer(payload, dtype=np.uint8, count=width * height)
    return ElementGrid(pix.reshape(height, width).astype(np.int16))


def save_pgm(grid: ElementGrid) -> bytes:
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    return header + grid.elements.astype(np.uint8).tobytes()


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def synth_cover(height: int, width: int, seed: int, smoothness: float) -> ElementGrid:
    """Box-smoothed Gaussian noise rescaled to the full 8-bit range.

    The box radius is ``round(smoothness)``; borders are handled by
    symmetric reflection.
    """
    if height < MIN_SYNTH_SIZE or width < MIN_SYNTH_SIZE:
        raise ValueError(f"synthetic covers must be at least {MIN_SYNTH_SIZE}x{MIN_SYNTH_SIZE}")
    if smoothness < 0:
        raise ValueError("smoothness must be non-negative")
    rng = np.random.default_rng(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    noise = rng.standard_normal((height, width))
    radius = int(round_half_away(np.float64(smoothness)))
    field_ = uniform_filter(noise, size=2 * radius + 1, mode="reflect") if radius else noise
    lo, hi = field_.min(), field_.max()
    if hi == lo:
        return ElementGrid(np.full((height, width), 128, dtype=np.int16))
    scaled = (field_ - lo) / (hi - lo) * 255.0
    return ElementGrid(round_half_away(scaled).astype(np.int16))


def diff(cover: ElementGrid, stego: ElementGrid) -> np.ndarray:
    """Ternary modification map ``stego - cover``."""
    if cover.shape != stego.shape:
        raise ValueError(f"shape mismatch: {cover.shape} vs {stego.shape}")
    m = stego.elements.astype(np.int16) - cover.elements.astype(np.int16)
    if np.abs(m).max(initial=0) > 1:
        raise TernaryViolation("stego differs from cover by more than 1")
    return m.astype(np.int8)


def apply_modifications(cover: ElementGrid, modmap: np.ndarray) -> ElementGrid:
    return cover.with_elements(cover.elements + modmap.astype(np.int16))
