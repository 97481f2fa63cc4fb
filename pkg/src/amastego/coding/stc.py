"""Binary syndrome-trellis code on the LSB layer.

The parity-check matrix H (m x n) is built from a small h x w sub-matrix
placed along the diagonal, shifted down one row per message bit. Block
``b`` covers ``widths[b]`` consecutive elements (widths spread ``n`` as
evenly as possible over ``m`` blocks); element ``j`` of a block uses
sub-matrix column ``j mod w``. The message is the syndrome ``H @ lsb``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..cost import CostMap
from ..grid import ElementGrid

DEFAULT_HEIGHT = 7


class StcError(ValueError):
    pass


class MessageTooLong(StcError):
    pass


class StcInfeasible(StcError):
    pass


@dataclass(frozen=True)
class StcParams:
    constraint_height: int
    columns: tuple[int, ...]
    payload_rate: Fraction

    def __post_init__(self):
        h = self.constraint_height
        if not 1 <= h <= 12:
            raise ValueError("constraint height must be in [1, 12]")
        if not self.columns:
            raise ValueError("sub-matrix needs at least one column")
        if any(c <= 0 or c >> h for c in self.columns):
            raise ValueError("each column must be a non-zero h-bit pattern")
        rows_used = 0
        for c in self.columns:
            rows_used |= c
        if not (rows_used & 1 and rows_used >> (h - 1) & 1):
            raise ValueError("first and last rows of the sub-matrix must be non-zero")
        rate = Fraction(self.payload_rate)
        if not 0 < rate <= 1:
            raise ValueError("payload rate must be in (0, 1]")
        object.__setattr__(self, "payload_rate", rate)

    @classmethod
    def generate(cls, width: int, height: int = DEFAULT_HEIGHT, seed: int = 0,
                 rate: Fraction | None = None) -> "StcParams":
        """Random sub-matrix whose columns all have their top and bottom bits set."""
        rng = np.random.default_rng(seed)
        edge = 1 | (1 << (height - 1))
        cols = tuple(int(edge | int(rng.integers(0, 1 << height))) for _ in range(width))
        return cls(height, cols, Fraction(1, width) if rate is None else rate)

    @classmethod
    def for_payload(cls, n: int, m: int, height: int = DEFAULT_HEIGHT, seed: int = 0) -> "StcParams":
        width = max(1, -(-n // max(m, 1)))
        return cls.generate(width, height, seed, rate=Fraction(max(m, 1), n))

    def to_text(self) -> str:
        cols = ",".join(format(c, "x") for c in self.columns)
        return f"h={self.constraint_height};cols={cols};rate={self.payload_rate.numerator}/{self.payload_rate.denominator}"

    @classmethod
    def from_text(cls, text: str) -> "StcParams":
        m = re.fullmatch(r"\s*h=(\d+);cols=([0-9a-fA-F,]+);rate=(\d+)/(\d+)\s*", text)
        if m is None:
            raise ValueError(f"bad StcParams text: {text!r}")
        cols = tuple(int(c, 16) for c in m.group(2).split(","))
        return cls(int(m.group(1)), cols, Fraction(int(m.group(3)), int(m.group(4))))


def block_widths(n: int, m: int) -> np.ndarray:
    edges = (np.arange(m + 1, dtype=np.int64) * n) // m
    return np.diff(edges)


def _element_layout(params: StcParams, n: int, m: int):
    """Per element: block index and (row-truncated) column pattern."""
    widths = block_widths(n, m)
    block = np.repeat(np.arange(m), widths)
    start = np.concatenate(([0], np.cumsum(widths)[:-1]))
    within = np.arange(n) - start[block]
    w = len(params.columns)
    cols = np.asarray(params.columns, dtype=np.int64)[within % w]
    remaining = m - block  # rows still inside H below the block's top row
    keep = np.where(remaining >= params.constraint_height,
                    (1 << params.constraint_height) - 1,
                    (1 << np.minimum(remaining, params.constraint_height)) - 1)
    return block, cols & keep, widths


def _check_lengths(params: StcParams, n: int, m: int):
    if m < 0:
        raise StcError("negative message length")
    if n == 0 and m > 0:
        raise MessageTooLong("no usable elements")
    if m > params.payload_rate * n:
        raise MessageTooLong(f"{m} bits exceed rate {params.payload_rate} x {n} elements")


def syndrome(lsb: np.ndarray, params: StcParams, m: int) -> np.ndarray:
    """H @ lsb over GF(2) for the code layout of length ``len(lsb)``."""
    n = len(lsb)
    if m == 0:
        return np.zeros(0, dtype=np.uint8)
    block, cols, _ = _element_layout(params, n, m)
    out = np.zeros(m, dtype=np.uint8)
    for j in np.flatnonzero(np.asarray(lsb) & 1):
        c, b = int(cols[j]), int(block[j])
        i = 0
        while c:
            if c & 1:
                out[b + i] ^= 1
            c >>= 1
            i += 1
    return out


def flip_costs(values: np.ndarray, cost_plus: np.ndarray, cost_minus: np.ndarray, wet: float):
    """Cost of changing an element's LSB and the direction (+1/-1) used."""
    cp = np.where(values >= 255, np.inf, cost_plus)
    cm = np.where(values <= 0, np.inf, cost_minus)
    cp = np.where(cp >= wet, np.inf, cp)
    cm = np.where(cm >= wet, np.inf, cm)
    direction = np.where(cp <= cm, 1, -1).astype(np.int8)
    return np.minimum(cp, cm), direction


def viterbi(lsb: np.ndarray, flip: np.ndarray, message: np.ndarray, params: StcParams,
            m: int, start: int = 0, stop: int | None = None, init_state: int | None = None):
    """Minimum-cost stego LSBs for elements ``start:stop`` of the code.

    Rows of H completed inside the segment are forced to the message bits;
    rows still open at ``stop`` are left free. ``init_state`` is the partial
    syndrome of the open rows at ``start`` (None means 0 at the code start).
    Returns (y_segment, final_state, cost).
    """
    n = len(lsb)
    stop = n if stop is None else stop
    h = params.constraint_height
    S = 1 << h
    block, cols, widths = _element_layout(params, n, m)
    block_end = np.cumsum(widths)  # exclusive end index per block

    cost = np.full(S, np.inf)
    cost[0 if init_state is None else init_state] = 0.0
    seg = stop - start
    took_one = np.zeros((seg, S), dtype=bool)
    shifts = []  # (position after element, message bit) for traceback
    states = np.arange(S)
    half = S >> 1
    for t, j in enumerate(range(start, stop)):
        c = int(cols[j])
        x = int(lsb[j]) & 1
        fc = float(flip[j])
        # y=0 costs fc when cover LSB is 1; y=1 costs fc when cover LSB is 0
        c0 = fc if x else 0.0
        c1 = 0.0 if x else fc
        via0 = cost + c0
        via1 = cost[states ^ c] + c1
        choose1 = via1 < via0
        took_one[t] = choose1
        cost = np.where(choose1, via1, via0)
        b = int(block[j])
        if j + 1 == block_end[b]:
            bit = int(message[b])
            nxt = np.full(S, np.inf)
            nxt[:half] = cost[(np.arange(half) << 1) | bit]
            cost = nxt
            shifts.append((t, bit))
    best = int(np.argmin(cost))
    total = float(cost[best])
    if not np.isfinite(total):
        raise StcInfeasible("no finite-cost path; too many wet elements in a window")

    y = np.zeros(seg, dtype=np.uint8)
    state = best
    shift_at = {t: bit for t, bit in shifts}
    for t in range(seg - 1, -1, -1):
        if t in shift_at:
            state = ((state << 1) | shift_at[t]) & (S - 1)
        if took_one[t, state]:
            y[t] = 1
            state ^= int(cols[start + t])
    return y, best, total


def usable_order(grid: ElementGrid, order: np.ndarray) -> np.ndarray:
    order = np.asarray(order, dtype=np.intp)
    flat_mask = grid.usable_mask.ravel()
    return order[flat_mask[order]]


def _validate_order(order: np.ndarray, grid: ElementGrid):
    usable = np.flatnonzero(grid.usable_mask.ravel())
    if len(order) != len(usable) or not np.array_equal(np.sort(order), usable):
        raise StcError("order must be a permutation of the usable element indices")


def stc_embed(grid: ElementGrid, cost: CostMap, message, params: StcParams,
              order: np.ndarray) -> ElementGrid:
    message = np.asarray(message, dtype=np.uint8)
    order = np.asarray(order, dtype=np.intp)
    _validate_order(order, grid)
    return embed_segments(grid, [(cost, len(order))], message, params, order)


def embed_segments(grid: ElementGrid, segments, message, params: StcParams,
                   order: np.ndarray) -> ElementGrid:
    """Embed ``message`` over ``order`` in consecutive segments.

    ``segments`` is a list of (CostMap, segment_length). Each segment is
    coded with its own costs after the previous segment has been fixed, so
    later segments see the true partial syndrome of earlier ones. The
    result extracts with plain :func:`stc_extract` over the whole order.
    """
    message = np.asarray(message, dtype=np.uint8)
    n, m = len(order), len(message)
    _check_lengths(params, n, m)
    if sum(length for _, length in segments) != n:
        raise StcError("segment lengths must add up to the order length")
    flat = grid.elements.ravel().astype(np.int16)
    values = flat[order]
    lsb = (values & 1).astype(np.uint8)
    out = flat.copy()
    if m == 0:
        return grid.with_elements(out.reshape(grid.shape))

    flips = []
    dirs = []
    for cost, _ in segments:
        f, d = flip_costs(values, cost.rho_plus.ravel()[order], cost.rho_minus.ravel()[order], cost.wet_value)
        flips.append(f)
        dirs.append(d)

    start = 0
    state = None
    for k, (_, length) in enumerate(segments):
        stop = start + length
        if length == 0:
            continue
        y, state, _ = viterbi(lsb, flips[k], message, params, m, start, stop, state)
        changed = np.flatnonzero(y != lsb[start:stop])
        idx = order[start + changed]
        out[idx] += dirs[k][start + changed]
        start = stop
    return grid.with_elements(out.reshape(grid.shape))


def stc_extract(stego: ElementGrid, params: StcParams, order: np.ndarray,
                message_len: int) -> np.ndarray:
    order = np.asarray(order, dtype=np.intp)
    _check_lengths(params, len(order), message_len)
    lsb = (stego.elements.ravel()[order] & 1).astype(np.uint8)
    return syndrome(lsb, params, message_len)
