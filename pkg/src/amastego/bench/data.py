"""Synthetic cover sets, seed derivation and disjoint splits."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..grid import ElementGrid, load_pgm, save_pgm, synth_cover


class SplitOverlap(RuntimeError):
    pass


def _words(p) -> list[int]:
    if isinstance(p, str):
        return [zlib.crc32(p.encode())]
    if isinstance(p, float):
        p = round(p * 1_000_000)
    p = int(p) % 2**64
    return [p & 0xFFFFFFFF, p >> 32]


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from a tuple of ints / floats / strings."""
    words = [w for p in parts for w in _words(p)]
    state = np.random.SeedSequence(words).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) & 0x7FFFFFFF) << 32


def synth_cover_set(count: int, size: int, seed: int, smoothness: tuple[float, float]) -> list[ElementGrid]:
    lo, hi = smoothness
    out = []
    for i in range(count):
        s = np.random.default_rng(derive_seed(seed, "smooth", i)).uniform(lo, hi)
        out.append(synth_cover(size, size, derive_seed(seed, "cover", i), s))
    return out


@dataclass
class SplitPlan:
    subsets: dict[str, np.ndarray] = field(default_factory=dict)
    total: int = 0

    @classmethod
    def standard(cls, total: int, n_c0: int, n_trn: int, n_tst: int, seed: int) -> "SplitPlan":
        if n_c0 + n_trn + n_tst > total:
            raise ValueError("split sizes exceed the cover count")
        perm = np.random.default_rng(derive_seed(seed, "split")).permutation(total)
        plan = cls({
            "C0": np.sort(perm[:n_c0]),
            "C1trn": np.sort(perm[n_c0:n_c0 + n_trn]),
            "C1tst": np.sort(perm[n_c0 + n_trn:n_c0 + n_trn + n_tst]),
        }, total)
        plan.audit()
        return plan

    def audit(self):
        seen: dict[int, str] = {}
        for name, idx in self.subsets.items():
            if len(np.unique(idx)) != len(idx):
                raise SplitOverlap(f"{name} repeats an index")
            if len(idx) and (idx.min() < 0 or idx.max() >= self.total):
                raise SplitOverlap(f"{name} indexes outside the cover set")
            for i in idx.tolist():
                if i in seen:
                    raise SplitOverlap(f"cover {i} is in both {seen[i]} and {name}")
                seen[i] = name

    def __getitem__(self, name: str) -> np.ndarray:
        return self.subsets[name]


def write_pgm_dir(grids, directory: Path, prefix: str = "") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, g in enumerate(grids):
        p = directory / f"{prefix}{i:05d}.pgm"
        p.write_bytes(save_pgm(g))
        paths.append(p)
    return paths


def read_pgm_dir(directory: Path) -> list[ElementGrid]:
    paths = sorted(Path(directory).glob("*.pgm"))
    return [load_pgm(p.read_bytes()) for p in paths]
