from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

CSV_COLUMNS = ("scheme", "payload", "steganalyzer", "p_fa", "p_md", "p_e", "n")


@dataclass(frozen=True)
class MetricsRecord:
    p_fa: float
    p_md: float
    n_cover: int
    n_stego: int

    @property
    def p_e(self) -> float:
        return (self.p_md + self.p_fa) / 2


def error_rates(cover_decisions, stego_decisions) -> MetricsRecord:
    """Rates from 0/1 decisions (1 = stego) on cover and stego test sets."""
    dc = np.asarray(cover_decisions)
    ds = np.asarray(stego_decisions)
    if dc.size == 0 or ds.size == 0:
        raise ValueError("evaluation needs non-empty cover and stego sets")
    p_fa = float(np.count_nonzero(dc == 1)) / dc.size
    p_md = float(np.count_nonzero(ds == 0)) / ds.size
    return MetricsRecord(p_fa, p_md, int(dc.size), int(ds.size))


def evaluate(classifier: Callable, cover_set: Sequence, stego_set: Sequence) -> MetricsRecord:
    """``classifier`` maps one item to 0 (cover) or 1 (stego)."""
    if len(cover_set) == 0 or len(stego_set) == 0:
        raise ValueError("evaluation needs non-empty cover and stego sets")
    return error_rates([classifier(x) for x in cover_set], [classifier(x) for x in stego_set])


@dataclass(frozen=True)
class ReportRow:
    scheme: str
    payload: float
    steganalyzer: str
    metrics: MetricsRecord

    def cells(self) -> list[str]:
        m = self.metrics
        return [self.scheme, f"{self.payload:.2f}", self.steganalyzer,
                f"{m.p_fa:.6f}", f"{m.p_md:.6f}", f"{m.p_e:.6f}", str(m.n_cover + m.n_stego)]


def rows_to_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def find(rows: Sequence[ReportRow], scheme: str, steganalyzer: str, payload: float | None = None) -> MetricsRecord:
    for r in rows:
        if r.scheme == scheme and r.steganalyzer == steganalyzer and (
                payload is None or abs(r.payload - payload) < 1e-9):
            return r.metrics
    raise KeyError((scheme, steganalyzer, payload))
