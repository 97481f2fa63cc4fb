"""Security experiments: adversary-unaware / -aware evaluation, the
iterative game, ablations and supplementary statistics.

All artefacts (stego sets, trained models) are memoised on an
:class:`Experiment`, so experiments sharing a configuration and seed reuse
the same intermediate results; e.g. round 1 of the game is the unaware and
aware evaluations.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .. import cnn
from ..ama import AmaConfig, AmaResult, ama_embed, beta_grid, conventional_embed
from ..cost import baseline_costs
from ..features import (classify_ensemble, extract_features, median_gamma, mmd,
                        train_fld)
from ..grid import ElementGrid
from .config import ExperimentConfig
from .data import SplitPlan, derive_seed, synth_cover_set
from .metrics import MetricsRecord, ReportRow, error_rates

log = logging.getLogger(__name__)


class Experiment:
    def __init__(self, config: ExperimentConfig):
        self.config = config.validate()
        c = config
        self.covers = synth_cover_set(c.n_covers, c.size, c.seed, (c.smoothness_min, c.smoothness_max))
        self.splits = SplitPlan.standard(c.n_covers, c.n_c0, c.n_trn, c.n_tst, c.seed)
        self._stegos: dict = {}
        self._ama: dict = {}
        self._cnn: dict = {}
        self._fld: dict = {}
        self._features: dict = {}

    # ------------------------------------------------------------- images
    def cover_set(self, name: str) -> list[ElementGrid]:
        return [self.covers[i] for i in self.splits[name]]

    def bits(self, payload: float) -> float:
        return payload * self.config.size * self.config.size

    def _key(self, index: int) -> int | None:
        return None if self.config.fixed_order else derive_seed(self.config.seed, "key", int(index))

    def _embed_seed(self, payload: float, index: int) -> int:
        return derive_seed(self.config.seed, "embed", float(payload), int(index))

    def conventional(self, name: str, payload: float) -> list[ElementGrid]:
        key = (name, payload)
        if key not in self._stegos:
            log.info("conventional stego: %s @ %.2f", name, payload)
            self._stegos[key] = [
                conventional_embed(self.covers[i], self.bits(payload), baseline_costs,
                                   self.config.coder, self._key(i), self._embed_seed(payload, i))
                for i in self.splits[name]]
        return self._stegos[key]

    def adversarial(self, name: str, payload: float, target: tuple, mode: str = "inverse-sign",
                    fixed_beta: float | None = None) -> list[AmaResult]:
        key = (name, payload, target, mode, fixed_beta)
        if key not in self._ama:
            model = self.model(target)
            log.info("AMA stego: %s @ %.2f against %s (%s %s)", name, payload, target, mode,
                     "" if fixed_beta is None else fixed_beta)
            out = []
            for i in self.splits[name]:
                cfg = AmaConfig(alpha=self.config.alpha, delta_beta=self.config.delta_beta,
                                mode=mode, fixed_beta=fixed_beta, coder=self.config.coder,
                                key=self._key(i), seed=self._embed_seed(payload, i))
                out.append(ama_embed(self.covers[i], self.bits(payload), model, cfg))
            self._ama[key] = out
        return self._ama[key]

    def stego_images(self, name: str, payload: float, source: tuple) -> list[ElementGrid]:
        """``source`` is ("conventional",) or ("ama", target, mode, fixed_beta)."""
        if source[0] == "conventional":
            return self.conventional(name, payload)
        _, target, mode, fixed_beta = source
        return [r.stego for r in self.adversarial(name, payload, target, mode, fixed_beta)]

    # ------------------------------------------------------------- models
    def model(self, spec: tuple) -> cnn.ClassifierModel:
        """CNN trained on (cover set, its stego set from ``source``).

        ``spec`` = (cover set name, payload, source).
        """
        if spec not in self._cnn:
            name, payload, source = spec
            c = self.config
            hyper = cnn.TrainParams(learning_rate=c.learning_rate, momentum=c.momentum,
                                    batch_size=c.batch_size, iterations=c.iterations)
            log.info("training CNN on %s", spec)
            self._cnn[spec] = cnn.train(self.cover_set(name), self.stego_images(name, payload, source),
                                        hyper, seed=derive_seed(c.seed, "cnn", repr(spec)))
        return self._cnn[spec]

    def model_digests(self) -> dict[str, str]:
        """sha256 of every CNN trained so far, keyed by its training spec."""
        return {repr(spec): m.digest() for spec, m in sorted(self._cnn.items(), key=lambda kv: repr(kv[0]))}

    def features(self, images_key: tuple, images: list[ElementGrid]) -> np.ndarray:
        if images_key not in self._features:
            self._features[images_key] = np.stack([extract_features(g) for g in images])
        return self._features[images_key]

    def cover_features(self, name: str) -> np.ndarray:
        return self.features(("cover", name), self.cover_set(name))

    def stego_features(self, name: str, payload: float, source: tuple) -> np.ndarray:
        return self.features(("stego", name, payload, source), self.stego_images(name, payload, source))

    def fld(self, spec: tuple):
        if spec not in self._fld:
            name, payload, source = spec
            c = self.config
            dim = min(c.subspace_dim, 686)
            self._fld[spec] = train_fld(self.cover_features(name),
                                        self.stego_features(name, payload, source),
                                        dim, c.learners, derive_seed(c.seed, "fld", repr(spec)))
        return self._fld[spec]

    # --------------------------------------------------------- evaluation
    def eval_cnn(self, model_spec: tuple, test: str, payload: float, source: tuple) -> MetricsRecord:
        model = self.model(model_spec)
        dc = cnn.classify(model, self.cover_set(test))
        ds = cnn.classify(model, self.stego_images(test, payload, source))
        return error_rates(dc, ds)

    def eval_fld(self, model_spec: tuple, test: str, payload: float, source: tuple) -> MetricsRecord:
        model = self.fld(model_spec)
        dc = classify_ensemble(model, self.cover_features(test))
        ds = classify_ensemble(model, self.stego_features(test, payload, source))
        return error_rates(dc, ds)


CONVENTIONAL = ("conventional",)


def targeted_spec(payload: float) -> tuple:
    return ("C0", payload, CONVENTIONAL)


def ama_source(target: tuple, mode: str = "inverse-sign", fixed_beta: float | None = None) -> tuple:
    return ("ama", target, mode, fixed_beta)


def run_unaware(exp: Experiment, payloads=None) -> list[ReportRow]:
    payloads = exp.config.payloads if payloads is None else payloads
    rows = []
    for p in payloads:
        target = targeted_spec(p)
        adv = ama_source(target)
        conv_cnn = exp.eval_cnn(target, "C1tst", p, CONVENTIONAL)
        ama_cnn = exp.eval_cnn(target, "C1tst", p, adv)
        if conv_cnn.p_fa != ama_cnn.p_fa:
            raise AssertionError("targeted P_fa must not depend on the stego scheme")
        rows += [ReportRow("conventional", p, "cnn", conv_cnn), ReportRow("ama", p, "cnn", ama_cnn)]
        rows += [ReportRow("conventional", p, "fld", exp.eval_fld(target, "C1tst", p, CONVENTIONAL)),
                 ReportRow("ama", p, "fld", exp.eval_fld(target, "C1tst", p, adv))]
    return rows


def run_aware(exp: Experiment, payloads=None) -> list[ReportRow]:
    payloads = exp.config.payloads if payloads is None else payloads
    exp.splits.audit()
    rows = []
    for p in payloads:
        adv = ama_source(targeted_spec(p))
        for scheme, source in (("conventional", CONVENTIONAL), ("ama", adv)):
            spec = ("C1trn", p, source)
            rows.append(ReportRow(scheme, p, "cnn-aware", exp.eval_cnn(spec, "C1tst", p, source)))
            rows.append(ReportRow(scheme, p, "fld-aware", exp.eval_fld(spec, "C1tst", p, source)))
    return rows


@dataclass
class GameRound:
    index: int
    unaware: MetricsRecord
    aware: MetricsRecord
    unaware_spec: tuple = field(repr=False, default=())


def run_game(exp: Experiment, rounds: int | None = None, payload: float | None = None) -> list[GameRound]:
    rounds = exp.config.rounds if rounds is None else rounds
    if rounds < 1:
        raise ValueError("need at least one round")
    p = exp.config.payload if payload is None else payload
    out = []
    unaware_spec = targeted_spec(p)
    for r in range(1, rounds + 1):
        adv = ama_source(unaware_spec)
        aware_spec = ("C1trn", p, adv)
        out.append(GameRound(r, exp.eval_cnn(unaware_spec, "C1tst", p, adv),
                             exp.eval_cnn(aware_spec, "C1tst", p, adv), unaware_spec))
        # next round's unaware steganalyst learns this round's adversarial stego on C0
        unaware_spec = ("C0", p, adv)
    return out


def game_rows(rounds: list[GameRound], payload: float) -> list[ReportRow]:
    rows = []
    for g in rounds:
        rows.append(ReportRow(f"ama-r{g.index}", payload, "cnn-unaware", g.unaware))
        rows.append(ReportRow(f"ama-r{g.index}", payload, "cnn-aware", g.aware))
    return rows


def run_ablations(exp: Experiment, payload: float | None = None) -> list[ReportRow]:
    p = exp.config.payload if payload is None else payload
    target = targeted_spec(p)
    variants = [("ama", ama_source(target)), ("case1", ama_source(target, "same-sign"))]
    variants += [(f"case2-b{b:g}", ama_source(target, "fixed-beta", float(b)))
                 for b in exp.config.case2_betas]
    rows = []
    for scheme, source in variants:
        rows.append(ReportRow(scheme, p, "cnn", exp.eval_cnn(target, "C1tst", p, source)))
        if exp.config.ablation_aware:
            rows.append(ReportRow(scheme, p, "cnn-aware",
                                  exp.eval_cnn(("C1trn", p, source), "C1tst", p, source)))
    return rows


@dataclass
class StatsReport:
    beta_hist: dict  # payload -> {label: percent}
    modification_rate: dict  # payload -> {scheme: mean rate}
    mmd: dict  # payload -> {"gamma": g, "conventional": v, "ama": v}
    beta_labels: list


def beta_label(beta) -> str:
    return "fail" if beta is None else f"{beta:g}"


def run_stats(exp: Experiment, payloads=None) -> StatsReport:
    payloads = exp.config.payloads if payloads is None else payloads
    labels = [beta_label(b) for b in beta_grid(exp.config.delta_beta)] + ["fail"]
    hist, rates, dist = {}, {}, {}
    usable = float(exp.config.size ** 2)
    for p in payloads:
        adv = ama_source(targeted_spec(p))
        results = exp.adversarial("C1tst", p, targeted_spec(p))
        counts = Counter(beta_label(r.beta_used) for r in results)
        hist[p] = {lab: 100.0 * counts.get(lab, 0) / len(results) for lab in labels}
        covers = exp.cover_set("C1tst")
        conv = exp.conventional("C1tst", p)
        rates[p] = {
            "conventional": float(np.mean([np.count_nonzero(s.elements != c.elements) / usable
                                           for c, s in zip(covers, conv)])),
            "ama": float(np.mean([r.change_count / usable for r in results])),
        }
        fc = exp.cover_features("C1tst")
        fs = exp.stego_features("C1tst", p, CONVENTIONAL)
        fz = exp.stego_features("C1tst", p, adv)
        gamma = median_gamma(fc, fs)
        dist[p] = {"gamma": gamma, "conventional": mmd(fc, fs, gamma), "ama": mmd(fc, fz, gamma)}
    return StatsReport(hist, rates, dist, labels)


def stats_csv(report: StatsReport) -> dict[str, str]:
    beta = ["payload," + ",".join(report.beta_labels)]
    for p, row in report.beta_hist.items():
        beta.append(f"{p:.2f}," + ",".join(f"{row[lab]:.4f}" for lab in report.beta_labels))
    rate = ["payload,scheme,modification_rate"]
    for p, row in report.modification_rate.items():
        for scheme in ("conventional", "ama"):
            rate.append(f"{p:.2f},{scheme},{row[scheme]:.6f}")
    dist = ["payload,scheme,gamma,mmd,ama_below_conventional"]
    for p, row in report.mmd.items():
        below = "yes" if row["ama"] <= row["conventional"] else "no"
        for scheme in ("conventional", "ama"):
            dist.append(f"{p:.2f},{scheme},{row['gamma']:.6e},{row[scheme]:.6e},{below}")
    return {"beta_histogram.csv": "\n".join(beta) + "\n",
            "modification_rate.csv": "\n".join(rate) + "\n",
            "mmd.csv": "\n".join(dist) + "\n"}
