"""Command-line entry point: ``amastego <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 convergence or infeasibility.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import cnn
from ..ama import AmaConfig, ama_embed, conventional_embed, embedding_order, stc_params_for
from ..coding import LambdaNotConverged, MessageTooLong, PayloadTooLarge, StcError
from ..coding.stc import StcInfeasible, stc_extract, usable_order
from ..cost import baseline_costs
from ..features import DegenerateTraining, classify_ensemble, extract_features, train_fld
from ..grid import PgmError, TernaryViolation, load_pgm, save_pgm
from . import experiments as ex
from .config import ConfigError, ExperimentConfig, load_config
from .data import SplitOverlap, read_pgm_dir, synth_cover_set, write_pgm_dir
from .metrics import ReportRow, error_rates, rows_to_csv
from .report import report_files, write_outputs

log = logging.getLogger("amastego")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INFEASIBLE = 0, 2, 3, 4

# experiment keys exposed as flags on the experiment subcommands
EXPERIMENT_FLAGS = {
    "seed": int, "n_covers": int, "size": int, "n_c0": int, "n_trn": int, "n_tst": int,
    "payloads": str, "payload": float, "learning_rate": float, "momentum": float,
    "batch_size": int, "iterations": int, "subspace_dim": int, "learners": int,
    "alpha": float, "delta_beta": float, "coder": str, "smoothness_min": float,
    "smoothness_max": float,
}


class DataError(RuntimeError):
    pass


def _experiment_config(args, splits: bool = True) -> ExperimentConfig:
    cfg = load_config(getattr(args, "config", None))
    overrides = {k: getattr(args, k, None) for k in EXPERIMENT_FLAGS}
    if getattr(args, "rounds", None) is not None:
        overrides["rounds"] = args.rounds
    if getattr(args, "fixed_order", False):
        overrides["fixed_order"] = True
    if getattr(args, "no_figures", False):
        overrides["figures"] = False
    if getattr(args, "no_aware", False):
        overrides["ablation_aware"] = False
    return cfg.updated(**overrides).validate(splits)


def _add_experiment_flags(p):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--out", default="reports", help="output directory")
    for name, typ in EXPERIMENT_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    p.add_argument("--fixed-order", action="store_true", help="raster embedding order for all images")
    p.add_argument("--no-figures", action="store_true")


def _write_bits(path: Path, bits: np.ndarray):
    path.write_bytes(np.packbits(bits.astype(np.uint8)).tobytes())


def _read_bits(path: Path, count: int | None) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(Path(path).read_bytes(), dtype=np.uint8))
    if count is not None:
        if count > len(bits):
            raise DataError("message file shorter than the requested bit count")
        bits = bits[:count]
    return bits


# ------------------------------------------------------------------ commands

def cmd_gen_covers(args):
    cfg = _experiment_config(args, splits=False)
    covers = synth_cover_set(cfg.n_covers, cfg.size, cfg.seed, (cfg.smoothness_min, cfg.smoothness_max))
    write_pgm_dir(covers, Path(args.out))
    print(f"wrote {len(covers)} covers to {args.out}")


def _load_dir(path) -> list:
    grids = read_pgm_dir(Path(path))
    if not grids:
        raise DataError(f"no .pgm files in {path}")
    return grids


def _stegos_for(args, covers):
    if args.stegos:
        stegos = _load_dir(args.stegos)
        if len(stegos) != len(covers):
            raise DataError("cover and stego directories hold different counts")
        return stegos
    if args.embed_payload is None:
        raise ConfigError("give --stegos or --embed-payload")
    return [conventional_embed(c, args.embed_payload * c.usable_count, seed=args.seed + i, key=args.seed + i)
            for i, c in enumerate(covers)]


def cmd_train_cnn(args):
    covers = _load_dir(args.covers)
    stegos = _stegos_for(args, covers)
    hyper = cnn.TrainParams(learning_rate=args.learning_rate, momentum=args.momentum,
                            batch_size=args.batch_size, iterations=args.iterations, log_every=100)
    model = cnn.train(covers, stegos, hyper, seed=args.seed)
    Path(args.out).write_bytes(model.to_bytes())
    print(f"model {model.digest()[:16]} written to {args.out}")


def cmd_train_ensemble(args):
    covers = _load_dir(args.covers)
    stegos = _stegos_for(args, covers)
    fc = np.stack([extract_features(g) for g in covers])
    fs = np.stack([extract_features(g) for g in stegos])
    model = train_fld(fc, fs, args.subspace_dim, args.learners, args.seed)
    doc = {"dim": model.dim, "seed": model.seed, "learners": [
        {"subspace": lr.subspace.tolist(), "w": lr.w.tolist(), "b": lr.b} for lr in model.learners]}
    Path(args.out).write_text(json.dumps(doc), encoding="utf-8")
    print(f"ensemble of {len(model.learners)} learners written to {args.out}")


def _load_ensemble(path):
    from ..features import FldEnsemble, FldLearner
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    learners = [FldLearner(np.array(d["subspace"], dtype=np.intp), np.array(d["w"]), float(d["b"]))
                for d in doc["learners"]]
    return FldEnsemble(learners, int(doc["dim"]), int(doc["seed"]))


def _load_model(path):
    try:
        return cnn.ClassifierModel.from_bytes(Path(path).read_bytes())
    except (OSError, cnn.ModelFormatError) as exc:
        raise DataError(f"cannot load model {path}: {exc}") from exc


def cmd_embed(args):
    cover = load_pgm(Path(args.cover).read_bytes())
    bits = args.payload * cover.usable_count
    key = None if args.key is None else int(args.key)
    message = None
    if args.message:
        message = _read_bits(Path(args.message), args.message_bits)
        bits = len(message)
    if args.scheme == "baseline":
        if args.coder == "stc" and message is None:
            message = np.random.default_rng(args.seed).integers(0, 2, int(round(bits))).astype(np.uint8)
        stego = conventional_embed(cover, bits, baseline_costs, args.coder, key, args.seed,
                                   message=message, stc_height=args.stc_height)
        record = {"beta": None, "success": None, "fallback": False,
                  "change_count": int(np.count_nonzero(stego.elements != cover.elements)),
                  "payload_bits": float(bits)}
    else:
        if not args.model:
            raise ConfigError("--scheme ama needs --model")
        model = _load_model(args.model)
        cfg = AmaConfig(alpha=args.alpha, delta_beta=args.delta_beta, mode=args.mode,
                        fixed_beta=args.beta, coder=args.coder, key=key, seed=args.seed,
                        stc_height=args.stc_height)
        res = ama_embed(cover, bits, model, cfg, message=message)
        stego, record, message = res.stego, res.record(), res.message
    out = Path(args.out)
    out.write_bytes(save_pgm(stego))
    if args.coder == "stc" and message is not None:
        record["message_bits"] = int(len(message))
        _write_bits(out.with_suffix(".msg"), message)
    out.with_suffix(".json").write_text(json.dumps(record, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(record, sort_keys=True))


def cmd_extract(args):
    stego = load_pgm(Path(args.stego).read_bytes())
    key = None if args.key is None else int(args.key)
    order = usable_order(stego, embedding_order(stego.shape, key))
    params = stc_params_for(stego, args.bits, key, args.stc_height)
    bits = stc_extract(stego, params, order, args.bits)
    _write_bits(Path(args.out), bits)
    print(f"extracted {len(bits)} bits to {args.out}")


def cmd_evaluate(args):
    covers = _load_dir(args.covers)
    stegos = _load_dir(args.stegos)
    if args.model:
        model = _load_model(args.model)
        rec = error_rates(cnn.classify(model, covers), cnn.classify(model, stegos))
        name = "cnn"
    elif args.ensemble:
        model = _load_ensemble(args.ensemble)
        fc = np.stack([extract_features(g) for g in covers])
        fs = np.stack([extract_features(g) for g in stegos])
        rec = error_rates(classify_ensemble(model, fc), classify_ensemble(model, fs))
        name = "fld"
    else:
        raise ConfigError("give --model or --ensemble")
    text = rows_to_csv([ReportRow(args.scheme, args.payload, name, rec)])
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _finish(exp, out, command, rows, figures):
    files = report_files(command, rows)
    write_outputs(Path(out), files, exp.config, command, figures,
                  {"model_digests": exp.model_digests()})
    sys.stdout.write(files[f"{command}.csv"])


def cmd_unaware(args):
    cfg = _experiment_config(args)
    exp = ex.Experiment(cfg)
    rows = ex.run_unaware(exp)
    figs = []
    if cfg.figures:
        from .plotting import plot_error_rates
        figs.append(plot_error_rates(rows, Path(args.out) / "unaware_pmd.png"))
    _finish(exp, args.out, "unaware", rows, figs)


def cmd_aware(args):
    cfg = _experiment_config(args)
    exp = ex.Experiment(cfg)
    rows = ex.run_unaware(exp) + ex.run_aware(exp)
    figs = []
    if cfg.figures:
        from .plotting import plot_error_rates
        figs.append(plot_error_rates(rows, Path(args.out) / "aware_pe.png", "p_e"))
    _finish(exp, args.out, "aware", rows, figs)


def cmd_game(args):
    cfg = _experiment_config(args)
    exp = ex.Experiment(cfg)
    rounds = ex.run_game(exp, cfg.rounds)
    rows = ex.game_rows(rounds, cfg.payload)
    figs = []
    if cfg.figures:
        from .plotting import plot_game
        figs.append(plot_game(rounds, Path(args.out) / "game.png"))
    _finish(exp, args.out, "game", rows, figs)


def cmd_ablate(args):
    cfg = _experiment_config(args)
    exp = ex.Experiment(cfg)
    rows = ex.run_ablations(exp)
    figs = []
    if cfg.figures:
        from .plotting import plot_error_rates
        figs.append(plot_error_rates(rows, Path(args.out) / "ablation_pe.png", "p_e"))
    _finish(exp, args.out, "ablate", rows, figs)


def cmd_stats(args):
    cfg = _experiment_config(args)
    exp = ex.Experiment(cfg)
    report = ex.run_stats(exp)
    files = ex.stats_csv(report)
    figs = []
    if cfg.figures:
        from .plotting import plot_beta_histogram
        figs.append(plot_beta_histogram(report, Path(args.out) / "beta_histogram.png"))
    write_outputs(Path(args.out), files, cfg, "stats", figs, {"model_digests": exp.model_digests()})
    for text in files.values():
        sys.stdout.write(text)


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amastego", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-covers", help="write seeded synthetic covers as PGM files")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_gen_covers)

    for name, func, helptext in (("train-cnn", cmd_train_cnn, "train the targeted CNN"),
                                 ("train-ensemble", cmd_train_ensemble, "train the FLD ensemble")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--covers", required=True)
        p.add_argument("--stegos")
        p.add_argument("--embed-payload", type=float, help="make conventional stegos at this rate")
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=0)
        if name == "train-cnn":
            p.add_argument("--learning-rate", type=float, default=0.01)
            p.add_argument("--momentum", type=float, default=0.9)
            p.add_argument("--batch-size", type=int, default=64)
            p.add_argument("--iterations", type=int, default=5000)
        else:
            p.add_argument("--subspace-dim", type=int, default=100)
            p.add_argument("--learners", type=int, default=51)
        p.set_defaults(func=func)

    p = sub.add_parser("embed", help="embed into one PGM cover")
    p.add_argument("--cover", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scheme", choices=("baseline", "ama"), default="ama")
    p.add_argument("--payload", type=float, default=0.4, help="bits per usable element")
    p.add_argument("--mode", choices=("inverse-sign", "same-sign", "fixed-beta"), default="inverse-sign")
    p.add_argument("--beta", type=float, help="beta for fixed-beta mode")
    p.add_argument("--coder", choices=("simulator", "stc"), default="simulator")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--delta-beta", type=float, default=0.1)
    p.add_argument("--key", type=int, default=0, help="embedding-order key")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", help="targeted CNN model file")
    p.add_argument("--message", help="message file (raw bytes, MSB first)")
    p.add_argument("--message-bits", type=int, help="bits of --message to use")
    p.add_argument("--stc-height", type=int, default=7)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", help="extract an STC message")
    p.add_argument("--stego", required=True)
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--key", type=int, default=0)
    p.add_argument("--stc-height", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", help="P_fa / P_md / P_e of a model on PGM sets")
    p.add_argument("--covers", required=True)
    p.add_argument("--stegos", required=True)
    p.add_argument("--model")
    p.add_argument("--ensemble")
    p.add_argument("--scheme", default="unknown")
    p.add_argument("--payload", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    for name, func, helptext in (
            ("unaware", cmd_unaware, "adversary-unaware evaluation"),
            ("aware", cmd_aware, "adversary-aware evaluation"),
            ("game", cmd_game, "iterative steganographer/steganalyst game"),
            ("ablate", cmd_ablate, "Case I / Case II ablations"),
            ("stats", cmd_stats, "beta histogram, modification rate, MMD")):
        p = sub.add_parser(name, help=helptext)
        _add_experiment_flags(p)
        if name == "game":
            p.add_argument("--rounds", type=int, default=None)
        if name == "ablate":
            p.add_argument("--no-aware", action="store_true", help="skip retrained steganalyzers")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PayloadTooLarge, LambdaNotConverged, StcInfeasible, MessageTooLong) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DataError, DegenerateTraining, PgmError, TernaryViolation, SplitOverlap, StcError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
