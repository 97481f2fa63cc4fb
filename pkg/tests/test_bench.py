import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amastego import cnn
from amastego.bench import experiments as ex
from amastego.bench.cli import main
from amastego.bench.config import ConfigError, ExperimentConfig, parse_config_text
from amastego.bench.data import SplitOverlap, SplitPlan, derive_seed, synth_cover_set
from amastego.bench.metrics import (CSV_COLUMNS, MetricsRecord, ReportRow,
                                    error_rates, evaluate, find, rows_to_csv)
from amastego.grid import load_pgm, save_pgm, synth_cover

TINY = dict(n_covers=30, size=16, n_c0=10, n_trn=10, n_tst=10, payloads=(0.4,),
            iterations=4, batch_size=8, subspace_dim=20, learners=3, rounds=2,
            case2_betas=(0.1, 0.5), ablation_aware=False, figures=False)


def tiny_config(**kw):
    return ExperimentConfig().updated(**{**TINY, **kw}).validate()


# --- metrics ---------------------------------------------------------------

def test_error_rates_example():
    m = error_rates([0, 1, 0, 0], [1, 1, 0])
    assert (m.p_fa, m.p_md) == (0.25, 1 / 3)
    assert m.p_e == (0.25 + 1 / 3) / 2


def test_published_row_consistency():
    # (17.5, 99.6) gives 58.55; the published 58.5 was rounded from unrounded
    # rates, so it only has to sit inside the half-unit display interval
    m = MetricsRecord(0.175, 0.996, 1, 1)
    assert 100 * m.p_e == pytest.approx(58.55, abs=1e-12)
    assert abs(100 * m.p_e - 58.5) <= 0.05 + 1e-12


@settings(max_examples=200)
@given(st.floats(0, 1), st.floats(0, 1))
def test_pe_identity(p_md, p_fa):
    assert MetricsRecord(p_fa, p_md, 1, 1).p_e == (p_md + p_fa) / 2


def test_evaluate_and_errors():
    m = evaluate(lambda x: int(x > 0), [-1, -2, 3], [4, 5, -6, 7])
    assert (m.p_fa, m.p_md, m.n_cover, m.n_stego) == (1 / 3, 1 / 4, 3, 4)
    with pytest.raises(ValueError):
        evaluate(lambda x: 0, [], [1])


def test_random_and_perfect_classifiers():
    rng = np.random.default_rng(10)
    n = 4000
    m = evaluate(lambda x: int(rng.random() < 0.5), range(n), range(n))
    sd = np.sqrt(0.25 / (2 * n))
    assert abs(m.p_e - 0.5) < 3 * sd
    perfect = evaluate(lambda x: int(x >= 0), [-1, -2], [1, 2, 3])
    assert perfect.p_e == 0.0


def test_csv_columns_and_find():
    rows = [ReportRow("ama", 0.4, "cnn", MetricsRecord(0.1, 0.9, 5, 5))]
    text = rows_to_csv(rows)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert text.splitlines()[1] == "ama,0.40,cnn,0.100000,0.900000,0.500000,10"
    assert find(rows, "ama", "cnn", 0.4).p_md == 0.9
    with pytest.raises(KeyError):
        find(rows, "ama", "fld")


# --- data ------------------------------------------------------------------

def test_derive_seed_stable_and_distinct():
    assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)
    assert derive_seed(1, "a", 2) != derive_seed(1, "a", 3)
    assert derive_seed(-1) != derive_seed(1)
    assert 0 <= derive_seed(2**70, 0.4) < 2**63


def test_split_plan_disjoint():
    plan = SplitPlan.standard(100, 50, 25, 25, seed=3)
    allidx = np.concatenate([plan["C0"], plan["C1trn"], plan["C1tst"]])
    assert len(np.unique(allidx)) == 100


def test_split_overlap_detected():
    plan = SplitPlan({"A": np.array([1, 2]), "B": np.array([2, 3])}, 5)
    with pytest.raises(SplitOverlap):
        plan.audit()
    with pytest.raises(SplitOverlap):
        SplitPlan({"A": np.array([7])}, 5).audit()


def test_cover_set_deterministic():
    a = synth_cover_set(3, 16, 5, (2.0, 4.0))
    b = synth_cover_set(3, 16, 5, (2.0, 4.0))
    assert all(x == y for x, y in zip(a, b))
    assert a[0] != a[1]


# --- config ----------------------------------------------------------------

def test_config_parse_and_override():
    cfg = parse_config_text("# comment\nseed = 7\npayloads=0.1,0.3\nfixed_order=true\n")
    assert cfg.seed == 7 and cfg.payloads == (0.1, 0.3) and cfg.fixed_order is True
    cfg = cfg.updated(seed=9, payload=None)
    assert cfg.seed == 9 and cfg.payload == 0.4
    assert parse_config_text(cfg.to_text()).to_text() == cfg.to_text()


@pytest.mark.parametrize("text", ["nonsense", "unknown_key=1", "seed=abc", "fixed_order=maybe"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(n_covers=10).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(coder="ldpc").validate()


# --- experiments -----------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_exp():
    return ex.Experiment(tiny_config())


def test_unaware_rows_and_pfa_pairing(tiny_exp):
    rows = ex.run_unaware(tiny_exp)
    assert {(r.scheme, r.steganalyzer) for r in rows} == {
        ("conventional", "cnn"), ("ama", "cnn"), ("conventional", "fld"), ("ama", "fld")}
    assert find(rows, "ama", "cnn").p_fa == find(rows, "conventional", "cnn").p_fa
    for r in rows:
        assert r.metrics.p_e == (r.metrics.p_md + r.metrics.p_fa) / 2
        assert r.metrics.n_cover == 10


def test_ama_success_is_cover_decision(tiny_exp):
    target = ex.targeted_spec(0.4)
    model = tiny_exp.model(target)
    for r in tiny_exp.adversarial("C1tst", 0.4, target):
        if r.success:
            assert cnn.classify(model, r.stego) == 0
        else:
            assert r.fallback


def test_game_round_one_equals_unaware_aware(tiny_exp):
    rounds = ex.run_game(tiny_exp, 2)
    unaware = ex.run_unaware(tiny_exp)
    aware = ex.run_aware(tiny_exp)
    assert rounds[0].unaware == find(unaware, "ama", "cnn")
    assert rounds[0].aware == find(aware, "ama", "cnn-aware")
    assert [g.index for g in rounds] == [1, 2]
    assert rounds[1].unaware_spec[2][0] == "ama"


def test_ablation_rows(tiny_exp):
    rows = ex.run_ablations(tiny_exp)
    assert [r.scheme for r in rows] == ["ama", "case1", "case2-b0.1", "case2-b0.5"]
    assert find(rows, "ama", "cnn") == find(ex.run_unaware(tiny_exp), "ama", "cnn")


def test_stats_report(tiny_exp):
    rep = ex.run_stats(tiny_exp)
    assert sum(rep.beta_hist[0.4].values()) == pytest.approx(100.0)
    assert rep.beta_labels[0] == "0" and rep.beta_labels[-1] == "fail"
    d = rep.mmd[0.4]
    assert d["gamma"] > 0 and d["conventional"] >= 0 and d["ama"] >= 0
    files = ex.stats_csv(rep)
    assert set(files) == {"beta_histogram.csv", "modification_rate.csv", "mmd.csv"}


def test_reports_deterministic():
    a = ex.Experiment(tiny_config(seed=3))
    b = ex.Experiment(tiny_config(seed=3))
    assert rows_to_csv(ex.run_unaware(a)) == rows_to_csv(ex.run_unaware(b))
    t = ex.targeted_spec(0.4)
    assert a.model(t).digest() == b.model(t).digest()


# --- CLI -------------------------------------------------------------------

TINY_FLAGS = ["--n-covers", "30", "--size", "16", "--n-c0", "10", "--n-trn", "10", "--n-tst", "10",
              "--payloads", "0.4", "--iterations", "3", "--batch-size", "8",
              "--subspace-dim", "20", "--learners", "3"]


def test_cli_unaware_writes_csv_manifest_and_figure(tmp_path, capsys):
    out = tmp_path / "rep"
    assert main(["unaware", "--out", str(out), *TINY_FLAGS]) == 0
    text = (out / "unaware.csv").read_text()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    man = json.loads((out / "unaware_manifest.json").read_text())
    assert man["seed"] == 0 and len(man["config_sha256"]) == 64
    assert "numpy" in man["versions"]
    assert (out / "unaware_pmd.png").stat().st_size > 0
    assert "unaware_pmd.png" in man["outputs"]


def test_cli_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed=5\nn_covers=30\nsize=16\nn_c0=10\nn_trn=10\nn_tst=10\n")
    out = tmp_path / "covers"
    assert main(["gen-covers", "--config", str(cfg), "--n-covers", "40", "--out", str(out)]) == 0
    files = sorted(out.glob("*.pgm"))
    assert len(files) == 40
    assert load_pgm(files[0].read_bytes()).shape == (16, 16)


def test_cli_gen_covers_ignores_split_sizes(tmp_path):
    # covers alone need no train/test splits, so a handful is fine
    out = tmp_path / "few"
    assert main(["gen-covers", "--n-covers", "3", "--size", "16", "--out", str(out)]) == 0
    assert len(list(out.glob("*.pgm"))) == 3
    assert main(["gen-covers", "--n-covers", "0", "--out", str(out)]) == 2


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key=1\n")
    assert main(["gen-covers", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert main(["gen-covers", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["evaluate", "--covers", str(empty), "--stegos", str(empty), "--model", "m"]) == 3
    cover = tmp_path / "c.pgm"
    cover.write_bytes(save_pgm(synth_cover(16, 16, 1, 2.0)))
    assert main(["embed", "--scheme", "baseline", "--cover", str(cover), "--payload", "1.6",
                 "--out", str(tmp_path / "s.pgm")]) == 4
    junk = tmp_path / "junk.pgm"
    junk.write_bytes(b"P2\n1 1\n255\n0")
    assert main(["embed", "--scheme", "baseline", "--cover", str(junk), "--out", str(tmp_path / "t.pgm")]) == 3
    with pytest.raises(SystemExit) as info:
        main(["embed"])
    assert info.value.code == 2


def test_cli_stc_embed_extract_roundtrip(tmp_path):
    cover = tmp_path / "c.pgm"
    cover.write_bytes(save_pgm(synth_cover(32, 32, 4, 3.0)))
    model = cnn.ClassifierModel.initialize(32, 32, 1)
    (tmp_path / "m.bin").write_bytes(model.to_bytes())
    msg = np.random.default_rng(0).integers(0, 2, 256).astype(np.uint8)
    (tmp_path / "msg.bin").write_bytes(np.packbits(msg).tobytes())
    stego = tmp_path / "s.pgm"
    assert main(["embed", "--scheme", "ama", "--cover", str(cover), "--model", str(tmp_path / "m.bin"),
                 "--coder", "stc", "--key", "42", "--seed", "3", "--message", str(tmp_path / "msg.bin"),
                 "--out", str(stego)]) == 0
    rec = json.loads(stego.with_suffix(".json").read_text())
    assert rec["message_bits"] == 256
    out = tmp_path / "got.bin"
    assert main(["extract", "--stego", str(stego), "--bits", "256", "--key", "42", "--out", str(out)]) == 0
    got = np.unpackbits(np.frombuffer(out.read_bytes(), dtype=np.uint8))[:256]
    assert np.array_equal(got, msg)


def test_cli_train_and_evaluate(tmp_path):
    covers = tmp_path / "covers"
    assert main(["gen-covers", "--n-covers", "12", "--size", "16", "--n-c0", "4", "--n-trn", "4",
                 "--n-tst", "4", "--out", str(covers)]) == 0
    model = tmp_path / "m.bin"
    assert main(["train-cnn", "--covers", str(covers), "--embed-payload", "0.4",
                 "--iterations", "2", "--batch-size", "4", "--out", str(model)]) == 0
    ens = tmp_path / "e.json"
    assert main(["train-ensemble", "--covers", str(covers), "--embed-payload", "0.4",
                 "--subspace-dim", "10", "--learners", "3", "--out", str(ens)]) == 0
    for flag, path in (("--model", model), ("--ensemble", ens)):
        csv_out = tmp_path / f"eval{flag}.csv"
        assert main(["evaluate", "--covers", str(covers), "--stegos", str(covers), flag, str(path),
                     "--out", str(csv_out)]) == 0
        assert csv_out.read_text().startswith(",".join(CSV_COLUMNS))
