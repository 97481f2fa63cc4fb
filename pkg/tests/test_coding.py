from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amastego.coding import (MessageTooLong, PayloadTooLarge, StcInfeasible,
                             StcParams, embed_segments, max_entropy,
                             payload_entropy, simulate_embedding, solve_lambda,
                             stc_embed, stc_extract, syndrome, ternary_probs)
from amastego.coding.stc import block_widths, flip_costs, viterbi
from amastego.cost import WET_VALUE, CostMap, baseline_costs, distortion
from amastego.grid import ElementGrid, diff

from _oracles import dense_h, exhaustive_stc


def _costs(rng, shape, lo=0.1, hi=10.0):
    return CostMap(rng.uniform(lo, hi, shape), rng.uniform(lo, hi, shape))


# --- simulator -------------------------------------------------------------

def test_lambda_zero_gives_uniform_thirds():
    c = _costs(np.random.default_rng(0), (5, 5))
    p = ternary_probs(c, 0.0)
    assert np.all(p.p_plus == 1 / 3) and np.all(p.p_minus == 1 / 3)
    assert payload_entropy(p) == pytest.approx(25 * np.log2(3), abs=1e-9)


def test_max_payload_returns_lambda_zero():
    c = _costs(np.random.default_rng(1), (6, 6))
    mask = np.ones((6, 6), bool)
    assert solve_lambda(c, mask, 36 * np.log2(3)) == 0.0


def test_two_element_example():
    # rho = 1 everywhere, one element: p(+1) = p(-1) = e^-l / (1 + 2 e^-l)
    c = CostMap(np.ones((1, 1)), np.ones((1, 1)))
    lam = solve_lambda(c, np.ones((1, 1), bool), 1.0)
    q = float(mpmath.findroot(lambda l: _h1(l) - 1, 1.0))
    assert lam == pytest.approx(q, abs=1e-4)


def _h1(lam):
    e = mpmath.e ** (-lam)
    z = 1 + 2 * e
    p, p0 = e / z, 1 / z
    return -(2 * p * mpmath.log(p, 2) + p0 * mpmath.log(p0, 2))


def test_wet_directions_have_zero_probability():
    rp = np.ones((2, 2))
    rp[0, 0] = WET_VALUE
    c = CostMap(rp, np.ones((2, 2)))
    p = ternary_probs(c, 0.0)
    assert p.p_plus[0, 0] == 0 and p.p_minus[0, 0] == 0.5


def test_payload_too_large():
    c = _costs(np.random.default_rng(2), (4, 4))
    with pytest.raises(PayloadTooLarge):
        solve_lambda(c, np.ones((4, 4), bool), 16 * np.log2(3) + 1)


def test_entropy_monotone_in_lambda():
    c = _costs(np.random.default_rng(3), (8, 8))
    hs = [payload_entropy(ternary_probs(c, lam)) for lam in np.linspace(0, 5, 30)]
    assert all(a >= b for a, b in zip(hs, hs[1:]))


def test_payload_constraint_random_maps():
    rng = np.random.default_rng(4)
    for _ in range(100):
        shape = tuple(rng.integers(4, 20, 2))
        c = _costs(rng, shape, 1e-3, 1e3)
        mask = rng.random(shape) < 0.9
        mask.flat[0] = True
        hmax = max_entropy(c, mask)
        target = rng.uniform(0.01, 0.999) * hmax
        lam = solve_lambda(c, mask, target)
        achieved = payload_entropy(ternary_probs(c, lam), mask)
        assert abs(achieved - target) <= 1e-6 * mask.sum()


def test_direct_formula():
    c = CostMap(np.ones((1, 1)), np.full((1, 1), 2.0))
    p = ternary_probs(c, 1.0)
    z = 1 + np.exp(-1) + np.exp(-2)
    assert p.p_plus[0, 0] == pytest.approx(np.exp(-1) / z, rel=1e-15)
    assert p.p_minus[0, 0] == pytest.approx(np.exp(-2) / z, rel=1e-15)
    assert ternary_probs(c, 1e6).p_plus[0, 0] == 0.0
    with pytest.raises(ValueError):
        ternary_probs(c, -1.0)


def test_entropy_closed_forms():
    from amastego.coding import ModProbabilities
    quarter = ModProbabilities(np.full((1, 1), 0.25), np.full((1, 1), 0.25))
    assert payload_entropy(quarter) == pytest.approx(1.5, abs=1e-15)
    zero = ModProbabilities(np.zeros((3, 3)), np.zeros((3, 3)))
    assert payload_entropy(zero) == 0.0


def test_simulator_change_rate_matches_probabilities():
    # 10^5 uniform-cost elements; pinned seed, 3 sigma binomial band
    g = ElementGrid(np.full((250, 400), 100))
    c = CostMap(np.ones(g.shape), np.ones(g.shape))
    target = 0.5 * g.elements.size
    lam = solve_lambda(c, g.usable_mask, target)
    p = ternary_probs(c, lam)
    expected = float((p.p_plus + p.p_minus).mean())
    s = simulate_embedding(g, c, target, 11)
    rate = np.mean(diff(g, s) != 0)
    sd = np.sqrt(expected * (1 - expected) / g.elements.size)
    assert abs(rate - expected) < 3 * sd


def test_simulator_never_touches_wet_or_range():
    rng = np.random.default_rng(12)
    el = rng.choice([0, 1, 254, 255], size=(40, 40))
    g = ElementGrid(el)
    s = simulate_embedding(g, baseline_costs(g), 0.3 * 1600, 5)
    d = diff(g, s)
    assert not np.any(d[el == 255] == 1) and not np.any(d[el == 0] == -1)
    assert s.elements.min() >= 0 and s.elements.max() <= 255


def test_simulator_respects_mask_and_determinism(cover64):
    c = baseline_costs(cover64)
    mask = np.zeros(cover64.shape, bool)
    mask[:, :32] = True
    a = simulate_embedding(cover64, c, 500, 3, mask=mask)
    b = simulate_embedding(cover64, c, 500, 3, mask=mask)
    assert a == b
    assert not np.any(diff(cover64, a)[:, 32:])


def test_simulator_zero_payload_identity(cover64):
    c = baseline_costs(cover64)
    assert simulate_embedding(cover64, c, 0, 1) == cover64


# --- STC -------------------------------------------------------------------

def test_block_widths_spread_evenly():
    assert block_widths(10, 4).tolist() == [2, 3, 2, 3]
    assert block_widths(12, 3).tolist() == [4, 4, 4]
    assert block_widths(7, 7).sum() == 7


def test_params_text_roundtrip():
    p = StcParams(2, (0b11, 0b10, 0b01), Fraction(1, 3))
    assert p.to_text() == "h=2;cols=3,2,1;rate=1/3"
    assert StcParams.from_text(p.to_text()) == p


@pytest.mark.parametrize("kw", [
    dict(constraint_height=0, columns=(1,), payload_rate=Fraction(1, 2)),
    dict(constraint_height=3, columns=(0b010,), payload_rate=Fraction(1, 2)),
    dict(constraint_height=2, columns=(0b100,), payload_rate=Fraction(1, 2)),
    dict(constraint_height=2, columns=(3,), payload_rate=Fraction(3, 2)),
])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        StcParams(**kw)


def test_syndrome_matches_dense_matrix():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(4, 40))
        m = int(rng.integers(1, n // 2 + 1))
        p = StcParams.for_payload(n, m, int(rng.integers(1, 6)), int(rng.integers(100)))
        x = rng.integers(0, 2, n).astype(np.uint8)
        assert np.array_equal(syndrome(x, p, m), dense_h(p, n, m) @ x % 2)


def test_viterbi_optimal_small_instances():
    rng = np.random.default_rng(6)
    for _ in range(150):
        n = int(rng.integers(2, 17))
        m = int(rng.integers(1, n // 2 + 1))
        h = int(rng.integers(1, 5))
        p = StcParams.for_payload(n, m, h, int(rng.integers(1000)))
        lsb = rng.integers(0, 2, n).astype(np.uint8)
        flip = rng.uniform(0.1, 5, n)
        msg = rng.integers(0, 2, m).astype(np.uint8)
        opt = exhaustive_stc(lsb, flip, msg, dense_h(p, n, m))
        if not np.isfinite(opt):
            with pytest.raises(StcInfeasible):
                viterbi(lsb, flip, msg, p, m)
            continue
        y, _, cost = viterbi(lsb, flip, msg, p, m)
        assert cost == pytest.approx(opt, abs=1e-9)
        assert np.array_equal(syndrome(y, p, m), msg)


def test_small_example_matches_brute_force():
    # n=4, k=2, sub-matrix columns [1,1] and [0,1] (bit 0 = top row)
    p = StcParams(2, (0b11, 0b10), Fraction(1, 2))
    g = ElementGrid(np.array([[10, 11, 12, 13]]))
    c = CostMap(np.ones((1, 4)), np.ones((1, 4)))
    H = dense_h(p, 4, 2)
    # the last block is truncated at the bottom edge of H
    assert H.tolist() == [[1, 0, 0, 0], [1, 1, 1, 0]]
    lsb = np.array([0, 1, 0, 1], np.uint8)
    for bits in ([0, 0], [0, 1], [1, 0], [1, 1]):
        msg = np.array(bits, np.uint8)
        s = stc_embed(g, c, msg, p, np.arange(4))
        changed = int(np.count_nonzero(diff(g, s)))
        assert changed == exhaustive_stc(lsb, np.ones(4), msg, H)
        assert np.array_equal(stc_extract(s, p, np.arange(4), 2), msg)


def test_matching_syndrome_costs_nothing():
    rng = np.random.default_rng(13)
    g = ElementGrid(rng.integers(1, 255, (8, 8)))
    p = StcParams.for_payload(64, 16, 4, 2)
    msg = stc_extract(g, p, np.arange(64), 16)
    assert stc_embed(g, _costs(rng, g.shape), msg, p, np.arange(64)) == g


def test_flip_costs_boundaries():
    v = np.array([0, 255, 100, 100])
    cp = np.array([1.0, 1.0, 2.0, 1.0])
    cm = np.array([1.0, 1.0, 1.0, 2.0])
    f, d = flip_costs(v, cp, cm, WET_VALUE)
    assert f.tolist() == [1.0, 1.0, 1.0, 1.0]
    assert d.tolist() == [1, -1, -1, 1]


def test_flip_costs_tie_prefers_plus():
    f, d = flip_costs(np.array([7]), np.array([3.0]), np.array([3.0]), WET_VALUE)
    assert d[0] == 1 and f[0] == 3.0


def test_roundtrip_many():
    rng = np.random.default_rng(7)
    for t in range(1000):
        hgt, wid = int(rng.integers(4, 12)), int(rng.integers(4, 12))
        g = ElementGrid(rng.integers(0, 256, (hgt, wid)))
        c = _costs(rng, g.shape)
        n = g.usable_count
        m = int(rng.integers(0, n // 2 + 1))
        msg = rng.integers(0, 2, m).astype(np.uint8)
        order = rng.permutation(n)
        p = StcParams.for_payload(n, m, int(rng.integers(2, 8)), t)
        s = stc_embed(g, c, msg, p, order)
        assert np.all(np.abs(diff(g, s)) <= 1)
        assert np.array_equal(stc_extract(s, p, order, m), msg)


def test_message_too_long():
    g = ElementGrid(np.full((4, 4), 9))
    p = StcParams.for_payload(16, 4, 3)
    with pytest.raises(MessageTooLong):
        stc_embed(g, _costs(np.random.default_rng(0), (4, 4)), np.zeros(9), p, np.arange(16))


def test_zero_message_is_identity():
    g = ElementGrid(np.arange(16).reshape(4, 4) + 50)
    p = StcParams.for_payload(16, 1, 3)
    s = stc_embed(g, _costs(np.random.default_rng(0), (4, 4)), np.zeros(0), p, np.arange(16))
    assert s == g


def test_stc_distortion_close_to_simulator(cover64):
    c = baseline_costs(cover64)
    n = cover64.usable_count
    m = int(0.4 * n)
    rng = np.random.default_rng(8)
    msg = rng.integers(0, 2, m).astype(np.uint8)
    p = StcParams.for_payload(n, m, 8, 1)
    order = rng.permutation(n)
    s = stc_embed(cover64, c, msg, p, order)
    # binary STC pays for using only one of the two directions; it must stay
    # within a small factor of the ternary bound
    d_stc = distortion(cover64, s, c)
    d_sim = distortion(cover64, simulate_embedding(cover64, c, m, 2), c)
    assert d_stc < 4 * d_sim


def test_segments_extract_without_split_info():
    rng = np.random.default_rng(9)
    g = ElementGrid(rng.integers(1, 255, (16, 16)))
    c1, c2 = _costs(rng, g.shape), _costs(rng, g.shape)
    n, m = 256, 100
    msg = rng.integers(0, 2, m).astype(np.uint8)
    p = StcParams.for_payload(n, m, 7, 3)
    order = rng.permutation(n)
    for split in (0, 1, 57, 128, 255, 256):
        s = embed_segments(g, [(c1, split), (c2, n - split)], msg, p, order)
        assert np.array_equal(stc_extract(s, p, order, m), msg)


def test_segments_single_equals_plain():
    rng = np.random.default_rng(10)
    g = ElementGrid(rng.integers(1, 255, (8, 8)))
    c = _costs(rng, g.shape)
    msg = rng.integers(0, 2, 20).astype(np.uint8)
    p = StcParams.for_payload(64, 20, 5, 0)
    order = np.arange(64)
    assert embed_segments(g, [(c, 10), (c, 54)], msg, p, order) == stc_embed(g, c, msg, p, order)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 10))
def test_roundtrip_property(seed, h):
    rng = np.random.default_rng(seed)
    g = ElementGrid(rng.integers(0, 256, (8, 8)))
    m = int(rng.integers(1, 33))
    msg = rng.integers(0, 2, m).astype(np.uint8)
    p = StcParams.for_payload(64, m, h, seed)
    order = rng.permutation(64)
    s = stc_embed(g, _costs(rng, g.shape), msg, p, order)
    assert np.array_equal(stc_extract(s, p, order, m), msg)
