import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from planetrees.gw_sampler import RngStream, sample_height_eq_batch
from planetrees.limits import (
    BranchingMechanism,
    LimitError,
    b_p_for,
    convergence_report,
    diameter_samples,
    diameter_tail,
    diameter_tail_numeric,
    ks_two_sample,
    max_within,
    rescale,
    split_counts,
    stable_constant,
    v_numeric,
    v_of_r,
)
from planetrees.offspring import OffspringDistribution
from planetrees.ordered_tree import contour

HALF = Fraction(1, 2)
BINARY = OffspringDistribution.finite({0: HALF, 2: HALF})
GEO = OffspringDistribution.geometric()
BROWNIAN = BranchingMechanism.brownian()
MECHANISMS = [BROWNIAN] + [BranchingMechanism.stable(a) for a in (1.2, 1.5, 1.8)]


def test_v_examples():
    assert v_of_r(BROWNIAN, 2) == 0.5
    for al in (1.2, 1.5, 1.8):
        assert v_of_r(BranchingMechanism.stable(al), 1.3) == pytest.approx(
            ((al - 1) * 1.3) ** (-1 / (al - 1)))
    assert v_of_r(BranchingMechanism.stable(2.0), 0.7) == pytest.approx(1 / 0.7)
    assert v_of_r(BranchingMechanism.stable(1.999999), 0.7) == pytest.approx(1 / 0.7, rel=1e-4)
    assert v_of_r(BranchingMechanism.custom(0, 1), 3) == pytest.approx(1 / 3, rel=1e-9)


def test_diameter_tail_examples():
    assert diameter_tail(BROWNIAN, 1) == pytest.approx(2 / 3)
    for r in (0.1, 0.5, 2.0, 17.0):
        assert diameter_tail(BROWNIAN, r) * r == pytest.approx(2 / 3)
    stable2 = BranchingMechanism.stable(2.0)
    assert diameter_tail(stable2, 1.7) == pytest.approx(diameter_tail(BROWNIAN, 1.7))


@pytest.mark.parametrize("psi", MECHANISMS, ids=["brownian", "a1.2", "a1.5", "a1.8"])
def test_closed_forms_match_numeric(psi):
    for r in (0.05, 0.3, 1.0, 2.5, 10.0):
        assert v_numeric(psi, r) == pytest.approx(v_of_r(psi, r), rel=1e-9)
        assert diameter_tail_numeric(psi, r) == pytest.approx(diameter_tail(psi, r), rel=1e-9)


@pytest.mark.parametrize("psi", MECHANISMS, ids=["brownian", "a1.2", "a1.5", "a1.8"])
def test_diameter_tail_positive_and_decreasing(psi):
    rs = [0.1 * 1.5 ** j for j in range(12)]
    vals = [diameter_tail(psi, r) for r in rs]
    assert all(v > 0 for v in vals)
    assert all(a > b for a, b in zip(vals, vals[1:]))
    # a tail of D beyond 2r never exceeds the height tail beyond r
    assert all(d < v_of_r(psi, r) for d, r in zip(vals, rs))


def test_custom_mechanism_with_jumps():
    psi = BranchingMechanism.custom(0.5, 1.0, [(0.5, 2.0), (2.0, 0.3)])
    assert psi(1.0) == pytest.approx(0.5 + 1 + 2 * (math.exp(-0.5) - 1 + 0.5)
                                     + 0.3 * (math.exp(-2) - 1 + 2))
    for r in (0.2, 1.0, 4.0):
        v = v_of_r(psi, r)
        # direct quadrature of the defining integral, as a second route
        tail, _ = integrate.quad(lambda lam: 1 / psi(lam), v, np.inf, epsrel=1e-12, limit=400)
        assert tail == pytest.approx(r, rel=1e-8)
        assert 0 < diameter_tail(psi, r) < v


def test_mechanism_errors():
    with pytest.raises(LimitError):
        BranchingMechanism.stable(1.0)
    with pytest.raises(LimitError):
        BranchingMechanism.stable(2.5)
    with pytest.raises(LimitError):
        BranchingMechanism.custom(1.0, 0.0, [(1.0, 1.0)])
    with pytest.raises(LimitError):
        BranchingMechanism.custom(-1.0, 1.0)
    with pytest.raises(LimitError):
        v_of_r(BROWNIAN, 0)


def test_b_p_examples():
    assert [b_p_for(GEO, p) for p in (1, 7, 50)] == [1, 49, 2500]
    assert [b_p_for(BINARY, p) for p in (1, 5, 7)] == [1, 13, 25]
    assert b_p_for(OffspringDistribution.poisson(), 4) == 8
    vals = [b_p_for(BINARY, p) for p in range(1, 60)]
    assert vals == sorted(vals)
    with pytest.raises(LimitError):
        b_p_for(GEO, 0)


def test_b_p_stable_constant():
    mu = OffspringDistribution.power_tail(1.5)
    c = mu.tail_const
    expected = (c * math.gamma(0.5) / 0.75) ** 2
    assert stable_constant(mu) == pytest.approx(expected)
    vals = [b_p_for(mu, p) for p in range(1, 30)]
    assert vals == sorted(vals)
    assert b_p_for(mu, 10) == math.ceil(expected * 10 ** 3)


def test_rescale_examples():
    trees = sample_height_eq_batch(GEO, 6, 30, RngStream(41))
    for t in trees:
        path = rescale(contour(t), 6, 36)
        assert path.max() == 1.0
        assert path.lifetime == pytest.approx((t.size - 1) / 36)
        assert path.value_at(0.0) == 0.0
        assert path.value_at(path.lifetime + 1) == 0.0
    path = rescale([0, 1, 2, 1, 0], 2, 1)
    assert path.value_at(0.25) == pytest.approx(0.25)


def test_ks_examples():
    xs = np.arange(100.0)
    assert ks_two_sample(xs, xs)[0] == 0
    assert ks_two_sample(xs, xs + 1000)[0] == 1
    with pytest.raises(LimitError):
        ks_two_sample([], xs)


def test_ks_threshold_calibration():
    gen = np.random.default_rng(42)
    below = 0
    for _ in range(200):
        stat, thr = ks_two_sample(gen.exponential(size=2000), gen.exponential(size=2000))
        below += stat < thr
    assert below >= 0.95 * 200


def test_split_counts():
    assert split_counts(10, 3) == [4, 3, 3]
    assert split_counts(2, 4) == [1, 1, 0, 0]
    with pytest.raises(LimitError):
        split_counts(3, 0)


def test_diameter_samples_stream_merge():
    a = diameter_samples(GEO, 5, 12, seed=3, streams=3)
    b = diameter_samples(GEO, 5, 12, seed=3, streams=3)
    assert [s.rooted for s in a] == [s.rooted for s in b] and len(a) == 12


def test_max_within_and_half_heights():
    for p in (6, 7):
        for s in diameter_samples(GEO, p, 40, seed=5):
            assert max_within(s, p, 1)
            top = max(contour(s.rooted.code))
            assert top in (p // 2, p // 2 + 1)


def test_convergence_report_small():
    rows = convergence_report(GEO, 1, [6, 12], 300, seed=9, s_probe=0.1, keep_samples=True)
    assert [r.k for r in rows] == [6, 12]
    assert rows[0].ks_vs_prev_p is None and rows[1].ks_vs_prev_p is not None
    assert all(r.half_height_ok and r.max_ok for r in rows)
    assert len(rows[1].lifetimes) == 300
    assert all(0 <= r.frac_symmetric <= 1 for r in rows)
    assert rows[0].mean_value_at_s > 0
    with pytest.raises(LimitError):
        convergence_report(GEO, Fraction(1, 10), [3], 5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 50.0))
def test_brownian_tail_scale(r):
    assert diameter_tail(BROWNIAN, r) * r == pytest.approx(2 / 3, rel=1e-12)
