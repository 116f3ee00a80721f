import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from planetrees.gw_sampler import gw_probability
from planetrees.offspring import (
    OffspringDistribution,
    OffspringError,
    extinction_power_probe,
    g_iter,
    height_pmf,
    height_tail,
    nu_ge2_prob,
    parse_mu_spec,
    require_valid,
    validate,
)
from planetrees.ordered_tree import trees_with_degrees

from oracles import height_masses, nu_ge2_by_child_heights, nu_ge2_by_trees

HALF = Fraction(1, 2)
BINARY = OffspringDistribution.finite({0: HALF, 2: HALF})
TERNARY = OffspringDistribution.finite({0: Fraction(2, 3), 3: Fraction(1, 3)})
LAZY = OffspringDistribution.finite({0: Fraction(1, 4), 1: HALF, 2: Fraction(1, 4)})
SUB = OffspringDistribution.finite({0: Fraction(1, 2), 1: Fraction(1, 4), 2: Fraction(1, 4)})
GEO = OffspringDistribution.geometric()
FINITE_LAWS = [BINARY, TERNARY, LAZY, SUB]


def test_validate_examples():
    d = validate(BINARY)
    assert d.valid and d.mean == 1 and d.variance == 1 and d.critical
    d = validate(OffspringDistribution.finite({0: HALF, 1: HALF}))
    assert not d.valid and d.failed == ["branching"]
    d = validate(OffspringDistribution.finite({2: 1}))
    assert not d.valid and "subcritical" in d.failed
    with pytest.raises(OffspringError) as err:
        require_valid(OffspringDistribution.finite({2: 1}))
    assert err.value.condition == "subcritical"
    assert not validate(SUB).critical


def test_construction_errors():
    with pytest.raises(OffspringError):
        OffspringDistribution.finite({0: HALF, 2: Fraction(1, 3)})
    with pytest.raises(OffspringError):
        OffspringDistribution("binomial")
    with pytest.raises(OffspringError):
        OffspringDistribution("poisson", backend="exact")
    with pytest.raises(OffspringError):
        OffspringDistribution.power_tail(2.5)


def test_parse_mu_spec():
    assert parse_mu_spec('{"0": "1/2", "2": "1/2"}') == BINARY
    assert parse_mu_spec("geometric") == GEO
    mu = parse_mu_spec({"kind": "power_tail", "params": {"alpha": 1.5}})
    assert mu.backend == "float" and mu.alpha == 1.5
    with pytest.raises(OffspringError):
        parse_mu_spec("{not json")
    assert parse_mu_spec(BINARY.to_spec()) == BINARY


def test_g_iter_examples():
    assert g_iter(GEO, 3)[3] == Fraction(3, 4)
    assert g_iter(BINARY, 2)[2] == Fraction(5, 8)
    for mu in FINITE_LAWS + [GEO]:
        assert g_iter(mu, 1)[1] == mu.pmf(0)


def test_geometric_closed_form():
    g = g_iter(GEO, 30)
    assert all(g[n] == Fraction(n, n + 1) for n in range(31))


@pytest.mark.parametrize("mu", FINITE_LAWS + [GEO], ids=["binary", "ternary", "lazy", "sub", "geo"])
def test_height_pmf_against_tree_sums(mu):
    degrees = mu.support() if mu.max_offspring is not None else range(3)
    g = g_iter(mu, 4)
    for n in range(4):
        assert height_tail(mu, n) == 1 - g[n]
    if mu.max_offspring is not None:
        masses = height_masses(mu, 3)
        for h in range(3):
            total = sum(gw_probability(t, mu) for t in trees_with_degrees(h, degrees)
                        if t.height == h)
            assert total == masses[h] == height_pmf(mu, h)


@pytest.mark.parametrize("mu", FINITE_LAWS + [GEO], ids=["binary", "ternary", "lazy", "sub", "geo"])
def test_iterates_monotone_and_convex_step(mu):
    g = g_iter(mu, 12)
    for n in range(1, 12):
        assert g[n - 1] <= g[n] <= 1
        assert g[n + 1] - g[n] >= mu.gf_prime(g[n - 1]) * (g[n] - g[n - 1])


def test_nu_tail_geometric():
    assert nu_ge2_prob(GEO, 1).value == Fraction(1, 4)
    assert nu_ge2_prob(GEO, 3).value == Fraction(1, 16)
    for n in range(1, 40):
        assert nu_ge2_prob(GEO, n).value == Fraction(1, (n + 1) ** 2)


def test_nu_tail_geometric_height_one_trees():
    # height-1 trees under the geometric law, enumerated up to 40 children
    hit = total = Fraction(0)
    for k in range(1, 41):
        w = GEO.pmf(k) * GEO.pmf(0) ** k
        total += w
        if k >= 2:
            hit += w
    assert abs(float(hit / total) - 0.25) < 1e-10


@pytest.mark.parametrize("mu", [BINARY, TERNARY, LAZY], ids=["binary", "ternary", "lazy"])
def test_nu_tail_brute_force(mu):
    for n in range(1, 6):
        res = nu_ge2_prob(mu, n)
        assert res.value == nu_ge2_by_child_heights(mu, n)
        assert 0 <= res.value <= 1 and res.value <= res.bound


@pytest.mark.parametrize("mu,top", [(BINARY, 4), (TERNARY, 3), (LAZY, 3)],
                         ids=["binary", "ternary", "lazy"])
def test_child_height_oracle_against_full_enumeration(mu, top):
    for n in range(1, top + 1):
        assert nu_ge2_by_trees(mu, n) == nu_ge2_by_child_heights(mu, n)


def test_nu_tail_degenerate():
    with pytest.raises(ValueError):
        nu_ge2_prob(BINARY, 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=3, max_size=5), st.floats(0, 1))
def test_derivative_bounds(weights, u):
    # random critical or subcritical laws: 0 ≤ g'(u) ≤ 1
    masses = {k: Fraction(w) for k, w in enumerate(weights) if w}
    total = sum(masses.values())
    if total == 0:
        return
    mu = OffspringDistribution.finite({k: v / total for k, v in masses.items()})
    if not validate(mu).valid:
        return
    s = Fraction(u).limit_denominator(1000)
    assert 0 <= mu.gf_prime(s) <= 1
    assert 0 <= mu.gf(s) <= 1


def test_extinction_power_probe_geometric():
    vals = extinction_power_probe(GEO, 1, [1, 10, 100, 1000], lambda p: p * p)
    for p, v in zip([1, 10, 100, 1000], vals):
        assert v == pytest.approx((p / (p + 1)) ** p, rel=1e-9)
    assert vals[-1] == pytest.approx(math.exp(-1), abs=1e-3)
    assert vals[0] == pytest.approx(0.5)


def test_extinction_power_probe_binary_bounded_below():
    vals = extinction_power_probe(BINARY, 1, [10, 100, 1000, 10000], lambda p: math.ceil(p * p / 2))
    assert min(vals) > 0.1


def test_float_families():
    poi = OffspringDistribution.poisson()
    assert poi.pmf(0) == pytest.approx(math.exp(-1))
    assert validate(poi).valid
    pt = OffspringDistribution.power_tail(1.5)
    assert pt.pmf(1) == 0
    total = pt.mass0 + pt.tail_const * (float(__import__("mpmath").zeta(2.5)) - 1)
    assert total == pytest.approx(1.0, abs=1e-12)
    mean = pt.tail_const * (float(__import__("mpmath").zeta(1.5)) - 1)
    assert mean == pytest.approx(1.0, abs=1e-12)
    assert pt.gf(1.0) == pytest.approx(1.0, abs=1e-10)
    assert pt.gf_prime(1.0) == pytest.approx(1.0, abs=1e-10)


def test_geometric_float_backend_matches_exact():
    flt = OffspringDistribution.geometric("float")
    g_exact, g_flt = g_iter(GEO, 20), g_iter(flt, 20)
    assert all(abs(float(a) - b) < 1e-14 for a, b in zip(g_exact, g_flt))


def test_draw_frequencies():
    import numpy as np

    gen = np.random.default_rng(1)
    draws = TERNARY.draw(gen, 60000)
    assert set(np.unique(draws)) <= {0, 3}
    assert abs((draws == 3).mean() - 1 / 3) < 4 * math.sqrt(2 / 9 / 60000)
    pt = OffspringDistribution.power_tail(1.5)
    big = pt.draw(gen, 20000)
    assert abs((big == 0).mean() - pt.mass0) < 4 * math.sqrt(0.25 / 20000)


def test_gf_slope_is_the_difference_quotient():
    pts = [Fraction(0), Fraction(1, 3), Fraction(7, 9), Fraction(1)]
    for mu in FINITE_LAWS + [GEO]:
        for x in pts:
            for y in pts:
                if x != y:
                    assert mu.gf_slope(x, y) == (mu.gf(y) - mu.gf(x)) / (y - x)
        assert mu.gf_slope(pts[1], pts[1]) == mu.gf_prime(pts[1])
    for mu in (OffspringDistribution.poisson(), OffspringDistribution.power_tail(1.5)):
        x, y = 0.3, 0.8
        assert mu.gf_slope(x, y) == pytest.approx((mu.gf(y) - mu.gf(x)) / (y - x), rel=1e-9)
