"""Exact sampler for plane trees with a prescribed diameter and a uniform central edge.

Two independent conditioned GW trees τ (height ⌊(k-1)/2⌋) and τ̃ (height
⌊k/2⌋) are glued by compose(τ, τ̃) and the pair is kept with probability
Sym/2 (odd k) or Sym/(1 + ν(τ̃)) (even k).  Accepted outputs are plane
trees T of diameter k with law W_μ(T)/Z_k(μ), together with a central edge
that is uniform on K(T) given T.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional

from .gw_sampler import (
    DEFAULT_BUDGET,
    BudgetExceeded,
    ChiSquare,
    SampleBudget,
    _gen,
    chi_square_gof,
    gw_probability,
    sample_height_eq_batch,
)
from .offspring import OffspringDistribution, g_iter, require_valid
from .ordered_tree import OrderedTree, contour, nu, trees_with_degrees
from .plane_tree import (
    EdgeRootedCode,
    PlaneCode,
    PlaneGraph,
    canonicalize,
    compose,
    plane_trees_of_diameter,
    sym_from_pair,
)


class DiameterSamplerError(ValueError):
    pass


@dataclass
class DiameterSample:
    rooted: EdgeRootedCode
    t_minus: OrderedTree
    t_plus: OrderedTree
    accepted_after: int
    sym: int = 0
    k: int = 0

    @cached_property
    def plane(self) -> PlaneCode:
        """Canonical code of the underlying plane tree (quadratic in the size, computed on demand)."""
        return canonicalize(self.rooted.code)

    @property
    def size(self) -> int:
        return self.rooted.code.size

    @property
    def n_central(self) -> int:
        """|K(T)|: 2 for odd k, 1 + ν(T+) for even k."""
        return 2 if self.k % 2 else 1 + nu(self.t_plus)


def acceptance_weight(t1: OrderedTree, t2: OrderedTree) -> Fraction:
    """Sym/2 when the heights agree (odd diameter), Sym/(1 + ν(t2)) otherwise."""
    s = sym_from_pair(t1, t2)
    if t1.height == t2.height:
        return Fraction(s, 2)
    return Fraction(s, 1 + nu(t2))


def sample_diameter_batch(mu: OffspringDistribution, k: int, n: int, rng,
                          budget: SampleBudget = DEFAULT_BUDGET) -> list:
    """n independent samples of (T, ε) for diameter k."""
    require_valid(mu)
    if k < 1:
        raise DiameterSamplerError("k must be at least 1")
    h1, h2 = (k - 1) // 2, k // 2
    g = g_iter(mu, h2 + 1)
    if g[h1 + 1] - g[h1] <= 0 or g[h2 + 1] - g[h2] <= 0:
        raise DiameterSamplerError(f"Z_{k}(μ) = 0")
    gen = _gen(rng)
    out: list = []
    attempts = 0
    while len(out) < n:
        chunk = max(16, (n - len(out)) * 5 // 4)
        lows = sample_height_eq_batch(mu, h1, chunk, gen, budget)
        highs = sample_height_eq_batch(mu, h2, chunk, gen, budget)
        uniforms = gen.random(chunk)
        for t1, t2, u in zip(lows, highs, uniforms):
            attempts += 1
            if attempts > budget.max_attempts:
                raise BudgetExceeded(f"no acceptance in {budget.max_attempts} attempts",
                                     attempts=attempts)
            w = acceptance_weight(t1, t2)
            if u < w:
                rooted = compose(t1, t2)
                out.append(DiameterSample(rooted, t1, t2, attempts, sym_from_pair(t1, t2), k))
                attempts = 0
                if len(out) == n:
                    break
    return out


def sample_diameter(mu: OffspringDistribution, k: int, rng,
                    budget: SampleBudget = DEFAULT_BUDGET) -> DiameterSample:
    return sample_diameter_batch(mu, k, 1, rng, budget)[0]


def contour_of_sample(ds: DiameterSample) -> list:
    """Contour of the edge-rooted tree: it explores T+ (one unit up) first, then T-."""
    return contour(ds.rooted.code)


# ---------------------------------------------------------------- exact laws and checks

def exact_pair_law(mu: OffspringDistribution, k: int) -> dict:
    """Exact law of (T-, T+) under the sampler, for finitely supported μ."""
    if mu.max_offspring is None:
        raise DiameterSamplerError("exact pair law needs a finitely supported law")
    support = mu.support()
    h1, h2 = (k - 1) // 2, k // 2
    low = [t for t in trees_with_degrees(h1, support) if t.height == h1]
    high = low if h1 == h2 else [t for t in trees_with_degrees(h2, support) if t.height == h2]
    law = {}
    for t1 in low:
        p1 = gw_probability(t1, mu)
        for t2 in high:
            w = p1 * gw_probability(t2, mu) * acceptance_weight(t1, t2)
            if w > 0:
                law[(t1, t2)] = w
    total = sum(law.values())
    return {key: w / total for key, w in law.items()}


def exact_plane_law(mu: OffspringDistribution, k: int, size_cap: Optional[int] = None) -> dict:
    """Q_k(t) = W_μ(t)/Z_k(μ) over plane trees of diameter k.

    With size_cap the law is conditioned on having at most size_cap vertices.
    """
    weights = plane_trees_of_diameter(k, mu, size_cap)
    total = sum(weights.values())
    return {pc: w / total for pc, w in weights.items()}


def pair_law_check(samples: list, mu: OffspringDistribution, k: int) -> ChiSquare:
    observed = Counter((s.t_minus, s.t_plus) for s in samples)
    return chi_square_gof(observed, exact_pair_law(mu, k))


def marginal_plane_law_check(samples: list, mu: OffspringDistribution, k: int,
                             size_cap: Optional[int] = None) -> ChiSquare:
    """Chi-square of plane-tree frequencies against W_μ/Z_k.

    With size_cap (needed for infinite support) only samples with at most
    size_cap vertices are compared, against the law conditioned on that event.
    """
    if size_cap is None and mu.max_offspring is None:
        raise DiameterSamplerError("infinite support needs a size cap")
    kept = [s for s in samples if size_cap is None or s.size <= size_cap]
    observed = Counter(s.plane for s in kept)
    return chi_square_gof(observed, exact_plane_law(mu, k, size_cap))


@dataclass
class EdgeUniformity:
    statistic: float
    df: int
    pvalue: float
    trees_tested: int
    per_tree: list = field(default_factory=list)

    def passed(self, level: float = 0.01) -> bool:
        return self.pvalue >= level


def edge_uniformity_check(samples: list, min_expected: float = 5.0) -> EdgeUniformity:
    """Given the plane tree, the rooted code should equal c with probability Sym(c)/|K|.

    Distinct central edges that produce the same rooted code cannot be told
    apart, so uniformity on K(T) is tested on the induced law of the codes.
    Trees too rarely seen to fill every cell are skipped.
    """
    from scipy.stats import chi2

    by_tree: dict = defaultdict(Counter)
    for s in samples:
        by_tree[s.plane][s.rooted.code] += 1
    total_stat, total_df, tested, per_tree = 0.0, 0, 0, []
    for pc, codes in by_tree.items():
        g = PlaneGraph(pc.canonical)
        central = g.central_edges()
        induced = Counter(g.root_at(a, b) for a, b in central)
        hits = sum(codes.values())
        if len(induced) < 2 or hits * min(induced.values()) / len(central) < min_expected:
            continue
        stat = 0.0
        for code, mult in induced.items():
            expected = hits * mult / len(central)
            stat += (codes.get(code, 0) - expected) ** 2 / expected
        stray = sum(c for code, c in codes.items() if code not in induced)
        if stray:
            stat = float("inf")
        df = len(induced) - 1
        per_tree.append((str(pc), hits, stat, df))
        total_stat += stat
        total_df += df
        tested += 1
    pvalue = float(chi2.sf(total_stat, total_df)) if total_df else 1.0
    return EdgeUniformity(total_stat, total_df, pvalue, tested, per_tree)


def product_law_distance(mu: OffspringDistribution, k: int) -> float:
    """Total variation between the exact (T-, T+) law and the independent product law."""
    if mu.max_offspring is None:
        raise DiameterSamplerError("needs a finitely supported law")
    law = exact_pair_law(mu, k)
    h1, h2 = (k - 1) // 2, k // 2
    g = g_iter(mu, h2 + 1)
    z1, z2 = g[h1 + 1] - g[h1], g[h2 + 1] - g[h2]
    dist = 0
    for (t1, t2), q in law.items():
        dist += abs(q - gw_probability(t1, mu) / z1 * gw_probability(t2, mu) / z2)
    # pairs outside the support of the sampler law
    covered = sum(gw_probability(t1, mu) / z1 * gw_probability(t2, mu) / z2 for t1, t2 in law)
    dist += 1 - covered
    return dist / 2


def symmetry_bound_terms(mu: OffspringDistribution, k: int):
    """(a_k, b_k): P(Sym ≥ 2) for the independent pair and P(ν(τ̃) ≥ 2), exact."""
    if mu.max_offspring is None:
        raise DiameterSamplerError("needs a finitely supported law")
    support = mu.support()
    h1, h2 = (k - 1) // 2, k // 2
    g = g_iter(mu, h2 + 1)
    z1, z2 = g[h1 + 1] - g[h1], g[h2 + 1] - g[h2]
    low = [t for t in trees_with_degrees(h1, support) if t.height == h1]
    high = low if h1 == h2 else [t for t in trees_with_degrees(h2, support) if t.height == h2]
    a = b = 0
    for t2 in high:
        p2 = gw_probability(t2, mu) / z2
        if nu(t2) >= 2:
            b += p2
        for t1 in low:
            if sym_from_pair(t1, t2) >= 2:
                a += gw_probability(t1, mu) / z1 * p2
    return a, b


def collision_probability(mu: OffspringDistribution, h: int):
    """P(τ = τ̃) for independent trees conditioned on height h, exact."""
    if mu.max_offspring is None:
        raise DiameterSamplerError("needs a finitely supported law")
    g = g_iter(mu, h + 1)
    z = g[h + 1] - g[h]
    pool = [t for t in trees_with_degrees(h, mu.support()) if t.height == h]
    return sum((gw_probability(t, mu) / z) ** 2 for t in pool)


def symmetry_collision_bound(mu: OffspringDistribution, k: int):
    """Upper bound on P(Sym ≥ 2) by the collision probability at height ⌊(k-1)/2⌋.

    The collision probability is divided by g'(g_h(0)), h = ⌊(k-1)/2⌋, which
    is at most 1, so for odd k the bound is immediate.  A vanishing
    derivative makes the bound vacuous (infinite).
    """
    h = (k - 1) // 2
    g = g_iter(mu, h)
    slope = mu.gf_prime(g[h])
    if slope == 0:
        return math.inf
    return collision_probability(mu, h) / slope
