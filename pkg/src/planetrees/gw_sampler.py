"""Galton-Watson samplers, unconditioned and conditioned on the height.

Trees conditioned on {Γ = p} are produced by drawing τ conditioned on
{Γ ≥ p} and returning the subtree Θ_p(τ) hanging from the ancestor of the
first tip, p generations above it.  This has the law of τ conditioned on
{Γ = p}.

Critical trees conditioned to be tall are huge, so the default ``profile``
method never materializes τ.  It first simulates the generation sizes of τ,
then reveals only the part of τ that Θ_p depends on.  Given the generation
sizes, the offspring numbers inside one generation form an exchangeable
vector whose law is explicit:

* finite support: a uniform arrangement of the multiset of offspring types,
  whose type counts are multinomial;
* geometric(1/2): a uniform weak composition of the next generation size;
* Poisson(1): a uniform multinomial allocation of the next generation.

Partial sums of such vectors are revealed lazily (hypergeometric,
beta-binomial and binomial splits respectively).  The ``full`` method
builds τ vertex by vertex and extracts Θ_p with
:func:`planetrees.ordered_tree.theta_extract`; it serves as a cross-check
and as the fallback for laws without an exchangeable description.
"""
from __future__ import annotations

import math
import random
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .offspring import OffspringDistribution, g_iter, require_valid
from .ordered_tree import LEAF, OrderedTree, from_child_counts, theta_extract, trees_with_degrees

# generations up to this size are drawn with scalar draws
SMALL = 16
LOG_HALF = math.log(0.5)


class BudgetExceeded(RuntimeError):
    def __init__(self, message: str, attempts: int = 0, nodes: int = 0):
        super().__init__(message)
        self.attempts = attempts
        self.nodes = nodes


@dataclass(frozen=True)
class SampleBudget:
    max_attempts: int = 10**6
    max_nodes: int = 10**8

    def __post_init__(self):
        if self.max_attempts <= 0 or self.max_nodes <= 0:
            raise ValueError("budgets must be positive")


DEFAULT_BUDGET = SampleBudget()


class RngStream:
    """Counter-based random stream keyed by (seed, stream_id)."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(seq))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


def gw_probability(t: OrderedTree, mu: OffspringDistribution):
    """∏ over vertices of μ(number of children)."""
    p = mu.pmf(len(t.children))
    stack = list(t.children)
    while stack:
        node = stack.pop()
        p *= mu.pmf(len(node.children))
        if p == 0:
            return p
        stack.extend(node.children)
    return p


# ---------------------------------------------------------------- full generation

def _grow(mu, gen, stop_below: Optional[int], max_nodes: int):
    """Breadth-first generation; returns (BFS child counts, height) or None if cut.

    With ``stop_below`` = p the tree is abandoned (None) as soon as it is
    known to die out before depth p.
    """
    counts = []
    level = 1
    depth = 0
    total = 1
    while True:
        kids = mu.draw(gen, level)
        counts.append(kids)
        nxt = int(kids.sum())
        if nxt == 0:
            break
        total += nxt
        if total > max_nodes:
            raise BudgetExceeded(f"tree exceeded {max_nodes} vertices", nodes=total)
        level = nxt
        depth += 1
    if stop_below is not None and depth < stop_below:
        return None
    return np.concatenate(counts), depth


def sample_gw(mu: OffspringDistribution, rng, budget: SampleBudget = DEFAULT_BUDGET) -> OrderedTree:
    """One GW(μ) tree."""
    require_valid(mu)
    counts, _ = _grow(mu, _gen(rng), None, budget.max_nodes)
    return from_child_counts(counts.tolist(), "bfs")


def sample_height_geq(mu: OffspringDistribution, p: int, rng,
                      budget: SampleBudget = DEFAULT_BUDGET) -> OrderedTree:
    """GW(μ) tree conditioned on Γ ≥ p, by rejection."""
    require_valid(mu)
    gen = _gen(rng)
    for attempt in range(1, budget.max_attempts + 1):
        grown = _grow(mu, gen, p, budget.max_nodes)
        if grown is not None:
            return from_child_counts(grown[0].tolist(), "bfs")
    raise BudgetExceeded(f"no tree of height ≥ {p} in {budget.max_attempts} attempts",
                         attempts=budget.max_attempts)


# ---------------------------------------------------------------- exchangeable generations

class _Exchangeable:
    """Offspring vector of one generation, revealed lazily.

    ``content`` of a block is its sum (geometric, Poisson) or its vector of
    offspring-type counts (finite support).  Blocks between revealed
    breakpoints are exchangeable given their content.
    """

    def __init__(self, kind: str, length: int, content, gen: np.random.Generator,
                 py: random.Random):
        self.kind = kind
        self.gen = gen
        self.py = py
        self.points = [0, length]
        self.cum = [0, self._total(content)]
        self.contents = {0: content}

    def _total(self, content) -> int:
        if self.kind == "finite":
            return sum(k * c for k, c in enumerate(content))
        return int(content)

    def _split(self, content, length, q):
        gen = self.gen
        if self.kind == "finite":
            if sum(content) <= SMALL:
                # draw q of the items without replacement
                pool = [k for k, c in enumerate(content) for _ in range(c)]
                left = [0] * len(content)
                for k in self.py.sample(pool, q):
                    left[k] += 1
                return left
            return gen.multivariate_hypergeometric(content, q).tolist()
        if content == 0:
            return 0
        if self.kind == "geometric":
            return int(gen.binomial(content, gen.beta(q, length - q)))
        return int(gen.binomial(content, q / length))

    def _minus(self, content, left):
        if self.kind == "finite":
            return [c - x for c, x in zip(content, left)]
        return content - left

    def _parts(self, content, length) -> list:
        gen = self.gen
        if length == 1:
            return [self._total(content)]
        if self.kind == "finite":
            pool = [k for k, c in enumerate(content) for _ in range(c)]
            self.py.shuffle(pool)
            return pool
        if content == 0:
            return [0] * length
        if self.kind == "geometric":
            slots = content + length - 1
            if slots <= 4 * SMALL:
                bars = sorted(self.py.sample(range(slots), length - 1))
                prev, out = -1, []
                for b in bars:
                    out.append(b - prev - 1)
                    prev = b
                out.append(slots - prev - 1)
                return out
            bars = np.sort(gen.choice(slots, length - 1, replace=False))
            edges = np.concatenate(([-1], bars, [content + length - 1]))
            return np.diff(edges) - 1
        return gen.multinomial(content, np.full(length, 1.0 / length))

    def ensure(self, q: int) -> int:
        """Reveal the prefix sum up to position q and return it."""
        j = bisect_right(self.points, q) - 1
        start = self.points[j]
        if start == q:
            return self.cum[j]
        end = self.points[j + 1]
        content = self.contents.pop(start)
        left = self._split(content, end - start, q - start)
        right = self._minus(content, left)
        self.points.insert(j + 1, q)
        self.cum.insert(j + 1, self.cum[j] + self._total(left))
        self.contents[start] = left
        self.contents[q] = right
        return self.cum[j + 1]

    def parent_of(self, i: int) -> int:
        """Index of the vertex whose children block contains next-generation vertex i."""
        while True:
            j = bisect_right(self.cum, i) - 1
            # skip breakpoints with equal cumulative sums: take the last one ≤ i
            start, end = self.points[j], self.points[j + 1]
            if end - start == 1:
                return start
            self.ensure((start + end) // 2)

    def parts(self, lo: int, hi: int) -> list:
        """Offspring numbers of vertices lo, ..., hi-1."""
        if hi <= lo:
            return []
        self.ensure(lo)
        self.ensure(hi)
        j = self.points.index(lo)
        out: list = []
        while self.points[j] < hi:
            start, end = self.points[j], self.points[j + 1]
            block = self._parts(self.contents[start], end - start)
            out.extend(block.tolist() if isinstance(block, np.ndarray) else block)
            j += 1
        return out


def _profile_kind(mu: OffspringDistribution) -> Optional[str]:
    if mu.kind in ("finite", "geometric", "poisson"):
        return mu.kind
    return None


def _theta_from_window(kind, window, gen, py, max_nodes) -> OrderedTree:
    """Θ_p from the last p+1 generations.

    ``window`` lists (Z_m, content_m) for m = n-p, ..., n-1 where content_m
    describes the offspring vector of generation m.
    """
    levels = [_Exchangeable(kind, z, c, gen, py) for z, c in window]
    # climb from the first tip (vertex 0 of the last generation)
    idx = 0
    for lev in reversed(levels):
        idx = lev.parent_of(idx)
    lo, hi = idx, idx + 1
    counts: list = []
    total = 1
    for lev in levels:
        kids = lev.parts(lo, hi)
        counts.extend(kids)
        total += sum(kids)
        if total > max_nodes:
            raise BudgetExceeded(f"Θ_p exceeded {max_nodes} vertices", nodes=total)
        lo, hi = lev.ensure(lo), lev.ensure(hi)
    counts.extend([0] * (hi - lo))
    return from_child_counts(counts, "bfs")


class _GenerationSizes:
    """Next-generation draws for one tree, with a scalar fast path for small generations."""

    def __init__(self, mu, gen):
        self.kind = _profile_kind(mu)
        self.gen = gen
        self.py = random.Random(int(gen.integers(2**63)))
        if self.kind == "finite":
            self.pvals = np.array([float(mu.pmf(k)) for k in range(mu.max_offspring + 1)])
            self.pvals = self.pvals / self.pvals.sum()
            self.cdf = list(np.cumsum(self.pvals))
            self.cdf[-1] = 1.0

    def draw(self, z: int):
        """(content, next generation size) for a generation of size z."""
        py = self.py
        if self.kind == "finite":
            if z <= SMALL:
                content = [0] * len(self.cdf)
                for _ in range(z):
                    content[bisect_right(self.cdf, py.random())] += 1
            else:
                content = self.gen.multinomial(z, self.pvals).tolist()
            return content, sum(k * c for k, c in enumerate(content))
        if self.kind == "geometric":
            if z <= SMALL:
                nxt = sum(int(math.log(1.0 - py.random()) / LOG_HALF) for _ in range(z))
            else:
                nxt = int(self.gen.negative_binomial(z, 0.5))
            return nxt, nxt
        if z <= SMALL:
            # Poisson(z) by multiplying uniforms
            limit = math.exp(-z)
            nxt, prod = 0, py.random()
            while prod > limit:
                nxt += 1
                prod *= py.random()
        else:
            nxt = int(self.gen.poisson(z))
        return nxt, nxt


def _skip_depth(p: int) -> int:
    """Depth after which geometric attempts jump straight to the extinction window."""
    return max(4 * p, 64)


def _profile_attempt(sizes: _GenerationSizes, p: int):
    """Simulate generation sizes to extinction; the last p generations if the height is ≥ p."""
    history: deque = deque(maxlen=p)
    z, depth = 1, 0
    skip = _skip_depth(p) if sizes.kind == "geometric" else None
    while True:
        if skip is not None and depth >= skip:
            return _geometric_tail_window(sizes, z, p, history, depth)
        content, nxt = sizes.draw(z)
        if nxt == 0:
            return list(history) if depth >= p else None
        if p:
            history.append((z, content))
        z = nxt
        depth += 1


# Skipping ahead for geometric(1/2) offspring.  One ancestor has
# P(Z_i = 0) = i/(i+1) and P(Z_i = k) = i^(k-1)/(i+1)^(k+1), so tilting by s^k
# keeps a zero-modified geometric form, and g_j(0) = j/(j+1).

def _geo_g(j: int) -> float:
    return j / (j + 1) if j >= 0 else 0.0


def _geo_tilted(gen, z: int, i: int, s: float) -> int:
    """Z_i from z ancestors under the law reweighted by s^(Z_i)."""
    if s == 0.0:
        return 0
    f = (i - (i - 1) * s) / (i + 1 - i * s)
    survive = 1.0 - (i / (i + 1)) / f
    ratio = i * s / (i + 1)
    alive = int(gen.binomial(z, min(max(survive, 0.0), 1.0)))
    if alive == 0:
        return 0
    return alive + int(gen.negative_binomial(alive, 1.0 - ratio))


def _positive_binomial(gen, n: int, q: float) -> int:
    """Binomial(n, q) conditioned to be at least 1."""
    positive = -math.expm1(n * math.log1p(-q))
    if positive > 0.25:
        while True:
            k = int(gen.binomial(n, q))
            if k:
                return k
    # inverse transform over k = 1, 2, ...
    target = gen.random() * positive
    k = 1
    pk = n * q * math.exp((n - 1) * math.log1p(-q))
    acc = pk
    while acc < target and k < n:
        pk *= (n - k) / (k + 1) * q / (1 - q)
        k += 1
        acc += pk
    return k


def _geo_bridge(gen, z: int, i: int, r: int) -> int:
    """Z_i from z ancestors given that the population dies out exactly r generations after step i.

    Each ancestor line dies out by generation T = i + r, and at least one of
    them exactly then; given T the number of such lines is binomial with
    q = 1 - g_{T-1}(0)/g_T(0) = 1/T^2.  A line dying at T contributes
    1 + G_a + G_b at step i (G_a, G_b geometric with ratios i g_r/(i+1) and
    i g_{r-1}/(i+1)); the other lines follow the g_{r-1}-tilted law.
    """
    total = i + r
    k = _positive_binomial(gen, z, 1.0 / (total * total))
    ra = i * _geo_g(r) / (i + 1)
    rb = i * _geo_g(r - 1) / (i + 1)
    y = k + int(gen.negative_binomial(k, 1.0 - ra))
    if rb > 0:
        y += int(gen.negative_binomial(k, 1.0 - rb))
    if z > k:
        y += _geo_tilted(gen, z - k, i, _geo_g(r - 1))
    return y


def _geometric_tail_window(sizes: _GenerationSizes, z: int, p: int, history: deque,
                           depth: int):
    """Window of the last p generations, drawn from the exact law given the current size z.

    The remaining lifetime m (first depth with no vertex, counted from here)
    satisfies P(m ≤ M) = (M/(M+1))^z.  None when the height depth + m - 1 is
    below p.
    """
    gen = sizes.gen
    v = gen.random()
    if v == 0.0:
        m = 1
    else:
        t = math.log(v) / z
        m = max(1, math.ceil(math.exp(t) / -math.expm1(t)))
    if depth + m - 1 < p:
        return None
    if m <= p:
        entries = list(history)
        x, r = z, m
    else:
        x = z if m - 1 - p == 0 else _geo_bridge(gen, z, m - 1 - p, p + 1)
        entries = []
        r = p + 1
    # step generation by generation given death exactly r generations ahead
    while r > 1:
        nxt = _geo_bridge(gen, x, 1, r - 1)
        entries.append((x, nxt))
        x, r = nxt, r - 1
    return entries[-p:] if p else []


def sample_height_eq_batch(mu: OffspringDistribution, p: int, n: int, rng,
                           budget: SampleBudget = DEFAULT_BUDGET, method: str = "profile") -> list:
    """n independent trees with the law of τ conditioned on Γ(τ) = p, via Θ_p(τ | Γ ≥ p)."""
    require_valid(mu)
    if p < 0:
        raise ValueError("p must be nonnegative")
    gen = _gen(rng)
    if method == "profile" and _profile_kind(mu) is None:
        method = "full"
    out: list = []
    attempts = 0
    limit = budget.max_attempts * max(n, 1)
    if method == "full":
        while len(out) < n:
            attempts += 1
            if attempts > limit:
                raise BudgetExceeded(f"only {len(out)} of {n} trees after {limit} attempts",
                                     attempts=limit)
            grown = _grow(mu, gen, p, budget.max_nodes)
            if grown is not None:
                tau = from_child_counts(grown[0].tolist(), "bfs")
                out.append(theta_extract(tau, p)[0])
        return out
    if method != "profile":
        raise ValueError(f"unknown method {method!r}")
    sizes = _GenerationSizes(mu, gen)
    kind = sizes.kind
    while len(out) < n:
        attempts += 1
        if attempts > limit:
            raise BudgetExceeded(f"only {len(out)} of {n} trees after {limit} attempts",
                                 attempts=limit)
        window = _profile_attempt(sizes, p)
        if window is None:
            continue
        out.append(_theta_from_window(kind, window, gen, sizes.py, budget.max_nodes) if p else LEAF)
    return out


def sample_height_eq(mu: OffspringDistribution, p: int, rng,
                     budget: SampleBudget = DEFAULT_BUDGET, method: str = "profile") -> OrderedTree:
    return sample_height_eq_batch(mu, p, 1, rng, budget, method)[0]


# ---------------------------------------------------------------- exact laws

@dataclass
class ConditionalLaw:
    probs: dict
    missing: object  # conditional mass of trees above the size cap


def exact_conditional_law(mu: OffspringDistribution, p: int, mode: str = "eq",
                          size_cap: Optional[int] = None) -> ConditionalLaw:
    """Exact law of τ given Γ = p (mode 'eq') or Γ ≥ p (mode 'geq') on trees up to size_cap."""
    if mode not in ("eq", "geq"):
        raise ValueError("mode must be 'eq' or 'geq'")
    if mu.max_offspring is None:
        if size_cap is None:
            raise ValueError("infinite support needs a size cap")
        degrees = range(size_cap)
    else:
        degrees = mu.support()
    if mode == "geq" and size_cap is None:
        raise ValueError("mode 'geq' needs a size cap")
    top = p if mode == "eq" else size_cap - 1
    g = g_iter(mu, max(p, 0) + 1)
    norm = g[p + 1] - g[p] if mode == "eq" else 1 - g[p]
    probs = {}
    for t in trees_with_degrees(top, degrees, size_cap):
        if (t.height == p) if mode == "eq" else (t.height >= p):
            w = gw_probability(t, mu)
            if w > 0:
                probs[t] = w / norm
    missing = 1 - sum(probs.values(), mu._num(0))
    return ConditionalLaw(probs, missing)


# ---------------------------------------------------------------- goodness of fit

@dataclass
class ChiSquare:
    statistic: float
    df: int
    pvalue: float
    bins: int

    def passed(self, level: float = 0.01) -> bool:
        return self.pvalue >= level


def chi_square_gof(observed: dict, probs: dict, min_expected: float = 5.0) -> ChiSquare:
    """Pearson goodness of fit of observed counts against a (possibly partial) law.

    Outcomes missing from ``probs`` and cells whose expected count is below
    ``min_expected`` are pooled into one cell carrying the remaining mass.
    """
    from scipy.stats import chisquare

    n = sum(observed.values())
    if n == 0:
        raise ValueError("no observations")
    obs_cells, exp_cells = [], []
    pooled_obs, pooled_mass = 0, 1.0
    for outcome, prob in probs.items():
        expected = float(prob) * n
        if expected >= min_expected:
            obs_cells.append(observed.get(outcome, 0))
            exp_cells.append(expected)
            pooled_mass -= float(prob)
    pooled_obs = n - sum(obs_cells)
    pooled_exp = max(pooled_mass, 0.0) * n
    if pooled_obs > 0 or pooled_exp >= min_expected:
        obs_cells.append(pooled_obs)
        exp_cells.append(pooled_exp)
    if len(obs_cells) < 2:
        return ChiSquare(0.0, 0, 1.0, len(obs_cells))
    exp = np.array(exp_cells)
    exp *= n / exp.sum()
    stat, pvalue = chisquare(np.array(obs_cells, dtype=float), exp)
    return ChiSquare(float(stat), len(obs_cells) - 1, float(pvalue), len(obs_cells))
