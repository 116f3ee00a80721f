"""Continuum reference quantities and desk-scale checks of the scaling limit.

Branching mechanisms Ψ(λ) = aλ + bλ² + ∫(e^{-λr} - 1 + λr) π(dr) enter
through two functions of r:

* v(r), the solution of ∫_v^∞ dλ/Ψ(λ) = r;
* the diameter tail v(r) - Ψ(v(r))² ∫_{v(r)}^∞ dλ/Ψ(λ)².

Built-in mechanisms have closed forms; every mechanism also has a numeric
path (quadrature plus root finding) used to cross-check them.

Stable normalization.  For the power-tail law μ(k) = c k^{-1-α} the
one-jump tail is P(J > y) ~ (c/α) y^{-α}.  The Lévy measure of Ψ(λ) = λ^α is
π(dr) = α(α-1)/Γ(2-α) r^{-1-α} dr with tail (α-1)/Γ(2-α) x^{-α}.  Matching
b_p P(J > x b_p/p) with that tail gives
b_p^{α-1} = p^α c Γ(2-α) / (α(α-1)), that is b_p = c_α p^{α/(α-1)} with
c_α = (c Γ(2-α) / (α(α-1)))^{1/(α-1)}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, optimize, stats

from .offspring import OffspringDistribution


class LimitError(ValueError):
    pass


# Upper critical value of the two-sample KS statistic at level 1%:
# sqrt(-ln(0.005)/2), times sqrt((n+m)/(nm)).
KS_COEFF_1PCT = math.sqrt(-math.log(0.005) / 2)


@dataclass(frozen=True)
class BranchingMechanism:
    kind: str  # "brownian", "stable" or "custom"
    alpha: float = 2.0
    a: float = 0.0
    b: float = 0.0
    jumps: tuple = ()  # ((r, mass), ...) discretized Lévy measure

    @classmethod
    def brownian(cls) -> "BranchingMechanism":
        return cls("brownian", alpha=2.0, b=1.0)

    @classmethod
    def stable(cls, alpha: float) -> "BranchingMechanism":
        if not 1 < alpha <= 2:
            raise LimitError("stable index must lie in (1, 2]")
        return cls("stable", alpha=alpha)

    @classmethod
    def custom(cls, a: float, b: float, jumps=()) -> "BranchingMechanism":
        jumps = tuple((float(r), float(m)) for r, m in jumps)
        if a < 0 or b < 0 or any(r <= 0 or m < 0 for r, m in jumps):
            raise LimitError("custom mechanism needs a, b ≥ 0 and positive jump sizes")
        if b <= 0:
            # with finitely many atoms Ψ grows linearly and ∫ dλ/Ψ diverges
            raise LimitError("custom mechanism violates ∫^∞ dλ/Ψ < ∞ (needs b > 0)")
        return cls("custom", a=float(a), b=float(b), jumps=jumps)

    def __call__(self, lam: float) -> float:
        if self.kind == "brownian":
            return lam * lam
        if self.kind == "stable":
            return lam ** self.alpha
        total = self.a * lam + self.b * lam * lam
        for r, m in self.jumps:
            total += m * (math.expm1(-lam * r) + lam * r)
        return total

    def growth(self):
        """(c, β) with Ψ(λ) ≥ c λ^β for λ ≥ 1, used to bound quadrature tails."""
        if self.kind == "brownian":
            return 1.0, 2.0
        if self.kind == "stable":
            return 1.0, self.alpha
        return self.b, 2.0


def _tail_integral(psi: BranchingMechanism, v: float, power: int = 1) -> float:
    """∫_v^∞ dλ / Ψ(λ)^power by quadrature in log scale plus a bounded remainder."""
    if v <= 0:
        raise LimitError("lower limit must be positive")
    c, beta = psi.growth()
    expo = power * beta - 1.0
    if expo <= 0:
        raise LimitError("tail integral diverges")

    def integrand(x):
        lam = v * math.exp(x)
        return lam / psi(lam) ** power

    # beyond λ = v e^X (with v e^X ≥ 1) the remainder is at most
    # ∫ dλ/(cλ^β)^power = (v e^X)^-expo / (c^power expo); grow X until that is
    # negligible next to the integral itself
    big = max(math.log(1.0 / v), 0.0) + 5.0
    while True:
        value, _ = integrate.quad(integrand, 0.0, big, epsabs=0.0, epsrel=1e-13, limit=500)
        remainder = (v * math.exp(big)) ** (-expo) / (c ** power * expo)
        if remainder <= 1e-14 * value:
            return value
        big += 5.0


def v_numeric(psi: BranchingMechanism, r: float) -> float:
    """Root of ∫_v^∞ dλ/Ψ = r by bracketing (relative tolerance 1e-10 or better)."""
    if r <= 0:
        raise LimitError("r must be positive")
    f = lambda v: _tail_integral(psi, v) - r
    lo, hi = 1.0, 1.0
    while f(lo) < 0:
        lo /= 2.0
    while f(hi) > 0:
        hi *= 2.0
    return optimize.brentq(f, lo, hi, xtol=1e-300, rtol=1e-14, maxiter=500)


def v_of_r(psi: BranchingMechanism, r: float) -> float:
    if r <= 0:
        raise LimitError("r must be positive")
    if psi.kind == "brownian":
        return 1.0 / r
    if psi.kind == "stable":
        if psi.alpha == 2.0:
            return 1.0 / r
        return ((psi.alpha - 1.0) * r) ** (-1.0 / (psi.alpha - 1.0))
    return v_numeric(psi, r)


def diameter_tail_numeric(psi: BranchingMechanism, r: float) -> float:
    v = v_numeric(psi, r)
    return v - psi(v) ** 2 * _tail_integral(psi, v, power=2)


def diameter_tail(psi: BranchingMechanism, r: float) -> float:
    """N(D > 2r)."""
    if psi.kind == "brownian":
        return 2.0 / (3.0 * r)
    if psi.kind == "stable":
        al = psi.alpha
        return v_of_r(psi, r) * (2 * al - 2) / (2 * al - 1)
    return diameter_tail_numeric(psi, r)


# ---------------------------------------------------------------- discrete scaling

def stable_constant(mu: OffspringDistribution) -> float:
    """c_α with b_p = c_α p^{α/(α-1)} for the power-tail law."""
    al, c = mu.alpha, mu.tail_const
    return (c * math.gamma(2 - al) / (al * (al - 1))) ** (1 / (al - 1))


def b_p_for(mu: OffspringDistribution, p: int) -> int:
    if p < 1:
        raise LimitError("p must be positive")
    if mu.kind == "power_tail":
        return math.ceil(stable_constant(mu) * p ** (mu.alpha / (mu.alpha - 1)))
    var = mu.variance()
    if var == math.inf or var == 0:
        raise LimitError("b_p needs a finite positive variance or a stable tail")
    if isinstance(var, Fraction):
        x = var * p * p / 2
        return -((-x.numerator) // x.denominator)
    return math.ceil(var * p * p / 2 - 1e-9)


@dataclass
class RescaledPath:
    times: np.ndarray
    values: np.ndarray
    lifetime: float

    def max(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    def value_at(self, s: float) -> float:
        return float(np.interp(s, self.times, self.values, right=0.0))


def rescale(c: Sequence[int], p: int, b_p: int) -> RescaledPath:
    """Time j/(2 b_p) carries the value C_j / p; lifetime is (|t| - 1)/b_p."""
    values = np.asarray(c, dtype=float) / p
    times = np.arange(len(c)) / (2.0 * b_p)
    return RescaledPath(times, values, (len(c) - 1) / (2.0 * b_p))


def ks_two_sample(xs, ys):
    """(statistic, 1% critical value) of the two-sample Kolmogorov-Smirnov test."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if xs.size == 0 or ys.size == 0:
        raise LimitError("both samples must be nonempty")
    stat = stats.ks_2samp(xs, ys).statistic
    n, m = xs.size, ys.size
    return float(stat), KS_COEFF_1PCT * math.sqrt((n + m) / (n * m))


@dataclass
class ConvergenceRow:
    p: int
    k: int
    n: int
    b_p: int
    mean_lifetime: float
    ks_vs_prev_p: Optional[float]
    ks_threshold: Optional[float]
    half_height_ok: bool
    max_ok: bool
    frac_symmetric: float
    mean_value_at_s: Optional[float] = None
    lifetimes: list = field(default_factory=list, repr=False)


def split_counts(n: int, streams: int) -> list:
    """Per-stream sample counts: as equal as possible, earlier streams first."""
    if streams < 1:
        raise LimitError("need at least one stream")
    return [n // streams + (1 if s < n % streams else 0) for s in range(streams)]


def diameter_samples(mu: OffspringDistribution, k: int, n: int, seed: int, streams: int = 1,
                     stream_base: int = 0) -> list:
    """n diameter-k samples drawn on streams stream_base, ..., merged by stream id."""
    from .diameter_sampler import sample_diameter_batch
    from .gw_sampler import RngStream

    out: list = []
    for s, count in enumerate(split_counts(n, streams)):
        if count:
            out.extend(sample_diameter_batch(mu, k, count, RngStream(seed, stream_base + s)))
    return out


def max_within(sample, p: int, r) -> bool:
    """Whether the maximum of the rescaled contour lies within 1/p of r/2, in exact arithmetic.

    The edge-rooted code places T+ one level below the root, so its maximum
    is max(Γ(T+) + 1, Γ(T-)).
    """
    top = max(sample.t_plus.height + 1, sample.t_minus.height)
    return abs(Fraction(top, p) - Fraction(r) / 2) <= Fraction(1, p)


def convergence_report(mu: OffspringDistribution, r, p_list, n_samples: int, seed: int = 0,
                       streams: int = 1, keep_samples: bool = False,
                       s_probe: Optional[float] = None) -> list:
    """Diameter-⌊rp⌋ samples for each p: lifetimes, cross-p KS, height bookkeeping.

    The KS comparison between consecutive p is a self-consistency check with
    a calibration threshold (1% two-sample critical value), not an exact
    limit law.  With s_probe the mean rescaled contour value at time s_probe
    is reported as well.
    """
    from .diameter_sampler import contour_of_sample

    rows: list = []
    prev = None
    r_frac = Fraction(r).limit_denominator(10**6)
    for idx, p in enumerate(p_list):
        k = math.floor(r_frac * p)
        if k < 1:
            raise LimitError(f"⌊rp⌋ = {k} for p = {p}")
        b = b_p_for(mu, p)
        samples = diameter_samples(mu, k, n_samples, seed, streams, stream_base=idx * streams)
        lifetimes = [(s.size - 1) / b for s in samples]
        half_ok = all(s.t_plus.height == k // 2 and s.t_minus.height == (k - 1) // 2
                      for s in samples)
        max_ok = all(max_within(s, p, r_frac) for s in samples)
        frac_sym = sum(1 for s in samples if s.sym >= 2) / len(samples)
        probe = None
        if s_probe is not None:
            probe = float(np.mean([rescale(contour_of_sample(s), p, b).value_at(s_probe)
                                   for s in samples]))
        ks = thr = None
        if prev is not None:
            ks, thr = ks_two_sample(prev, lifetimes)
        rows.append(ConvergenceRow(p, k, n_samples, b, float(np.mean(lifetimes)), ks, thr,
                                   half_ok, max_ok, frac_sym, probe,
                                   lifetimes if keep_samples else []))
        prev = lifetimes
    return rows
