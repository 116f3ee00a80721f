"""Offspring distributions and generating-function analytics.

Four families are supported: finitely supported laws given by their masses,
the critical geometric law μ(k) = 2^-(k+1), the Poisson(1) law, and a
critical power-tail law μ(k) = c k^(-1-α) for k ≥ 2.

The ``exact`` backend works with :class:`fractions.Fraction` and is available
for finite-support laws and the geometric law (whose generating function
1/(2-s) is rational).  The ``float`` backend works with Python floats.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import mpmath
import numpy as np

KINDS = ("finite", "geometric", "poisson", "power_tail")

# float backend: infinite tails are cut where the remaining mass drops below this
TAIL_CUTOFF = 1e-12


class OffspringError(ValueError):
    """A distribution spec that cannot be built or violates the standing assumptions."""

    def __init__(self, message: str, condition: str = "spec"):
        super().__init__(message)
        self.condition = condition


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12)
    raise OffspringError(f"cannot read mass {x!r}")


class OffspringDistribution:
    """A law on {0, 1, 2, ...} with its generating function."""

    def __init__(self, kind: str, params: Optional[dict] = None, backend: str = "exact"):
        if kind not in KINDS:
            raise OffspringError(f"unknown kind {kind!r}; expected one of {KINDS}")
        if backend not in ("exact", "float"):
            raise OffspringError(f"unknown backend {backend!r}")
        params = dict(params or {})
        if backend == "exact" and kind in ("poisson", "power_tail"):
            raise OffspringError(f"{kind} law has irrational masses; use backend 'float'")
        self.kind = kind
        self.params = params
        self.backend = backend
        self._masses: Optional[list] = None
        if kind == "finite":
            raw = params.get("masses")
            if raw is None:
                raise OffspringError("finite law needs params.masses")
            if isinstance(raw, dict):
                top = max(int(k) for k in raw)
                masses = [Fraction(0)] * (top + 1)
                for k, v in raw.items():
                    masses[int(k)] = _as_fraction(v)
            else:
                masses = [_as_fraction(v) for v in raw]
            while len(masses) > 1 and masses[-1] == 0:
                masses.pop()
            if any(m < 0 for m in masses):
                raise OffspringError("negative mass", condition="nonnegative")
            if sum(masses) != 1:
                raise OffspringError(f"masses sum to {sum(masses)}, not 1", condition="normalized")
            self._masses = masses if backend == "exact" else [float(m) for m in masses]
        elif kind == "power_tail":
            alpha = float(params.get("alpha", 1.5))
            if not 1 < alpha < 2:
                raise OffspringError("power_tail needs alpha in (1, 2)")
            self.alpha = alpha
            # μ(1) = 0; c fixes the mean at 1, μ(0) takes the rest
            zeta_a = float(mpmath.zeta(alpha))
            zeta_a1 = float(mpmath.zeta(alpha + 1))
            self.tail_const = 1.0 / (zeta_a - 1.0)
            self.mass0 = 1.0 - (zeta_a1 - 1.0) * self.tail_const
        self._cdf_cache: Optional[np.ndarray] = None

    # ------------------------------------------------------------ factories
    @classmethod
    def finite(cls, masses, backend: str = "exact") -> "OffspringDistribution":
        return cls("finite", {"masses": masses}, backend)

    @classmethod
    def geometric(cls, backend: str = "exact") -> "OffspringDistribution":
        return cls("geometric", {}, backend)

    @classmethod
    def poisson(cls) -> "OffspringDistribution":
        return cls("poisson", {}, "float")

    @classmethod
    def power_tail(cls, alpha: float) -> "OffspringDistribution":
        return cls("power_tail", {"alpha": alpha}, "float")

    def to_spec(self) -> dict:
        params = dict(self.params)
        if self.kind == "finite":
            params = {"masses": {str(k): str(Fraction(m)) if self.backend == "exact" else repr(m)
                                 for k, m in enumerate(self._masses) if m != 0}}
        return {"kind": self.kind, "params": params, "backend": self.backend}

    def __repr__(self):
        return f"OffspringDistribution({json.dumps(self.to_spec(), sort_keys=True)})"

    def __eq__(self, other):
        return isinstance(other, OffspringDistribution) and self.to_spec() == other.to_spec()

    def __hash__(self):
        return hash(json.dumps(self.to_spec(), sort_keys=True))

    # ------------------------------------------------------------ masses
    @property
    def exact(self) -> bool:
        return self.backend == "exact"

    def _num(self, x):
        return Fraction(x) if self.exact else float(x)

    @property
    def max_offspring(self) -> Optional[int]:
        """Largest k with μ(k) > 0, or None for infinite support."""
        if self.kind == "finite":
            return len(self._masses) - 1
        return None

    def support(self, limit: Optional[int] = None) -> list:
        if self.kind == "finite":
            return [k for k, m in enumerate(self._masses) if m > 0]
        if limit is None:
            raise OffspringError("infinite support needs a limit")
        return [k for k in range(limit + 1) if self.pmf(k) > 0]

    def pmf(self, k: int):
        if k < 0:
            return self._num(0)
        if self.kind == "finite":
            return self._masses[k] if k < len(self._masses) else self._num(0)
        if self.kind == "geometric":
            return Fraction(1, 2 ** (k + 1)) if self.exact else 0.5 ** (k + 1)
        if self.kind == "poisson":
            return math.exp(-1.0 - math.lgamma(k + 1))
        # power_tail
        if k == 0:
            return self.mass0
        if k == 1:
            return 0.0
        return self.tail_const * k ** (-1.0 - self.alpha)

    def __call__(self, k: int):
        return self.pmf(k)

    def truncation(self) -> int:
        """Smallest K with μ({0..K}) ≥ 1 - TAIL_CUTOFF (exact K for finite support)."""
        if self.kind == "finite":
            return len(self._masses) - 1
        if self.kind == "geometric":
            return int(math.ceil(-math.log2(TAIL_CUTOFF)))
        if self.kind == "power_tail":
            return self._tail_quantile(TAIL_CUTOFF)
        total = 0.0
        k = 0
        while True:
            total += float(self.pmf(k))
            if total >= 1.0 - TAIL_CUTOFF:
                return k
            k += 1

    def mean(self):
        if self.kind == "finite":
            return sum(k * m for k, m in enumerate(self._masses))
        if self.kind in ("geometric", "poisson", "power_tail"):
            return self._num(1)

    def variance(self):
        """Variance, or math.inf for the power-tail law."""
        if self.kind == "finite":
            m = self.mean()
            return sum((k - m) ** 2 * x for k, x in enumerate(self._masses))
        if self.kind == "geometric":
            return self._num(2)
        if self.kind == "poisson":
            return 1.0
        return math.inf

    # ------------------------------------------------------------ generating function
    def gf(self, s):
        if self.kind == "finite":
            acc = self._num(0)
            for m in reversed(self._masses):
                acc = acc * s + m
            return acc
        if self.kind == "geometric":
            return 1 / (2 - s)
        if self.kind == "poisson":
            return math.exp(float(s) - 1.0)
        s = float(s)
        if s == 0.0:
            return self.mass0
        li = float(mpmath.polylog(1 + self.alpha, s))
        return self.mass0 + self.tail_const * (li - s)

    def gf_prime(self, s):
        if self.kind == "finite":
            acc = self._num(0)
            for k in range(len(self._masses) - 1, 0, -1):
                acc = acc * s + k * self._masses[k]
            return acc
        if self.kind == "geometric":
            return 1 / (2 - s) ** 2
        if self.kind == "poisson":
            return math.exp(float(s) - 1.0)
        s = float(s)
        if s == 0.0:
            return 0.0
        li = float(mpmath.polylog(self.alpha, s))
        return self.tail_const * (li / s - 1.0)

    def gf_slope(self, x, y):
        """(g(y) - g(x)) / (y - x) without subtracting nearby values of g."""
        if x == y:
            return self.gf_prime(x)
        if self.kind == "finite":
            # Σ_k μ(k) Σ_{i<k} x^i y^(k-1-i), with h_k = x h_{k-1} + y^(k-1)
            acc = self._num(0)
            h, ypow = self._num(0), self._num(1)
            for k in range(1, len(self._masses)):
                h = x * h + ypow
                ypow *= y
                acc += self._masses[k] * h
            return acc
        if self.kind == "geometric":
            return 1 / ((2 - x) * (2 - y))
        if self.kind == "poisson":
            x, y = float(x), float(y)
            return math.exp(x - 1.0) * math.expm1(y - x) / (y - x)
        with mpmath.workdps(40):
            gx = self.tail_const * (mpmath.polylog(1 + self.alpha, mpmath.mpf(x)) - x)
            gy = self.tail_const * (mpmath.polylog(1 + self.alpha, mpmath.mpf(y)) - y)
            return float((gy - gx) / (mpmath.mpf(y) - x))

    # ------------------------------------------------------------ sampling
    def cdf_table(self) -> np.ndarray:
        """Cumulative masses up to the truncation point, as floats."""
        if self._cdf_cache is None:
            top = self.truncation()
            masses = np.array([float(self.pmf(k)) for k in range(top + 1)])
            self._cdf_cache = np.cumsum(masses)
        return self._cdf_cache

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n independent offspring counts."""
        if self.kind == "geometric":
            return rng.geometric(0.5, size=n) - 1
        if self.kind == "poisson":
            return rng.poisson(1.0, size=n)
        if self.kind == "power_tail":
            return self._draw_power_tail(rng, n)
        u = rng.random(n)
        cdf = self.cdf_table()
        return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)

    def survival(self, k: int) -> float:
        """P(J ≥ k) for the power-tail law, k ≥ 2, via the Hurwitz zeta function."""
        return self.tail_const * float(mpmath.zeta(1 + self.alpha, k))

    def _tail_quantile(self, w: float) -> int:
        # largest k with P(J >= k) > w; start from the Pareto guess and correct
        k = max(2, int((self.tail_const / (self.alpha * w)) ** (1.0 / self.alpha)))
        while self.survival(k) <= w:
            k -= 1
        while self.survival(k + 1) > w:
            k += 1
        return k

    def _draw_power_tail(self, rng, n):
        # inversion on the tabulated head, analytic inversion of the tail beyond it
        head = 1 << 12
        if self._cdf_cache is None or len(self._cdf_cache) != head + 1:
            masses = np.array([float(self.pmf(k)) for k in range(head + 1)])
            self._cdf_cache = np.cumsum(masses)
        cdf = self._cdf_cache
        u = rng.random(n)
        out = np.searchsorted(cdf, u, side="right")
        big = np.nonzero(out > head)[0]
        for i in big:
            out[i] = self._tail_quantile(1.0 - u[i])
        return out


# ---------------------------------------------------------------- spec parsing

def parse_mu_spec(spec) -> OffspringDistribution:
    """Build a law from a JSON object, a JSON string, a shorthand name, or '@file'."""
    if isinstance(spec, OffspringDistribution):
        return spec
    if isinstance(spec, str):
        text = spec.strip()
        if text.startswith("@"):
            text = Path(text[1:]).read_text()
        if text in ("geometric", "poisson"):
            spec = {"kind": text}
        else:
            try:
                spec = json.loads(text)
            except json.JSONDecodeError as exc:
                raise OffspringError(f"cannot parse mu spec: {exc}") from exc
    if not isinstance(spec, dict):
        raise OffspringError("mu spec must be a JSON object")
    if "kind" not in spec:
        # bare mass map such as {"0": "1/2", "2": "1/2"}
        spec = {"kind": "finite", "params": {"masses": spec}}
    kind = spec["kind"]
    backend = spec.get("backend")
    if backend is None:
        backend = "exact" if kind in ("finite", "geometric") else "float"
    return OffspringDistribution(kind, spec.get("params", {}), backend)


# ---------------------------------------------------------------- analytics

@dataclass
class Diagnostics:
    valid: bool
    mean: object
    variance: object
    critical: bool
    failed: list = field(default_factory=list)


def validate(mu: OffspringDistribution) -> Diagnostics:
    """Check nonnegativity, normalization, mean ≤ 1 and some mass on k ≥ 2."""
    failed = []
    if mu.kind == "finite":
        masses = mu._masses
        if any(m < 0 for m in masses):
            failed.append("nonnegative")
        total = sum(masses)
        if (total != 1) if mu.exact else abs(total - 1) > 1e-12:
            failed.append("normalized")
        if not any(m > 0 for m in masses[2:]):
            failed.append("branching")
    m = mu.mean()
    if m > 1 and (mu.exact or m - 1 > 1e-12):
        failed.append("subcritical")
    var = mu.variance()
    critical = (m == 1) if mu.exact else abs(m - 1) <= 1e-12
    return Diagnostics(valid=not failed, mean=m, variance=var, critical=critical, failed=failed)


def require_valid(mu: OffspringDistribution) -> None:
    diag = validate(mu)
    if not diag.valid:
        raise OffspringError(f"offspring law violates: {', '.join(diag.failed)}",
                             condition=diag.failed[0])


def g_iter(mu: OffspringDistribution, n: int) -> list:
    """[g_0(0), g_1(0), ..., g_n(0)]; g_n(0) = P(Γ(τ) < n)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    vals = [mu._num(0)]
    for _ in range(n):
        vals.append(mu.gf(vals[-1]))
    return vals


def height_pmf(mu: OffspringDistribution, n: int):
    """P(Γ(τ) = n)."""
    g = g_iter(mu, n + 1)
    return g[n + 1] - g[n]


def height_tail(mu: OffspringDistribution, n: int):
    """P(Γ(τ) ≥ n)."""
    return 1 - g_iter(mu, n)[n]


@dataclass
class NuTail:
    value: object
    bound: object


def nu_ge2_prob(mu: OffspringDistribution, n: int) -> NuTail:
    """P(ν(τ) ≥ 2 | Γ(τ) = n) in closed form, with its upper bound."""
    if n < 1:
        raise ValueError("n must be at least 1")
    g = g_iter(mu, n + 1)
    below, here, above = g[n - 1], g[n], g[n + 1]
    if above - here <= 0:
        raise OffspringError(f"P(height = {n}) vanishes", condition="degenerate")
    d = mu.gf_prime(below)
    # (g_n - g_{n-1}) / (g_{n+1} - g_n) is 1 over the slope of g between
    # g_{n-1} and g_n; the slope form avoids cancellation on the float path
    value = 1 - d / mu.gf_slope(below, here)
    # a vanishing derivative (μ(1) = 0 at n = 1) makes the bound vacuous
    bound = ((1 - below) / (1 - here) + (1 - above) / (1 - here) - 2) / d if d else math.inf
    slack = 0 if mu.exact else 1e-12
    if value > bound + slack:
        raise ArithmeticError(f"ν tail {value} exceeds its bound {bound}")
    return NuTail(value, bound)


def extinction_power_probe(mu: OffspringDistribution, r, p_list, b_of_p) -> list:
    """The sequence (g_{⌊pr⌋}(0))^(b_p/p) for p in p_list (floats)."""
    out = []
    for p in p_list:
        m = math.floor(p * r)
        # float iteration: exact denominators grow doubly exponentially in m
        g = 0.0
        for _ in range(m):
            g = float(mu.gf(g))
        out.append(g ** (b_of_p(p) / p))
    return out
