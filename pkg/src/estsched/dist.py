"""Job size distributions and joint (true size, estimated size) models.

Every estimate model here is multiplicative: Z = M * S with the multiplier M
drawn independently of S from a law supported on [beta, alpha].  That keeps
f_{S,Z}, f_Z and E[S | Z = z] expressible through one-dimensional integrals
over S, and the load profile rho_Z in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special

from ._quad import panel_rule, merge_edges, refine_edges

TAIL = 1e-10


class SizeDistribution:
    """Common interface of the job size laws.

    Subclasses provide ``cdf``, ``pdf``, ``partial_moment``, ``quantile`` and
    ``sample``; moments follow from ``partial_moment`` at the top of the
    support.
    """

    tie_prone = False

    def mean(self) -> float:
        return self.moments()[0]

    def second_moment(self) -> float:
        return self.moments()[1]

    def moments(self) -> tuple[float, float]:
        hi = self.support()[1]
        return float(self.partial_moment(1, hi)), float(self.partial_moment(2, hi))

    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def upper(self, tail: float = TAIL) -> float:
        """Integration cutoff: the top of a bounded support, else the 1 - tail quantile."""
        hi = self.support()[1]
        if math.isfinite(hi):
            return hi
        return float(self.quantile(1.0 - tail))

    def breakpoints(self) -> tuple[float, ...]:
        """Points where the density jumps (or carries an atom)."""
        return ()

    def survival(self, x):
        return 1.0 - self.cdf(x)

    def partial_moment(self, k, x):
        raise NotImplementedError

    def cdf(self, x):
        return self.partial_moment(0, x)


@dataclass(frozen=True)
class Exponential(SizeDistribution):
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"Exponential rate must be positive, got {self.rate}")

    def support(self):
        return 0.0, math.inf

    def moments(self):
        return 1.0 / self.rate, 2.0 / self.rate**2

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-self.rate * np.maximum(x, 0.0))

    def partial_moment(self, k, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return math.gamma(k + 1) / self.rate**k * special.gammainc(k + 1, self.rate * x)

    def quantile(self, q):
        return -np.log1p(-np.asarray(q, dtype=float)) / self.rate

    def sample(self, rng, n):
        return rng.exponential(1.0 / self.rate, n)


@dataclass(frozen=True)
class BoundedPareto(SizeDistribution):
    """Pareto law with tail index ``shape`` truncated to [low, high]."""

    shape: float
    low: float
    high: float

    def __post_init__(self):
        if not (self.shape > 0 and self.low > 0 and self.high > self.low):
            raise ValueError(f"invalid BoundedPareto{(self.shape, self.low, self.high)}")

    @property
    def _norm(self):
        return self.shape * self.low**self.shape / (1.0 - (self.low / self.high) ** self.shape)

    def support(self):
        return self.low, self.high

    def breakpoints(self):
        return (self.low, self.high)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.low) & (x <= self.high)
        return np.where(inside, self._norm * np.where(inside, x, 1.0) ** (-self.shape - 1), 0.0)

    def partial_moment(self, k, x):
        x = np.clip(np.asarray(x, dtype=float), self.low, self.high)
        e = k - self.shape
        if abs(e) < 1e-12:
            return self._norm * np.log(x / self.low)
        return self._norm * (x**e - self.low**e) / e

    def survival(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.low, self.high)
        num = (self.low / x) ** self.shape - (self.low / self.high) ** self.shape
        return num / (1.0 - (self.low / self.high) ** self.shape)

    def cdf(self, x):
        return 1.0 - self.survival(x)

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        ratio = (self.low / self.high) ** self.shape
        return self.low / (1.0 - q * (1.0 - ratio)) ** (1.0 / self.shape)

    def sample(self, rng, n):
        return self.quantile(rng.random(n))


@dataclass(frozen=True)
class Uniform(SizeDistribution):
    low: float
    high: float

    def __post_init__(self):
        if not (self.low > 0 and self.high > self.low):
            raise ValueError(f"invalid Uniform{(self.low, self.high)}")

    def support(self):
        return self.low, self.high

    def breakpoints(self):
        return (self.low, self.high)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.low) & (x <= self.high), 1.0 / (self.high - self.low), 0.0)

    def partial_moment(self, k, x):
        x = np.clip(np.asarray(x, dtype=float), self.low, self.high)
        return (x ** (k + 1) - self.low ** (k + 1)) / ((k + 1) * (self.high - self.low))

    def quantile(self, q):
        return self.low + np.asarray(q, dtype=float) * (self.high - self.low)

    def sample(self, rng, n):
        return rng.uniform(self.low, self.high, n)


@dataclass(frozen=True)
class Deterministic(SizeDistribution):
    """Every job has the same size.  Ties are certain under size-based ranks."""

    value: float
    tie_prone = True

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"Deterministic value must be positive, got {self.value}")

    def support(self):
        return self.value, self.value

    def breakpoints(self):
        return (self.value,)

    def moments(self):
        return self.value, self.value**2

    def pdf(self, x):
        raise ValueError("Deterministic sizes have no density")

    def partial_moment(self, k, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.value, self.value**k, 0.0)

    def quantile(self, q):
        return np.full_like(np.asarray(q, dtype=float), self.value)

    def sample(self, rng, n):
        rng.random(n)  # keep stream consumption aligned with the other laws
        return np.full(n, self.value)


@dataclass(frozen=True)
class Hyperexponential(SizeDistribution):
    weights: tuple
    rates: tuple

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        r = tuple(float(v) for v in self.rates)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", r)
        if len(w) != len(r) or not w:
            raise ValueError("weights and rates must be non-empty and equal length")
        if any(v < 0 for v in w) or abs(sum(w) - 1.0) > 1e-12:
            raise ValueError(f"weights must be a probability vector, got {w}")
        if any(v <= 0 for v in r):
            raise ValueError(f"rates must be positive, got {r}")

    def support(self):
        return 0.0, math.inf

    def moments(self):
        m1 = sum(w / r for w, r in zip(self.weights, self.rates))
        m2 = sum(2 * w / r**2 for w, r in zip(self.weights, self.rates))
        return m1, m2

    def pdf(self, x):
        return sum(w * Exponential(r).pdf(x) for w, r in zip(self.weights, self.rates))

    def survival(self, x):
        return sum(w * Exponential(r).survival(x) for w, r in zip(self.weights, self.rates))

    def partial_moment(self, k, x):
        return sum(w * Exponential(r).partial_moment(k, x) for w, r in zip(self.weights, self.rates))

    def quantile(self, q):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        out = np.zeros_like(q)
        for i, qi in enumerate(q):
            if qi <= 0:
                continue
            # survival <= exp(-min_rate x) brackets the root
            top = -math.log1p(-qi) / min(self.rates)
            out[i] = optimize.brentq(lambda x: float(self.cdf(x)) - qi, 0.0, top,
                                     xtol=1e-14, rtol=1e-14)
        return out if out.size > 1 else out[0]

    def sample(self, rng, n):
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        rates = np.asarray(self.rates)[comp]
        return rng.exponential(1.0, n) / rates


def moments(dist: SizeDistribution) -> tuple[float, float]:
    """(E[S], E[S^2]) of a size distribution."""
    return dist.moments()


# --------------------------------------------------------------------------
# estimate models


class EstimateModel:
    """Law of the multiplier M = Z / S, independent of S."""

    def bounds(self) -> tuple[float, float]:
        raise NotImplementedError

    def atoms(self) -> Optional[list[tuple[float, float]]]:
        """(m, probability) pairs for discrete multipliers, None if M has a density."""
        return None

    def sample_multiplier(self, rng, n):
        raise NotImplementedError


@dataclass(frozen=True)
class Perfect(EstimateModel):
    def bounds(self):
        return 1.0, 1.0

    def atoms(self):
        return [(1.0, 1.0)]

    def sample_multiplier(self, rng, n):
        rng.random(n)
        return np.ones(n)


@dataclass(frozen=True)
class FixedMultiplier(EstimateModel):
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"multiplier must be positive, got {self.c}")

    def bounds(self):
        return self.c, self.c

    def atoms(self):
        return [(self.c, 1.0)]

    def sample_multiplier(self, rng, n):
        rng.random(n)
        return np.full(n, self.c)


@dataclass(frozen=True)
class UniformMultiplier(EstimateModel):
    beta: float
    alpha: float

    def __post_init__(self):
        if not (0 < self.beta <= self.alpha):
            raise ValueError(f"need 0 < beta <= alpha, got beta={self.beta}, alpha={self.alpha}")

    def bounds(self):
        return self.beta, self.alpha

    def atoms(self):
        if self.alpha == self.beta:
            return [(self.beta, 1.0)]
        return None

    def sample_multiplier(self, rng, n):
        u = rng.random(n)
        return np.clip(self.beta + (self.alpha - self.beta) * u, self.beta, self.alpha)


@dataclass(frozen=True)
class TwoPointMultiplier(EstimateModel):
    beta: float
    alpha: float
    p_low: float

    def __post_init__(self):
        if not (0 < self.beta <= self.alpha):
            raise ValueError(f"need 0 < beta <= alpha, got beta={self.beta}, alpha={self.alpha}")
        if not 0 <= self.p_low <= 1:
            raise ValueError(f"p_low must be a probability, got {self.p_low}")

    def bounds(self):
        return self.beta, self.alpha

    def atoms(self):
        return [(self.beta, self.p_low), (self.alpha, 1.0 - self.p_low)]

    def sample_multiplier(self, rng, n):
        u = rng.random(n)
        return np.where(u < self.p_low, self.beta, self.alpha)


# --------------------------------------------------------------------------
# joint model


def _q_antiderivative(size, x):
    # d/dx [F(x) - M1(x)/x] = M1(x)/x^2 ; M1(x)/x -> 0 as x -> 0
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    m1 = size.partial_moment(1, x)
    return np.where(x > 0, size.cdf(x) - m1 / safe, 0.0)


@dataclass(frozen=True)
class JointSizeModel:
    size: SizeDistribution
    estimate: EstimateModel = field(default_factory=Perfect)

    def bounds(self) -> tuple[float, float]:
        return self.estimate.bounds()

    @property
    def tie_prone(self) -> bool:
        return self.size.tie_prone

    def mean_size(self) -> float:
        return self.size.mean()

    def sample(self, rng, n=None, mult_rng=None):
        """Draw (s, z).  Pass ``mult_rng`` to keep the size sequence independent
        of the estimate model (common random numbers across models)."""
        k = 1 if n is None else n
        s = self.size.sample(rng, k)
        z = self.estimate.sample_multiplier(rng if mult_rng is None else mult_rng, k) * s
        if n is None:
            return float(s[0]), float(z[0])
        return s, z

    # multiplier quadrature --------------------------------------------------

    def multiplier_rule(self, breaks=(), n=10, pieces=2):
        """Nodes/weights for E_M[g(M)].  Atoms are returned as-is; a continuous
        multiplier gets a composite rule with panel edges at ``breaks``."""
        atoms = self.estimate.atoms()
        if atoms is not None:
            m = np.array([a for a, _ in atoms])
            w = np.array([p for _, p in atoms])
            return m, w
        beta, alpha = self.bounds()
        edges = refine_edges(merge_edges(beta, alpha, breaks), pieces)
        nodes, weights = panel_rule(edges, n)
        return nodes, weights / (alpha - beta)

    # load profile ------------------------------------------------------------

    def partial_work(self, z):
        """E[S 1(Z <= z)], zero for z <= 0."""
        z = np.asarray(z, dtype=float)
        zp = np.maximum(z, 0.0)
        atoms = self.estimate.atoms()
        if atoms is not None:
            out = sum(p * self.size.partial_moment(1, zp / m) for m, p in atoms)
        else:
            beta, alpha = self.bounds()
            qa = _q_antiderivative(self.size, zp / alpha)
            qb = _q_antiderivative(self.size, zp / beta)
            out = zp / (alpha - beta) * (qb - qa)
        return np.where(z > 0, out, 0.0)

    def load_kinks(self):
        """z-values where rho_Z loses smoothness."""
        pts = set()
        atoms = self.estimate.atoms()
        mults = [m for m, _ in atoms] if atoms is not None else list(self.bounds())
        for b in self.size.breakpoints():
            for m in mults:
                pts.add(b * m)
        return tuple(sorted(pts))

    # densities ---------------------------------------------------------------

    def f_z(self, z) -> float:
        """Density of Z at z (raises when Z has atoms)."""
        z = float(z)
        if z <= 0:
            return 0.0
        atoms = self.estimate.atoms()
        if isinstance(self.size, Deterministic):
            if atoms is not None:
                raise ValueError("Z has atoms: deterministic sizes with a discrete multiplier")
            beta, alpha = self.bounds()
            v = self.size.value
            return 1.0 / (v * (alpha - beta)) if beta * v <= z <= alpha * v else 0.0
        if atoms is not None:
            return float(sum(p * self.size.pdf(z / m) / m for m, p in atoms))
        beta, alpha = self.bounds()
        lo, hi = z / alpha, z / beta
        val = _integrate_sizes(self.size, lambda s: self.size.pdf(s) / s, lo, hi)
        return val / (alpha - beta)

    def conditional_mean_size(self, z) -> Optional[float]:
        """E[S | Z = z]; None when z lies outside the support of Z."""
        z = float(z)
        if z <= 0:
            return None
        atoms = self.estimate.atoms()
        if isinstance(self.size, Deterministic):
            v = self.size.value
            if atoms is not None:
                hit = any(math.isclose(z, m * v, rel_tol=1e-12) and p > 0 for m, p in atoms)
                return v if hit else None
            beta, alpha = self.bounds()
            return v if beta * v <= z <= alpha * v else None
        if atoms is not None:
            dens = [(p * self.size.pdf(z / m) / m, z / m) for m, p in atoms]
            tot = float(sum(d for d, _ in dens))
            if tot <= 0:
                return None
            return float(sum(d * s for d, s in dens)) / tot
        beta, alpha = self.bounds()
        lo, hi = z / alpha, z / beta
        num = float(self.size.cdf(hi) - self.size.cdf(lo))
        den = _integrate_sizes(self.size, lambda s: self.size.pdf(s) / s, lo, hi)
        if den <= 0 or num <= 0:
            return None
        return num / den


def _integrate_sizes(size, fn, lo, hi):
    slo, shi = size.support()
    lo, hi = max(lo, slo), min(hi, shi)
    if hi <= lo:
        return 0.0
    pts = [b for b in size.breakpoints() if lo < b < hi]
    val, _ = integrate.quad(lambda s: float(fn(s)), lo, hi, points=pts or None,
                            epsabs=0.0, epsrel=1e-11, limit=200)
    return val


def sample(model: JointSizeModel, rng, n=None, mult_rng=None):
    """Draw i.i.d. (s, z) pairs from ``model``."""
    return model.sample(rng, n, mult_rng)
