"""Deterministic, stream-splittable random number generation and distributions.

Every stochastic component draws through an :class:`RngStream` keyed by
``(seed, stream_id)``.  Replicate ``r`` of an experiment owns the stream
``RngStream(seed, r)``, so results never depend on scheduling or worker
count.  Distribution objects bundle a sampler with the matching
log-density; both are consumed by the coupling and kernel layers.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import betaln, gammaln

_LOG_2PI = math.log(2.0 * math.pi)


class ParameterError(ValueError):
    """Raised when distribution parameters violate their domain."""


class RngStream:
    """A reproducible random stream identified by (seed, stream_id).

    Backed by PCG64 keyed with ``SeedSequence([seed, stream_id])``: stream
    creation is O(1) and distinct key pairs yield statistically independent
    sequences.  A stream is owned by a single replicate at a time; it may be
    created on any thread and moved across threads, but never shared.
    """

    __slots__ = ("seed", "stream_id", "gen")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, self.stream_id]))
        )

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def uniform(self) -> float:
        return self.gen.random()


def _require(cond: bool, msg: str):
    if not cond:
        raise ParameterError(msg)


class Normal:
    """Scalar normal law N(mean, sd^2)."""

    __slots__ = ("mean", "sd")

    def __init__(self, mean: float, sd: float):
        _require(sd > 0, f"Normal sd must be > 0, got {sd}")
        self.mean = float(mean)
        self.sd = float(sd)

    def sample(self, stream: RngStream) -> float:
        return self.mean + self.sd * stream.gen.standard_normal()

    def log_density(self, x) -> float:
        z = (float(x) - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - 0.5 * _LOG_2PI


class MultivariateNormal:
    """Multivariate normal with diagonal (1-d ``cov``) or full covariance."""

    __slots__ = ("mean", "dim", "_sd", "_chol", "_log_norm")

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        _require(self.mean.ndim == 1, "mean must be a vector")
        self.dim = self.mean.shape[0]
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 1:
            _require(cov.shape[0] == self.dim, "diagonal covariance length mismatch")
            _require(bool(np.all(cov > 0)), "diagonal covariance must be positive")
            self._sd = np.sqrt(cov)
            self._chol = None
            self._log_norm = -0.5 * self.dim * _LOG_2PI - float(np.sum(np.log(self._sd)))
        elif cov.ndim == 2:
            _require(cov.shape == (self.dim, self.dim), "covariance shape mismatch")
            _require(bool(np.allclose(cov, cov.T)), "covariance must be symmetric")
            try:
                self._chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise ParameterError("covariance must be positive definite") from None
            self._sd = None
            self._log_norm = -0.5 * self.dim * _LOG_2PI - float(
                np.sum(np.log(np.diag(self._chol)))
            )
        else:
            raise ParameterError("cov must be 1-d (diagonal) or 2-d")

    def sample(self, stream: RngStream) -> np.ndarray:
        z = stream.gen.standard_normal(self.dim)
        if self._chol is None:
            return self.mean + self._sd * z
        return self.mean + self._chol @ z

    def log_density(self, x) -> float:
        d = np.asarray(x, dtype=float) - self.mean
        if self._chol is None:
            z = d / self._sd
        else:
            z = solve_triangular(self._chol, d, lower=True)
        return self._log_norm - 0.5 * float(z @ z)


class Uniform:
    """Uniform law on [lo, hi]; lo/hi may be scalars or vectors (a box)."""

    __slots__ = ("lo", "hi", "_log_vol", "_scalar")

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        _require(self.lo.shape == self.hi.shape, "lo/hi shape mismatch")
        _require(bool(np.all(self.lo < self.hi)), "Uniform requires lo < hi")
        self._scalar = self.lo.ndim == 0
        self._log_vol = -float(np.sum(np.log(self.hi - self.lo)))

    def sample(self, stream: RngStream):
        u = stream.gen.random(self.lo.shape) if not self._scalar else stream.gen.random()
        out = self.lo + (self.hi - self.lo) * u
        return float(out) if self._scalar else out

    def log_density(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if np.all(x >= self.lo) and np.all(x <= self.hi):
            return self._log_vol
        return -math.inf


class Beta:
    """Beta(a, b) on (0, 1)."""

    __slots__ = ("a", "b", "_log_norm")

    def __init__(self, a: float, b: float):
        _require(a > 0 and b > 0, f"Beta parameters must be > 0, got ({a}, {b})")
        self.a = float(a)
        self.b = float(b)
        self._log_norm = -betaln(self.a, self.b)

    def sample(self, stream: RngStream) -> float:
        return stream.gen.beta(self.a, self.b)

    def log_density(self, x) -> float:
        x = float(x)
        if x < 0.0 or x > 1.0:
            return -math.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (self.a - 1.0) * np.log(x) if self.a != 1.0 else 0.0
            t2 = (self.b - 1.0) * np.log1p(-x) if self.b != 1.0 else 0.0
        return float(self._log_norm + t1 + t2)


class Binomial:
    """Binomial(n, p) counting law on {0, ..., n}."""

    __slots__ = ("n", "p")

    def __init__(self, n: int, p: float):
        _require(int(n) == n and n >= 1, f"Binomial n must be a positive integer, got {n}")
        _require(0.0 <= p <= 1.0, f"Binomial p must lie in [0, 1], got {p}")
        self.n = int(n)
        self.p = float(p)

    def sample(self, stream: RngStream) -> int:
        return int(stream.gen.binomial(self.n, self.p))

    def log_density(self, x) -> float:
        k = float(x)
        if k < 0 or k > self.n or k != int(k):
            return -math.inf
        k = int(k)
        log_comb = gammaln(self.n + 1) - gammaln(k + 1) - gammaln(self.n - k + 1)
        if self.p == 0.0:
            return 0.0 if k == 0 else -math.inf
        if self.p == 1.0:
            return 0.0 if k == self.n else -math.inf
        return float(log_comb + k * math.log(self.p) + (self.n - k) * math.log1p(-self.p))


class Gamma:
    """Gamma(shape, rate) with density rate^shape x^(shape-1) e^(-rate x) / Γ(shape)."""

    __slots__ = ("shape", "rate", "_log_norm")

    def __init__(self, shape: float, rate: float):
        _require(shape > 0 and rate > 0, f"Gamma parameters must be > 0, got ({shape}, {rate})")
        self.shape = float(shape)
        self.rate = float(rate)
        self._log_norm = self.shape * math.log(self.rate) - gammaln(self.shape)

    def sample(self, stream: RngStream) -> float:
        return stream.gen.gamma(self.shape, 1.0 / self.rate)

    def log_density(self, x) -> float:
        x = float(x)
        if x <= 0.0:
            return -math.inf
        return float(self._log_norm + (self.shape - 1.0) * math.log(x) - self.rate * x)


class InverseGamma:
    """Inverse-Gamma(a, b) with density Γ(a)^{-1} b^a x^{-a-1} exp(-b/x)."""

    __slots__ = ("a", "b", "_log_norm")

    def __init__(self, a: float, b: float):
        _require(a > 0 and b > 0, f"InverseGamma parameters must be > 0, got ({a}, {b})")
        self.a = float(a)
        self.b = float(b)
        self._log_norm = self.a * math.log(self.b) - gammaln(self.a)

    def sample(self, stream: RngStream) -> float:
        # 1/X with X ~ Gamma(a, rate=b)
        return 1.0 / stream.gen.gamma(self.a, 1.0 / self.b)

    def log_density(self, x) -> float:
        x = float(x)
        if x <= 0.0:
            return -math.inf
        return float(self._log_norm - (self.a + 1.0) * math.log(x) - self.b / x)


class LogNormal:
    """Law of exp(G) with G ~ N(mu, sigma^2)."""

    __slots__ = ("mu", "sigma")

    def __init__(self, mu: float, sigma: float):
        _require(sigma > 0, f"LogNormal sigma must be > 0, got {sigma}")
        self.mu = float(mu)
        self.sigma = float(sigma)

    def sample(self, stream: RngStream) -> float:
        return math.exp(self.mu + self.sigma * stream.gen.standard_normal())

    def log_density(self, x) -> float:
        x = float(x)
        if x <= 0.0:
            return -math.inf
        z = (math.log(x) - self.mu) / self.sigma
        return -0.5 * z * z - math.log(x * self.sigma) - 0.5 * _LOG_2PI


def sample(d, stream: RngStream):
    """Draw from distribution ``d``; advancing ``stream`` is the only side effect."""
    return d.sample(stream)


def log_density(d, x) -> float:
    """Natural-log density (or pmf) of ``d`` at ``x``; -inf outside the support."""
    return d.log_density(x)
