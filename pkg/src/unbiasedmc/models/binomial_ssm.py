"""Binomial-observation state space model for aggregated event counts.

    X_0 ~ N(0, 1),   X_t | X_{t-1}=x ~ N(a x, sigma2),
    Y_t | X_t=x ~ Binomial(M, s(x)),   s(x) = 1/(1 + exp(-x)),

with theta = (a, sigma2), priors a ~ U[0, 1] and sigma2 ~ InverseGamma(1, 0.1).
Counts aggregate M repeated binary trials per time step.  The likelihood is
estimated with the bootstrap particle filter; parameters proposed outside
the prior support are rejected before any filtering work.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from ..rng import RngStream, Uniform


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    # stable log s(x) = -log(1 + exp(-x))
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = -np.log1p(np.exp(-x[pos]))
    out[~pos] = x[~pos] - np.log1p(np.exp(x[~pos]))
    return out


class BinomialSSM:
    def __init__(self, y, m_trials: int = 50):
        self.y = np.asarray(y, dtype=int)
        if np.any(self.y < 0) or np.any(self.y > m_trials):
            raise ValueError("counts must lie in 0..m_trials")
        self.m_trials = int(m_trials)
        self.T = self.y.shape[0]
        self._log_binom = (
            gammaln(self.m_trials + 1)
            - gammaln(self.y + 1)
            - gammaln(self.m_trials - self.y + 1)
        )

    @staticmethod
    def simulate(a: float, sigma2: float, T: int, m_trials: int, stream: RngStream):
        x = np.empty(T + 1)
        x[0] = stream.gen.standard_normal()
        sd = math.sqrt(sigma2)
        for t in range(1, T + 1):
            x[t] = a * x[t - 1] + sd * stream.gen.standard_normal()
        p = 1.0 / (1.0 + np.exp(-x[1:]))
        y = stream.gen.binomial(m_trials, p)
        return x, y

    # priors: a ~ U[0,1], sigma2 ~ InverseGamma(1, 0.1)
    def log_prior(self, theta) -> float:
        a, s2 = float(theta[0]), float(theta[1])
        if not (0.0 <= a <= 1.0) or s2 <= 0.0:
            return -math.inf
        return math.log(0.1) - 2.0 * math.log(s2) - 0.1 / s2

    # --- bootstrap particle filter hooks -----------------------------------

    def pf_init(self, theta, n: int, stream: RngStream) -> np.ndarray:
        return stream.gen.standard_normal(n)

    def pf_propagate(self, x, theta, stream: RngStream) -> np.ndarray:
        return float(theta[0]) * x + math.sqrt(float(theta[1])) * stream.gen.standard_normal(
            x.shape[0]
        )

    def pf_obs_log_density(self, t: int, x, theta) -> np.ndarray:
        log_s = _log_sigmoid(x)
        log_1ms = log_s - x  # log(1-s) = log s - x
        k = self.y[t]
        return self._log_binom[t] + k * log_s + (self.m_trials - k) * log_1ms

    # --- defaults -----------------------------------------------------------

    def default_init(self) -> Uniform:
        return Uniform(np.array([0.0, 0.0]), np.array([1.0, 1.0]))

    def default_proposal_sd(self) -> np.ndarray:
        return np.array([0.01, 0.05])
