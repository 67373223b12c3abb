"""Noisy bivariate-normal toy target.

The target is N(mu, I).  To emulate the pseudo-marginal setting the exact
density is multiplied by a unit-mean log-normal perturbation: the returned
log-estimate is log pi(theta) + e with e ~ N(-sigma^2/2, sigma^2), so the
estimator is unbiased on the natural scale for every sigma >= 0.  At
sigma = 0 no noise variate is drawn at all and the chain reduces exactly,
draw for draw, to plain Metropolis--Hastings on pi.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import RngStream, Uniform

_LOG_2PI = math.log(2.0 * math.pi)


def toy_log_lik_hat(theta, mu, sigma_noise: float, stream: RngStream) -> float:
    """Unbiased log-scale estimate of the N(mu, I) density at theta."""
    d = theta - mu
    exact = -0.5 * float(d @ d) - 0.5 * len(d) * _LOG_2PI
    if sigma_noise == 0.0:
        return exact
    eps = -0.5 * sigma_noise**2 + sigma_noise * stream.gen.standard_normal()
    return exact + eps


class ToyNoisyNormal:
    """Pseudo-marginal model wrapper for the noisy-normal toy."""

    def __init__(self, mu=(1.0, 2.0), sigma_noise: float = 1.0):
        if sigma_noise < 0:
            raise ValueError("sigma_noise must be >= 0")
        self.mu = np.asarray(mu, dtype=float)
        self.sigma_noise = float(sigma_noise)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def log_density_exact(self, theta) -> float:
        d = theta - self.mu
        return -0.5 * float(d @ d) - 0.5 * self.dim * _LOG_2PI

    # the target plays the likelihood role; the flat (improper) prior
    # contributes nothing to acceptance ratios
    def log_prior(self, theta) -> float:
        return 0.0

    def log_lik_hat(self, theta, stream: RngStream) -> float:
        return toy_log_lik_hat(theta, self.mu, self.sigma_noise, stream)

    def default_init(self) -> Uniform:
        return Uniform(np.zeros(self.dim), np.ones(self.dim))

    def default_proposal_sd(self) -> np.ndarray:
        return np.ones(self.dim)
