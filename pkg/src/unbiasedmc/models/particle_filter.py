"""Bootstrap particle filter producing unbiased likelihood estimates.

Particles are propagated from the transition, weighted by the observation
density, and multinomially resampled at every step.  The returned value is
sum_t log( N^{-1} sum_i w_t^i ); exp of it is an unbiased estimate of the
likelihood.  A step where every weight vanishes yields -inf, which the
kernels treat as an automatic rejection.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import RngStream


def _log_mean_exp(logw: np.ndarray) -> float:
    mx = np.max(logw)
    if mx == -math.inf:
        return -math.inf
    return float(mx + math.log(np.mean(np.exp(logw - mx))))


def bootstrap_pf_log_lik(ssm, theta, n_particles: int, stream: RngStream) -> float:
    """Log of the bootstrap filter likelihood estimate for ``ssm`` at ``theta``.

    ``ssm`` supplies ``pf_init(theta, n, stream)``,
    ``pf_propagate(x, theta, stream)`` and ``pf_obs_log_density(t, x, theta)``
    with observation indices t = 0..T-1.
    """
    if n_particles < 2:
        raise ValueError("need at least 2 particles")
    x = ssm.pf_init(theta, n_particles, stream)
    ll = 0.0
    for t in range(ssm.T):
        x = ssm.pf_propagate(x, theta, stream)
        logw = ssm.pf_obs_log_density(t, x, theta)
        incr = _log_mean_exp(logw)
        if incr == -math.inf:
            return -math.inf
        ll += incr
        # multinomial resampling
        w = np.exp(logw - np.max(logw))
        cum = np.cumsum(w)
        u = stream.gen.random(n_particles) * cum[-1]
        x = x[np.searchsorted(cum, u)]
    return ll
