"""Linear-Gaussian state space model with exact (Kalman) likelihood.

    X_0 ~ N(0, 1),  X_t | X_{t-1}=x ~ N(a x, sigma_x^2),  Y_t | X_t=x ~ N(x, 1),

with parameters theta = (a, sigma_x), priors a ~ U[0, 1] and
sigma_x ~ Gamma(2, 2).  The exact likelihood from the Kalman recursion
serves both as the "ideal" MH target and as the oracle against which the
bootstrap particle filter estimate is validated.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import RngStream

_LOG_2PI = math.log(2.0 * math.pi)


def kalman_log_lik(a: float, sigma_x: float, y: np.ndarray) -> float:
    """Exact log-likelihood of y_{1:T} by the predict/update recursion."""
    if sigma_x <= 0:
        raise ValueError("sigma_x must be > 0")
    mean, var = 0.0, 1.0  # filter moments of X_0
    sig2 = sigma_x * sigma_x
    ll = 0.0
    for yt in y:
        mean = a * mean
        var = a * a * var + sig2
        s = var + 1.0  # innovation variance, obs noise sd fixed at 1
        resid = yt - mean
        ll += -0.5 * (resid * resid / s + math.log(s) + _LOG_2PI)
        gain = var / s
        mean = mean + gain * resid
        var = var - gain * var
    return ll


def simulate_lgssm(a: float, sigma_x: float, T: int, stream: RngStream):
    """Draw (x_{0:T}, y_{1:T}) from the generative process."""
    x = np.empty(T + 1)
    x[0] = stream.gen.standard_normal()
    noise = sigma_x * stream.gen.standard_normal(T)
    obs_noise = stream.gen.standard_normal(T)
    for t in range(1, T + 1):
        x[t] = a * x[t - 1] + noise[t - 1]
    y = x[1:] + obs_noise
    return x, y


class LinearGaussianSSM:
    """Data container plus the hooks consumed by the particle filter and kernels."""

    def __init__(self, y):
        self.y = np.asarray(y, dtype=float)
        self.T = self.y.shape[0]

    # --- priors -----------------------------------------------------------
    # a ~ U[0,1]; sigma_x ~ Gamma(2, 2)

    def log_prior(self, theta) -> float:
        a, sx = float(theta[0]), float(theta[1])
        if not (0.0 <= a <= 1.0) or sx <= 0.0:
            return -math.inf
        return math.log(4.0) + math.log(sx) - 2.0 * sx  # Gamma(2,2) log-density

    def log_target_exact(self, theta) -> float:
        lp = self.log_prior(theta)
        if lp == -math.inf:
            return -math.inf
        return lp + kalman_log_lik(float(theta[0]), float(theta[1]), self.y)

    def kalman_log_lik(self, theta) -> float:
        return kalman_log_lik(float(theta[0]), float(theta[1]), self.y)

    # --- bootstrap particle filter hooks -----------------------------------

    def pf_init(self, theta, n: int, stream: RngStream) -> np.ndarray:
        return stream.gen.standard_normal(n)

    def pf_propagate(self, x, theta, stream: RngStream) -> np.ndarray:
        return float(theta[0]) * x + float(theta[1]) * stream.gen.standard_normal(x.shape[0])

    def pf_obs_log_density(self, t: int, x, theta) -> np.ndarray:
        resid = self.y[t] - x
        return -0.5 * (resid * resid) - 0.5 * _LOG_2PI

    # --- defaults -----------------------------------------------------------

    def default_init(self):
        from ..rng import Uniform

        return Uniform(np.array([0.0, 0.0]), np.array([1.0, 5.0]))

    def default_proposal_sd(self) -> np.ndarray:
        return np.array([0.2, 0.2])


class PfLikelihood:
    """Pseudo-marginal model view: likelihood estimated by a bootstrap filter."""

    def __init__(self, ssm, n_particles: int):
        if n_particles < 2:
            raise ValueError("need at least 2 particles")
        self.ssm = ssm
        self.n_particles = int(n_particles)

    def log_prior(self, theta) -> float:
        return self.ssm.log_prior(theta)

    def log_lik_hat(self, theta, stream: RngStream) -> float:
        from .particle_filter import bootstrap_pf_log_lik

        return bootstrap_pf_log_lik(self.ssm, theta, self.n_particles, stream)

    def default_init(self):
        return self.ssm.default_init()

    def default_proposal_sd(self) -> np.ndarray:
        return self.ssm.default_proposal_sd()
