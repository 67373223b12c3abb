"""Beta-Bernoulli random effects model with importance-sampled likelihood.

Latent X_t ~ Beta(alpha, beta) on (0,1), observations Y_t | X_t = x ~
Bernoulli(x).  The single-observation marginal is alpha/(alpha+beta) for
y = 1 and beta/(alpha+beta) for y = 0, so the full marginal likelihood is
available in closed form and every estimator here can be validated against
it.  alpha is fixed; the unknown parameter is beta, uniform on a compact
interval.

The per-observation estimator averages N importance weights under the
tilted Beta proposal

    y = 1:  Beta(1+alpha, beta(1+eps)),    y = 0:  Beta(alpha(1+eps), 1+beta),

whose normalized weights behave like (1-x)^(-eps*beta), resp. x^(-alpha*eps):
bounded nowhere for eps > 0, which is exactly what makes this model a
stress test with polynomially ergodic chains.  At eps = 0 the weights are
constant and the estimator returns the exact marginal without consuming
randomness.

For the block kernel the auxiliary variables are the underlying uniforms,
mapped through the Beta quantile function, making each per-observation
estimate a deterministic function of (beta, block).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import betaincinv, betaln

from ..rng import RngStream, Uniform


def _log_mean_exp_rows(logw: np.ndarray) -> np.ndarray:
    """Stable log(mean(exp(row))) per row; scalar scipy wrappers are too slow here."""
    mx = logw.max(axis=1)
    return mx + np.log(np.exp(logw - mx[:, None]).mean(axis=1))


class BetaBernoulliModel:
    def __init__(
        self,
        y,
        alpha: float = 1.0,
        eps: float = 0.125,
        n_particles: int = 10,
        beta_lo: float = 0.1,
        beta_hi: float = 10.0,
    ):
        if alpha <= 0:
            raise ValueError("alpha must be > 0")
        if eps < 0:
            raise ValueError("eps must be >= 0")
        if n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if not (0 < beta_lo < beta_hi):
            raise ValueError("need 0 < beta_lo < beta_hi")
        self.y = np.asarray(y, dtype=int)
        if not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("observations must be 0/1")
        self.alpha = float(alpha)
        self.eps = float(eps)
        self.n_particles = int(n_particles)
        self.beta_lo = float(beta_lo)
        self.beta_hi = float(beta_hi)
        self.idx1 = np.flatnonzero(self.y == 1)
        self.idx0 = np.flatnonzero(self.y == 0)
        self._log_prior_const = -math.log(beta_hi - beta_lo)

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]

    @staticmethod
    def simulate(alpha: float, beta: float, T: int, stream: RngStream) -> np.ndarray:
        x = stream.gen.beta(alpha, beta, size=T)
        return (stream.gen.random(T) < x).astype(int)

    # --- closed forms -------------------------------------------------------

    def exact_log_marginal(self, beta: float) -> float:
        t1 = self.idx1.shape[0]
        t0 = self.idx0.shape[0]
        return (
            t1 * math.log(self.alpha)
            + t0 * math.log(beta)
            - self.n_obs * math.log(self.alpha + beta)
        )

    def log_prior(self, theta) -> float:
        b = float(theta[0])
        if self.beta_lo <= b <= self.beta_hi:
            return self._log_prior_const
        return -math.inf

    # --- importance weights ---------------------------------------------------

    def _log_weight_consts(self, beta: float) -> tuple[float, float]:
        a, e = self.alpha, self.eps
        c1 = betaln(1.0 + a, beta * (1.0 + e)) - betaln(a, beta)
        c0 = betaln(a * (1.0 + e), 1.0 + beta) - betaln(a, beta)
        return c1, c0

    def log_weight(self, x, y: int, beta: float):
        """log omega(x, y) of the importance weight under the tilted proposal."""
        c1, c0 = self._log_weight_consts(beta)
        x = np.asarray(x, dtype=float)
        if y == 1:
            return c1 - self.eps * beta * np.log1p(-x)
        return c0 - self.alpha * self.eps * np.log(x)

    def _sum_per_obs(self, logw1, logw0) -> np.ndarray:
        out = np.empty(self.n_obs)
        if logw1.size:
            out[self.idx1] = _log_mean_exp_rows(logw1)
        if logw0.size:
            out[self.idx0] = _log_mean_exp_rows(logw0)
        return out

    # --- pseudo-marginal estimator --------------------------------------------

    def log_lik_hat(self, theta, stream: RngStream) -> float:
        beta = float(theta[0])
        if self.eps == 0.0:
            return self.exact_log_marginal(beta)
        n = self.n_particles
        a, e = self.alpha, self.eps
        c1, c0 = self._log_weight_consts(beta)
        total = 0.0
        if self.idx1.size:
            # only 1-X enters the weight; drawing the complement Beta(b, a)
            # directly keeps log(1-x) finite where x would round to 1.0
            om1 = stream.gen.beta(beta * (1.0 + e), 1.0 + a, size=(self.idx1.size, n))
            logw1 = c1 - e * beta * np.log(om1)
            total += float(np.sum(_log_mean_exp_rows(logw1)))
        if self.idx0.size:
            x0 = stream.gen.beta(a * (1.0 + e), 1.0 + beta, size=(self.idx0.size, n))
            logw0 = c0 - a * e * np.log(x0)
            total += float(np.sum(_log_mean_exp_rows(logw0)))
        return total

    # --- block pseudo-marginal contract ----------------------------------------

    def sample_aux(self, stream: RngStream) -> np.ndarray:
        """One uniform block per observation; theta-free by construction."""
        return stream.gen.random((self.n_obs, self.n_particles))

    def per_obs_log_lik(self, theta, aux) -> np.ndarray:
        beta = float(theta[0])
        a, e = self.alpha, self.eps
        c1, c0 = self._log_weight_consts(beta)
        if self.eps == 0.0:
            out = np.empty(self.n_obs)
            out[self.idx1] = c1
            out[self.idx0] = c0
            return out
        # quantile transform of the complement: if X ~ Beta(a,b) then
        # 1-X ~ Beta(b,a), evaluated at 1-u, so tiny 1-x values stay exact
        om1 = betaincinv(beta * (1.0 + e), 1.0 + a, 1.0 - aux[self.idx1])
        x0 = betaincinv(a * (1.0 + e), 1.0 + beta, aux[self.idx0])
        logw1 = c1 - e * beta * np.log(om1)
        logw0 = c0 - a * e * np.log(x0)
        return self._sum_per_obs(logw1, logw0)

    # --- defaults ---------------------------------------------------------------

    def default_init(self) -> Uniform:
        return Uniform(np.array([self.beta_lo]), np.array([self.beta_hi]))

    def default_proposal_sd(self) -> np.ndarray:
        return np.array([2.0])
