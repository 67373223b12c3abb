from .beta_bernoulli import BetaBernoulliModel
from .binomial_ssm import BinomialSSM
from .ising import (
    BETA_CRITICAL,
    CftpFailureError,
    IsingModel,
    enumerate_suff_stats,
    ising_cftp_sample,
    suff_stat,
    unnorm_log_density,
)
from .lgssm import LinearGaussianSSM, PfLikelihood, kalman_log_lik, simulate_lgssm
from .particle_filter import bootstrap_pf_log_lik
from .toy import ToyNoisyNormal, toy_log_lik_hat

__all__ = [
    "BETA_CRITICAL",
    "BetaBernoulliModel",
    "BinomialSSM",
    "CftpFailureError",
    "IsingModel",
    "LinearGaussianSSM",
    "PfLikelihood",
    "ToyNoisyNormal",
    "bootstrap_pf_log_lik",
    "enumerate_suff_stats",
    "ising_cftp_sample",
    "kalman_log_lik",
    "simulate_lgssm",
    "suff_stat",
    "toy_log_lik_hat",
    "unnorm_log_density",
]
