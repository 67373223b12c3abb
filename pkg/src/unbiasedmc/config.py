"""Experiment configuration: strict key = value files with flag overrides.

Sections mirror the run anatomy: [model], [kernel], [init], [run],
[output].  Unknown sections or keys are rejected outright so that typos
fail loudly before any compute is spent.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

MODELS = ("toy", "beta_bernoulli", "lgssm", "binomial_ssm", "ising")
KERNELS = ("mh", "pm", "block_pm", "exchange")
H_FUNCTIONS = ("identity", "quad_sum")
INITS = ("default", "uniform", "normal", "point")

_MODEL_KEYS = {
    "toy": {"sigma", "mu"},
    "beta_bernoulli": {"alpha", "eps", "particles", "data", "beta_lo", "beta_hi"},
    "lgssm": {"data", "particles"},
    "binomial_ssm": {"data", "particles", "m_trials"},
    "ising": {"data"},
}
_KERNEL_KEYS = {"name", "proposal_sd"}
_INIT_KEYS = {"name", "lo", "hi", "mean", "sd", "value", "truncate_to_prior"}
_RUN_KEYS = {"k", "m", "replicates", "budget_seconds", "seed", "workers", "n_max", "h"}
_OUTPUT_KEYS = {"directory"}

_DEFAULT_KERNEL = {
    "toy": "pm",
    "beta_bernoulli": "pm",
    "lgssm": "pm",
    "binomial_ssm": "pm",
    "ising": "exchange",
}


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    model: str
    model_params: dict = field(default_factory=dict)
    kernel: str = ""
    proposal_sd: Optional[tuple] = None
    init_name: str = "default"
    init_params: dict = field(default_factory=dict)
    truncate_to_prior: bool = False
    k: int = 0
    m: int = 0
    replicates: Optional[int] = None
    budget_seconds: Optional[float] = None
    seed: int = 1
    workers: int = 1
    n_max: int = 10**6
    h: str = "identity"
    output_dir: str = "out"

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}; choose from {KERNELS}")
        if self.kernel == "block_pm" and self.model != "beta_bernoulli":
            raise ConfigError("block_pm requires a factorized-likelihood model (beta_bernoulli)")
        if self.kernel == "mh" and self.model == "binomial_ssm":
            raise ConfigError("binomial_ssm has no evaluable likelihood; use the pm kernel")
        if self.kernel == "exchange" and self.model != "ising":
            raise ConfigError("exchange requires an exact-sampler model (ising)")
        if self.model == "ising" and self.kernel != "exchange":
            raise ConfigError("the ising model runs under the exchange kernel")
        if self.h not in H_FUNCTIONS:
            raise ConfigError(f"unknown h {self.h!r}; choose from {H_FUNCTIONS}")
        if self.init_name not in INITS:
            raise ConfigError(f"unknown init {self.init_name!r}; choose from {INITS}")
        if not (0 <= self.k <= self.m):
            raise ConfigError(f"need 0 <= k <= m, got k={self.k}, m={self.m}")
        if (self.replicates is None) == (self.budget_seconds is None):
            raise ConfigError("exactly one of replicates and budget_seconds must be set")
        if self.replicates is not None and self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.budget_seconds is not None and self.budget_seconds <= 0:
            raise ConfigError("budget_seconds must be > 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1")
        allowed = _MODEL_KEYS[self.model]
        unknown = set(self.model_params) - allowed
        if unknown:
            raise ConfigError(
                f"unknown [model] keys for {self.model}: {sorted(unknown)} (allowed: {sorted(allowed)})"
            )
        return self

    def to_canonical_dict(self) -> dict:
        d = asdict(self)
        d["proposal_sd"] = list(self.proposal_sd) if self.proposal_sd is not None else None
        return d


def config_hash(cfg: ExperimentConfig) -> str:
    payload = json.dumps(cfg.to_canonical_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


def _parse_scalar(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def _parse_floats(raw: str) -> tuple:
    try:
        return tuple(float(part) for part in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {raw!r}") from exc


def _check_keys(section: str, given: dict, allowed: set):
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(
            f"unknown keys in [{section}]: {sorted(unknown)} (allowed: {sorted(allowed)})"
        )


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Build a validated config from an INI file plus ``section.key -> value`` overrides."""
    parser = configparser.ConfigParser(interpolation=None)
    if path is not None:
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
    sections = {name: dict(parser.items(name)) for name in parser.sections()}
    for section, items in (overrides or {}).items():
        sections.setdefault(section, {}).update(items)
    known_sections = {"model", "kernel", "init", "run", "output"}
    unknown = set(sections) - known_sections
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    model_sec = dict(sections.get("model", {}))
    model = model_sec.pop("name", None)
    if model is None:
        raise ConfigError("[model] section must set name")
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; choose from {MODELS}")
    _check_keys("model", model_sec, _MODEL_KEYS[model])
    model_params = {key: _parse_scalar(value) if key != "mu" else _parse_floats(value)
                    for key, value in model_sec.items()}

    kernel_sec = dict(sections.get("kernel", {}))
    _check_keys("kernel", kernel_sec, _KERNEL_KEYS)
    kernel = kernel_sec.get("name", _DEFAULT_KERNEL[model])
    proposal_sd = (
        _parse_floats(kernel_sec["proposal_sd"]) if "proposal_sd" in kernel_sec else None
    )

    init_sec = dict(sections.get("init", {}))
    _check_keys("init", init_sec, _INIT_KEYS)
    init_name = init_sec.pop("name", "default")
    truncate = bool(_parse_scalar(init_sec.pop("truncate_to_prior", "false")))
    init_params = {key: _parse_floats(value) for key, value in init_sec.items()}

    run_sec = dict(sections.get("run", {}))
    _check_keys("run", run_sec, _RUN_KEYS)
    out_sec = dict(sections.get("output", {}))
    _check_keys("output", out_sec, _OUTPUT_KEYS)

    # "none" clears a value, letting a flag switch between replicate and budget mode
    for key in ("replicates", "budget_seconds"):
        if run_sec.get(key, "").strip().lower() == "none":
            del run_sec[key]

    def run_int(key, default):
        return int(run_sec[key]) if key in run_sec else default

    cfg = ExperimentConfig(
        model=model,
        model_params=model_params,
        kernel=kernel,
        proposal_sd=proposal_sd,
        init_name=init_name,
        init_params=init_params,
        truncate_to_prior=truncate,
        k=run_int("k", 0),
        m=run_int("m", 0),
        replicates=run_int("replicates", None),
        budget_seconds=float(run_sec["budget_seconds"]) if "budget_seconds" in run_sec else None,
        seed=run_int("seed", 1),
        workers=run_int("workers", 1),
        n_max=run_int("n_max", 10**6),
        h=run_sec.get("h", "identity"),
        output_dir=out_sec.get("directory", "out"),
    )
    return cfg.validate()
