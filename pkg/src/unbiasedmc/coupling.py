"""Maximal coupling of proposal distributions by rejection sampling.

The coupling primitive lets a pair of chains propose identical values with
the largest possible probability, namely the total-variation overlap
``int min(p, q)``.  Construction: draw X ~ p and accept it as the common
value with probability min(1, q(X)/p(X)); otherwise draw Y ~ q repeatedly
until it is rejected against p.  Only density ratios are needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

DEFAULT_RESIDUAL_CAP = 10**6

_cap_failures = 0


def coupling_cap_failures() -> int:
    """Number of residual-sampling loops that hit the iteration cap."""
    return _cap_failures


def reset_coupling_cap_failures():
    global _cap_failures
    _cap_failures = 0


@dataclass
class CoupledDraw:
    """A pair (x, y) with x ~ p, y ~ q; ``coupled`` iff x and y are identical."""

    x: Any
    y: Any
    coupled: bool


def _copy(value):
    return value.copy() if isinstance(value, np.ndarray) else value


def maximal_coupling(p, q, stream, residual_cap: int = DEFAULT_RESIDUAL_CAP) -> CoupledDraw:
    """Draw (x, y) from a maximal coupling of ``p`` and ``q``.

    Marginally x ~ p and y ~ q, and P(x = y) = int min(p, q).  On the
    coupled event the two values are bitwise equal.  The residual loop
    terminates almost surely; ``residual_cap`` guards against pathological
    inputs, falling back to an independent y ~ q and incrementing the
    failure counter (the marginal law of y is then only approximate, with
    negligible probability).
    """
    x = p.sample(stream)
    u = stream.gen.random()
    log_u = math.log(u) if u > 0.0 else -math.inf
    if log_u + p.log_density(x) <= q.log_density(x):
        return CoupledDraw(x, _copy(x), True)
    for _ in range(residual_cap):
        y = q.sample(stream)
        v = stream.gen.random()
        log_v = math.log(v) if v > 0.0 else -math.inf
        if log_v + q.log_density(y) > p.log_density(y):
            return CoupledDraw(x, y, False)
    global _cap_failures
    _cap_failures += 1
    return CoupledDraw(x, q.sample(stream), False)


def common_uniform_accept(u: float, log_alpha_1: float, log_alpha_2: float) -> tuple[bool, bool]:
    """Accept/reject two proposals with one shared uniform.

    Returns (ln u < log_alpha_1, ln u < log_alpha_2).  Sharing u makes the
    two decisions monotone: the chain with the larger acceptance ratio
    accepts whenever the other does.
    """
    log_u = math.log(u) if u > 0.0 else -math.inf
    return (log_u < log_alpha_1, log_u < log_alpha_2)
