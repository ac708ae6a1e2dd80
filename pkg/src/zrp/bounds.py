"""Closed-form concentration bounds and the exponential-sum variables S_k.

S_k = xi_1 + ... + xi_k with independent xi_i ~ Exp(lambda_i).  With
lambda_i = r(i), E S_k = R(k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError
from .rng import check_seed, make_rng


def poisson_tail_bound(mean: float, B: float) -> float:
    """exp(-(1 + B ln B - B) mean), an upper bound on P(Z >= B mean) for Z ~ Poisson(mean)."""
    if not B > 1:
        raise ConfigError(f"Poisson tail bound needs B > 1, got {B}", ["B"])
    if not mean > 0:
        raise ConfigError(f"Poisson tail bound needs mean > 0, got {mean}", ["mean"])
    return math.exp(-(1.0 + B * math.log(B) - B) * mean)


@dataclass(frozen=True)
class ExpSumSpec:
    rates: tuple
    mean: float = field(init=False)
    variance: float = field(init=False)

    def __post_init__(self):
        rates = tuple(float(v) for v in self.rates)
        if not rates:
            raise ConfigError("exponential sum needs at least one rate", ["rates"])
        if any(not (v > 0 and math.isfinite(v)) for v in rates):
            raise ConfigError("exponential rates must be positive and finite", ["rates"])
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "mean", math.fsum(1.0 / v for v in rates))
        object.__setattr__(self, "variance", math.fsum(1.0 / (v * v) for v in rates))

    @classmethod
    def from_rate(cls, rate, k: int) -> "ExpSumSpec":
        """S_k for the rate function: lambda_i = r(i), i = 1..k."""
        return cls(tuple(rate.array(k)[1:]))

    @property
    def min_rate(self) -> float:
        return min(self.rates)


def expsum_sample(spec: ExpSumSpec, seed: int, size: int | None = None):
    """One draw of S (or ``size`` draws) from the stream seeded by ``seed``."""
    rng = make_rng(check_seed(seed))
    scale = 1.0 / np.asarray(spec.rates)
    if size is None:
        return float(np.sum(rng.exponential(scale)))
    out = np.zeros(size)
    # accumulate rate by rate to keep memory at O(size)
    for s in scale:
        out += rng.exponential(s, size)
    return out


def expsum_bounds(spec: ExpSumSpec, B: float) -> tuple[float, float]:
    """(exp(-B^2/4), exp(-B/2)): bounds on P(S - ES <= -sqrt(Var S) B) and
    P(S - ES >= lambda Var S + B / lambda) with lambda the smallest rate."""
    if not B >= 0:
        raise ConfigError(f"B must be non-negative, got {B}", ["B"])
    return math.exp(-B * B / 4.0), math.exp(-B / 2.0)


def expsum_thresholds(spec: ExpSumSpec, B: float) -> tuple[float, float]:
    """Deviation thresholds matching :func:`expsum_bounds`: (lower, upper) levels for S."""
    lam = spec.min_rate
    return spec.mean - math.sqrt(spec.variance) * B, spec.mean + lam * spec.variance + B / lam


def martingale_tail_bound(a: float, b2: float, K: float) -> float:
    """exp(-a^2 / (2 (a K + b2))), bounding P(exists t: M(t) >= a, <M,M>_t <= b2)
    for a martingale with jumps at most K."""
    if not a > 0:
        raise ConfigError(f"martingale bound needs a > 0, got {a}", ["a"])
    if b2 < 0 or K < 0:
        raise ConfigError("martingale bound needs b2 >= 0 and K >= 0", ["b2", "K"])
    den = 2.0 * (a * K + b2)
    if den == 0:
        return 0.0
    return math.exp(-a * a / den)


def martingale_level_for(target: float, b2: float, K: float) -> float:
    """Smallest a > 0 with martingale_tail_bound(a, b2, K) <= target."""
    if not 0 < target < 1:
        raise ConfigError("target probability must lie in (0, 1)", ["target"])
    if b2 < 0 or K < 0:
        raise ConfigError("martingale bound needs b2 >= 0 and K >= 0", ["b2", "K"])
    if b2 == 0 and K == 0:
        return 0.0
    gap = lambda a: martingale_tail_bound(a, b2, K) - target  # noqa: E731
    lo, hi = 0.0, 1.0
    while gap(hi) > 0:
        lo, hi = hi, 2.0 * hi
    if lo == 0.0:
        lo = 1e-300
    return brentq(gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def compensated_poisson_sup(rate: float, horizon: float, jump: float, n_paths: int, seed: int) -> np.ndarray:
    """Samples of (sup_t M(t), <M,M>_horizon) for M(t) = jump (N(t) - rate t),
    N a Poisson process: a martingale with jumps bounded by ``jump``.

    The supremum is attained just after a jump or at the horizon, so it is
    computed exactly from the jump times.
    """
    rng = make_rng(check_seed(seed))
    counts = rng.poisson(rate * horizon, n_paths)
    owner = np.repeat(np.arange(n_paths), counts)
    # conditionally on k jumps the times are uniform order statistics
    times = rng.random(owner.size) * horizon
    order = np.lexsort((times, owner))
    times = times[order]
    starts = np.cumsum(counts) - counts
    rank = np.arange(owner.size) - starts[owner] + 1
    after = jump * (rank - rate * times)
    sup = np.zeros(n_paths)
    np.maximum.at(sup, owner, after)
    sup = np.maximum(sup, jump * (counts - rate * horizon))
    bracket = np.full(n_paths, jump * jump * rate * horizon)
    return sup, bracket
