"""Configurations, model parameters and jump geometries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, InvalidRateError, SaturationError
from .rates import RateFunction, validate_rate

EXPONENT_CAP = 700.0


@dataclass(frozen=True)
class Configuration:
    """Occupation vector x in Z_+^n."""

    occupancies: tuple

    def __post_init__(self):
        occ = tuple(int(v) for v in self.occupancies)
        if any(v < 0 for v in occ):
            raise ConfigError(f"occupancies must be non-negative: {occ}", ["occupancies"])
        object.__setattr__(self, "occupancies", occ)

    @classmethod
    def of(cls, x) -> "Configuration":
        return x if isinstance(x, Configuration) else cls(tuple(np.asarray(x).ravel().tolist()))

    @property
    def n(self) -> int:
        return len(self.occupancies)

    @property
    def m(self) -> int:
        return sum(self.occupancies)

    def array(self) -> np.ndarray:
        return np.array(self.occupancies, dtype=np.int64)

    def __len__(self):
        return len(self.occupancies)

    def __iter__(self):
        return iter(self.occupancies)


def as_config_array(x, n: int | None = None, m: int | None = None) -> np.ndarray:
    arr = np.asarray(x.occupancies if isinstance(x, Configuration) else x, dtype=np.int64).ravel()
    if np.any(arr < 0):
        raise ConfigError(f"configuration has negative entries: {arr.tolist()}", ["x"])
    if n is not None and arr.size != n:
        raise ConfigError(f"configuration has {arr.size} sites, expected {n}", ["x"])
    if m is not None and int(arr.sum()) != m:
        raise ConfigError(f"configuration holds {int(arr.sum())} particles, expected {m}", ["x"])
    return arr


def extreme_state(n: int, m: int, site: int = 0) -> np.ndarray:
    """All m particles on one site."""
    x = np.zeros(n, dtype=np.int64)
    x[site] = m
    return x


@dataclass(frozen=True)
class ModelSpec:
    """Rate function plus system size.

    ``rho`` defaults to the actual density m/n and ``k_max`` (the horizon on
    which the rate is validated) defaults to m.  ``kappa = rho * sup r(k)/k``
    bounds the per-site arrival rate (1/n) sum_i r(x_i) for every x.
    """

    rate: RateFunction
    n: int
    m: int
    rho: float | None = None
    k_max: int | None = None
    kappa: float = field(init=False)
    linear_bound: float = field(init=False)

    def __post_init__(self):
        bad = []
        if int(self.n) != self.n or self.n < 2:
            bad.append("n")
        if int(self.m) != self.m or self.m < 1:
            bad.append("m")
        if bad:
            raise ConfigError(f"need integer n >= 2 and m >= 1, got n={self.n}, m={self.m}", bad)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))
        rho = self.m / self.n if self.rho is None else float(self.rho)
        if rho < self.m / self.n - 1e-12:
            raise ConfigError(f"rho={rho} is below the density m/n={self.m / self.n}", ["rho"])
        k_max = self.m if self.k_max is None else int(self.k_max)
        if k_max < self.m:
            raise ConfigError(f"k_max={k_max} must be at least m={self.m}", ["k_max"])
        report = validate_rate(self.rate, k_max)
        if not report.valid:
            raise InvalidRateError(f"rate is not monotone: {report.summary()}", ["rate"])
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "k_max", k_max)
        object.__setattr__(self, "linear_bound", report.linear_bound)
        object.__setattr__(self, "kappa", rho * report.linear_bound)

    def rates(self, extra: int = 0) -> np.ndarray:
        """``[r(0), ..., r(m + extra)]``."""
        return self.rate.array(self.m + extra)

    def with_particles(self, m: int) -> "ModelSpec":
        """Same rate and geometry-free parameters with m particles (rho re-derived)."""
        return ModelSpec(self.rate, self.n, m)


@dataclass(frozen=True, eq=False)
class Geometry:
    """Destination law of a jumping particle: mean-field or a doubly stochastic P."""

    matrix: np.ndarray | None = None
    name: str = "mean-field"

    def __post_init__(self):
        if self.matrix is None:
            return
        P = np.array(self.matrix, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ConfigError("transition matrix must be square", ["P"])
        if np.any(P < 0):
            raise ConfigError("transition matrix has negative entries", ["P"])
        if np.max(np.abs(P.sum(axis=1) - 1)) > 1e-12 or np.max(np.abs(P.sum(axis=0) - 1)) > 1e-12:
            raise ConfigError("transition matrix is not doubly stochastic", ["P"])
        ncomp, _ = connected_components(csr_matrix(P > 0), directed=True, connection="strong")
        if ncomp != 1:
            raise ConfigError("transition matrix is reducible", ["P"])
        P.setflags(write=False)
        object.__setattr__(self, "matrix", P)

    @classmethod
    def mean_field(cls) -> "Geometry":
        return cls()

    @classmethod
    def from_matrix(cls, P, name: str = "matrix") -> "Geometry":
        return cls(np.asarray(P, dtype=float), name)

    @property
    def is_mean_field(self) -> bool:
        return self.matrix is None

    def transition_matrix(self, n: int) -> np.ndarray:
        if self.matrix is None:
            return np.full((n, n), 1.0 / n)
        if self.matrix.shape[0] != n:
            raise ConfigError(f"geometry has {self.matrix.shape[0]} sites, model has {n}", ["P"])
        return np.asarray(self.matrix)


def cycle_shift_matrix(n: int) -> np.ndarray:
    """Deterministic rotation i -> i + 1 mod n (doubly stochastic, non-reversible)."""
    return np.roll(np.eye(n), 1, axis=1)


def phi_theta(x, theta: float, cap: float = EXPONENT_CAP) -> float:
    """Exponential occupancy observable (1/n) sum_i exp(theta x_i)."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    arr = np.asarray(x.occupancies if isinstance(x, Configuration) else x, dtype=float)
    top = theta * float(arr.max(initial=0.0))
    if top > cap:
        raise SaturationError(f"theta * max(x) = {top:.6g} exceeds the exponent cap {cap}")
    return float(np.mean(np.exp(theta * arr)))


def max_exponent_ok(theta: float, m: int, cap: float = EXPONENT_CAP) -> bool:
    return theta * m <= cap and math.isfinite(theta)
