"""Potential functions r(k) and the quantities derived from them."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import HorizonError, InvalidRateError


@dataclass(frozen=True)
class RateFunction:
    """Expulsion rate r(k) of a site holding k particles, with r(0) = 0.

    ``form="power"`` gives r(k) = scale * k**alpha for every k >= 1 (no horizon).
    ``form="table"`` gives r(k) = values[k - 1] for 1 <= k <= len(values).
    """

    form: str
    alpha: float = 1.0
    scale: float = 1.0
    values: tuple = field(default=())

    def __post_init__(self):
        if self.form == "power":
            if not (math.isfinite(self.alpha) and math.isfinite(self.scale)) or self.scale <= 0:
                raise InvalidRateError("power rate needs finite alpha and scale > 0", ["scale"])
        elif self.form == "table":
            vals = tuple(float(v) for v in self.values)
            if not vals:
                raise InvalidRateError("rate table is empty", ["values"])
            bad = [k + 1 for k, v in enumerate(vals) if not (v > 0 and math.isfinite(v))]
            if bad:
                raise InvalidRateError(f"rate table must be positive and finite; bad k={bad}", ["values"])
            object.__setattr__(self, "values", vals)
        else:
            raise InvalidRateError(f"unknown rate form {self.form!r}", ["form"])

    @classmethod
    def power(cls, alpha: float, scale: float = 1.0) -> "RateFunction":
        return cls("power", alpha=float(alpha), scale=float(scale))

    @classmethod
    def table(cls, values) -> "RateFunction":
        return cls("table", values=tuple(values))

    @classmethod
    def from_dict(cls, data: dict) -> "RateFunction":
        form = data.get("form")
        if form == "power":
            unknown = set(data) - {"form", "alpha", "scale"}
            if unknown or "alpha" not in data:
                raise InvalidRateError("power rate expects keys form, alpha[, scale]", sorted(unknown) or ["alpha"])
            return cls.power(data["alpha"], data.get("scale", 1.0))
        if form == "table":
            unknown = set(data) - {"form", "values"}
            if unknown or "values" not in data:
                raise InvalidRateError("table rate expects keys form, values", sorted(unknown) or ["values"])
            return cls.table(data["values"])
        raise InvalidRateError(f"unknown rate form {form!r}", ["form"])

    @classmethod
    def load(cls, path) -> "RateFunction":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        if self.form == "power":
            return {"form": "power", "alpha": self.alpha, "scale": self.scale}
        return {"form": "table", "values": list(self.values)}

    def scaled(self, factor: float) -> "RateFunction":
        """The rate function factor * r."""
        if self.form == "power":
            return RateFunction.power(self.alpha, self.scale * factor)
        return RateFunction.table([v * factor for v in self.values])

    @property
    def horizon(self) -> float:
        """Largest k where r(k) is defined (``inf`` for closed forms)."""
        return math.inf if self.form == "power" else len(self.values)

    def __call__(self, k: int) -> float:
        k = int(k)
        if k < 0:
            raise HorizonError(f"occupancy must be non-negative, got {k}")
        if k == 0:
            return 0.0
        if k > self.horizon:
            raise HorizonError(f"r({k}) requested beyond the tabulated horizon {self.horizon}")
        if self.form == "power":
            return self.scale * float(k) ** self.alpha
        return self.values[k - 1]

    def array(self, kmax: int) -> np.ndarray:
        """Read-only array ``[r(0), r(1), ..., r(kmax)]``."""
        if kmax > self.horizon:
            raise HorizonError(f"r up to {kmax} requested beyond the tabulated horizon {self.horizon}")
        return _rate_array(self, int(kmax))

    def linear_bound(self, kmax: int) -> float:
        """sup of r(k)/k over 1 <= k <= kmax."""
        if kmax < 1:
            raise HorizonError("linear bound needs kmax >= 1")
        r = self.array(kmax)
        return float(np.max(r[1:] / np.arange(1, kmax + 1)))


@lru_cache(maxsize=256)
def _rate_array(rate: RateFunction, kmax: int) -> np.ndarray:
    if rate.form == "power":
        k = np.arange(kmax + 1, dtype=float)
        out = rate.scale * k**rate.alpha
        out[0] = 0.0
    else:
        out = np.concatenate([[0.0], np.asarray(rate.values[:kmax], dtype=float)])
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    k_max: int
    monotonicity_violations: tuple
    linear_bound: float
    linear_bound_argmax: int
    unboundedness: str = "declared, not checked"

    def summary(self) -> str:
        status = "valid" if self.valid else f"non-monotone at k={list(self.monotonicity_violations)}"
        return (f"{status}; sup r(k)/k on [1, {self.k_max}] = {self.linear_bound:.6g} "
                f"(at k={self.linear_bound_argmax}); r -> infinity {self.unboundedness}")


def validate_rate(rate: RateFunction, k_max: int) -> ValidationReport:
    """Check monotonicity and the linear-growth bound of ``rate`` on [1, k_max].

    Unboundedness cannot be seen on a finite prefix and is only recorded as
    declared.  Violations are reported as the k with r(k) < r(k - 1), k >= 2.
    """
    if k_max < 1:
        raise InvalidRateError("k_max must be at least 1", ["k_max"])
    r = rate.array(k_max)
    drops = np.nonzero(r[2:] < r[1:-1])[0] + 2
    ratio = r[1:] / np.arange(1, k_max + 1)
    argmax = int(np.argmax(ratio)) + 1
    return ValidationReport(
        valid=drops.size == 0,
        k_max=int(k_max),
        monotonicity_violations=tuple(int(k) for k in drops),
        linear_bound=float(ratio[argmax - 1]),
        linear_bound_argmax=argmax,
    )


def big_R(rate: RateFunction, k: int) -> float:
    """R(k) = sum_{i=1..k} 1/r(i), the isolated emptying time of a k-pile."""
    if k < 0:
        raise HorizonError(f"R(k) needs k >= 0, got {k}")
    if k == 0:
        return 0.0
    return math.fsum(1.0 / rate.array(k)[1:])


def big_R_array(rate: RateFunction, kmax: int) -> np.ndarray:
    """``[R(0), ..., R(kmax)]``."""
    r = rate.array(kmax)
    out = np.zeros(kmax + 1)
    out[1:] = np.cumsum(1.0 / r[1:])
    return out


def delta_rate(rate: RateFunction, k: int) -> float:
    """Delta(k) = r(k + 1) - r(k), the jump rate of a tagged particle."""
    if k < 0:
        raise HorizonError(f"Delta(k) needs k >= 0, got {k}")
    return rate(k + 1) - rate(k)


def delta_array(rate: RateFunction, kmax: int) -> np.ndarray:
    """``[Delta(0), ..., Delta(kmax)]``; needs r up to kmax + 1."""
    return np.diff(rate.array(kmax + 1))
