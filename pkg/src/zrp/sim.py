"""Monte Carlo simulation of the mean-field Zero-Range process.

Three engines produce paths with the same law:

``c1``
    Graphical construction 1.  Candidate points (t, u, i, j) arrive at rate
    n * U_cap with U_cap >= r(m); a point moves a particle from i to j iff
    i != j and u <= r(X_i(t-)).
``c2``
    Graphical construction 2.  Points (t, u, j) arrive at rate U_cap per
    destination with U_cap >= kappa; the source is the site whose slice of
    [0, (1/n) sum_k r(x_k)] contains u.
``gillespie``
    The exact jump chain (holding times and categorical jumps); also supports
    a doubly stochastic jump matrix.

Single recorded paths come back as :class:`Trajectory`.  Batches (final
states, gain and loss counters) go through :func:`sample_endpoints`, which
splits the paths into blocks with independent random streams (see
:mod:`zrp.rng`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import binomtest

from . import _numpy_batch, kernels
from ._accel import check_backend
from .bounds import poisson_tail_bound
from .errors import ConfigError, SaturationError
from .model import EXPONENT_CAP, Geometry, ModelSpec, as_config_array
from .rates import big_R
from .rng import check_seed, make_rng, run_blocks
from .states import StateIndex

ENGINES = ("c1", "c2", "gillespie")
_ALIASES = {
    "c1": "c1", "construction1": "c1",
    "c2": "c2", "construction2": "c2",
    "gillespie": "gillespie", "ssa": "gillespie",
}


def engine_key(engine: str) -> str:
    key = _ALIASES.get(str(engine).lower())
    if key is None:
        raise ConfigError(f"unknown engine {engine!r}; expected one of {ENGINES}", ["engine"])
    return key


def _start_and_horizon(spec: ModelSpec, x, t_end) -> tuple[np.ndarray, float]:
    x = as_config_array(x, spec.n, spec.m)
    t_end = float(t_end)
    if not (t_end >= 0 and math.isfinite(t_end)):
        raise ConfigError(f"t_end must be finite and non-negative, got {t_end}", ["t_end"])
    return x, t_end


def construction1_cap(spec: ModelSpec, u_cap: float | None = None) -> float:
    need = float(spec.rates()[-1])
    if u_cap is None:
        return need
    if u_cap < need:
        raise ConfigError(f"construction 1 needs U_cap >= r(m) = {need}, got {u_cap}", ["u_cap"])
    return float(u_cap)


def construction2_cap(spec: ModelSpec, u_cap: float | None = None) -> float:
    if u_cap is None:
        return float(spec.kappa)
    if u_cap < spec.kappa:
        raise ConfigError(f"construction 2 needs U_cap >= kappa = {spec.kappa}, got {u_cap}", ["u_cap"])
    return float(u_cap)


def jump_tables(spec: ModelSpec, geometry: Geometry | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(1 - P(i,i), cumulative off-diagonal rows of P) for the exact engine."""
    geometry = geometry or Geometry.mean_field()
    P = geometry.transition_matrix(spec.n).copy()
    weight = 1.0 - np.diag(P)
    np.fill_diagonal(P, 0.0)
    return weight, np.cumsum(P, axis=1)


def _require_mean_field(geometry, engine):
    if geometry is not None and not geometry.is_mean_field:
        raise ConfigError(f"engine {engine} realises the mean-field dynamics only; use gillespie",
                          ["engine", "geometry"])


# --- trajectories -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    """A recorded path: every candidate point with its marks and outcome.

    ``sources`` is -1 for construction-2 points that fall above the total
    rate.  ``levels`` holds the vertical coordinate u (NaN for gillespie).
    """

    start: np.ndarray
    engine: str
    seed: int
    t_end: float
    u_cap: float
    times: np.ndarray
    sources: np.ndarray
    destinations: np.ndarray
    levels: np.ndarray
    applied: np.ndarray
    final: np.ndarray
    rates: np.ndarray = field(repr=False)
    _path: tuple = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.start.size

    @property
    def n_events(self) -> int:
        return self.times.size

    def events(self) -> np.ndarray:
        """Structured array with fields t, i, j, u, applied."""
        rec = np.empty(self.n_events, dtype=[("t", "f8"), ("i", "i8"), ("j", "i8"), ("u", "f8"), ("applied", "?")])
        rec["t"], rec["i"], rec["j"] = self.times, self.sources, self.destinations
        rec["u"], rec["applied"] = self.levels, self.applied
        return rec

    def path(self) -> tuple[np.ndarray, np.ndarray]:
        """(jump times with a leading 0, states) over applied events only."""
        if self._path is None:
            a = self.applied
            src, dst = self.sources[a], self.destinations[a]
            steps = np.zeros((src.size + 1, self.n), dtype=np.int64)
            rows = np.arange(1, src.size + 1)
            steps[rows, src] -= 1
            steps[rows, dst] += 1
            steps[0] = self.start
            states = np.cumsum(steps, axis=0)
            times = np.concatenate([[0.0], self.times[a]])
            object.__setattr__(self, "_path", (times, states))
        return self._path

    def state_at(self, t: float) -> np.ndarray:
        times, states = self.path()
        return states[np.searchsorted(times, t, side="right") - 1].copy()

    def _counter(self, column, t):
        t = self.t_end if t is None else t
        mask = self.applied & (self.times <= t)
        return np.bincount(column[mask], minlength=self.n).astype(np.int64)

    def gains(self, t: float | None = None) -> np.ndarray:
        """G_i(t): arrivals at each site by time t (default t_end)."""
        return self._counter(self.destinations, t)

    def losses(self, t: float | None = None) -> np.ndarray:
        return self._counter(self.sources, t)

    def check_invariants(self) -> None:
        """Raise AssertionError if the recorded path breaks conservation,
        the gain/loss identity or the applied-flag rule."""
        times, states = self.path()
        assert np.all(np.diff(self.times) >= 0), "event times not ordered"
        assert np.all(states.sum(axis=1) == self.start.sum()), "particle count not conserved"
        assert np.all(states >= 0), "negative occupancy"
        for t in (0.0, *times[1:], self.t_end):
            assert np.array_equal(self.state_at(t), self.start + self.gains(t) - self.losses(t))
        assert np.array_equal(states[-1], self.final)
        if self.engine == "gillespie":
            assert self.applied.all()
        else:
            self_loop = self.sources == self.destinations
            assert not np.any(self.applied & self_loop), "self-loop marked applied"
            if self.engine == "c1":
                # rejected points are exactly the self-loops and the thinned ones
                times, states = self.path()
                before = states[np.searchsorted(times, self.times, side="left") - 1, self.sources]
                thinned = self.levels > self.rates[before]
                assert np.array_equal(~self.applied, self_loop | thinned)

    def to_csv(self, path) -> None:
        from .io import write_trajectory_csv

        write_trajectory_csv(self, path)


def _trajectory(start, engine, seed, t_end, u_cap, out, rates) -> Trajectory:
    if engine == "gillespie":
        final, times, src, dst = out
        levels = np.full(times.size, np.nan)
        applied = np.ones(times.size, dtype=bool)
    else:
        final, times, src, dst, levels, applied = out
    return Trajectory(start.copy(), engine, seed, t_end, u_cap, times, src, dst, levels, applied, final, rates)


def simulate_construction1(spec: ModelSpec, x, t_end: float, seed: int, *, u_cap: float | None = None) -> Trajectory:
    x, t_end = _start_and_horizon(spec, x, t_end)
    cap = construction1_cap(spec, u_cap)
    seed = check_seed(seed)
    r = np.ascontiguousarray(spec.rates())
    out = kernels.c1_record(x, r, cap, t_end, make_rng(seed))
    return _trajectory(x, "c1", seed, t_end, cap, out, r)


def simulate_construction2(spec: ModelSpec, x, t_end: float, seed: int, *, u_cap: float | None = None) -> Trajectory:
    x, t_end = _start_and_horizon(spec, x, t_end)
    cap = construction2_cap(spec, u_cap)
    seed = check_seed(seed)
    r = np.ascontiguousarray(spec.rates())
    out = kernels.c2_record(x, r, cap, t_end, make_rng(seed))
    return _trajectory(x, "c2", seed, t_end, cap, out, r)


def simulate_gillespie(spec: ModelSpec, x, t_end: float, seed: int, geometry: Geometry | None = None) -> Trajectory:
    x, t_end = _start_and_horizon(spec, x, t_end)
    seed = check_seed(seed)
    r = np.ascontiguousarray(spec.rates())
    weight, cumP = jump_tables(spec, geometry)
    out = kernels.gillespie_record(x, r, weight, cumP, t_end, make_rng(seed))
    return _trajectory(x, "gillespie", seed, t_end, math.nan, out, r)


def simulate(spec: ModelSpec, x, t_end: float, seed: int, engine: str = "c1",
             geometry: Geometry | None = None) -> Trajectory:
    engine = engine_key(engine)
    if engine == "gillespie":
        return simulate_gillespie(spec, x, t_end, seed, geometry)
    _require_mean_field(geometry, engine)
    if engine == "c1":
        return simulate_construction1(spec, x, t_end, seed)
    return simulate_construction2(spec, x, t_end, seed)


# --- batches ----------------------------------------------------------------

@dataclass(frozen=True)
class EndpointSample:
    final: np.ndarray
    gains: np.ndarray
    losses: np.ndarray
    engine: str
    backend: str
    seed: int
    t_end: float

    @property
    def n_paths(self) -> int:
        return self.final.shape[0]


def sample_endpoints(spec: ModelSpec, x, t_end: float, n_paths: int, seed: int, engine: str = "c1",
                     geometry: Geometry | None = None, backend: str | None = None,
                     workers: int | None = None) -> EndpointSample:
    """X(t_end), G(t_end), L(t_end) for ``n_paths`` independent paths."""
    x, t_end = _start_and_horizon(spec, x, t_end)
    engine = engine_key(engine)
    backend = check_backend(backend)
    seed = check_seed(seed)
    if n_paths < 1:
        raise ConfigError("n_paths must be positive", ["paths"])
    r = np.ascontiguousarray(spec.rates())
    impl = kernels if backend == "numba" else _numpy_batch
    if engine == "gillespie":
        weight, cumP = jump_tables(spec, geometry)

        def block(rng, size):
            return impl.gillespie_batch(x, r, weight, cumP, t_end, size, rng)
    else:
        _require_mean_field(geometry, engine)
        cap = construction1_cap(spec) if engine == "c1" else construction2_cap(spec)
        fn = impl.c1_batch if engine == "c1" else impl.c2_batch

        def block(rng, size):
            return fn(x, r, cap, t_end, size, rng)

    parts = run_blocks(block, seed, n_paths, stream_tag=ENGINES.index(engine), workers=workers)
    final, gains, losses = (np.concatenate([p[k] for p in parts]) for k in range(3))
    return EndpointSample(final, gains, losses, engine, backend, seed, t_end)


def empirical_law(final: np.ndarray, index: StateIndex) -> np.ndarray:
    """Empirical distribution of the rows of ``final`` over the ranked state space."""
    counts = np.bincount(index.rank_many(final), minlength=index.size)
    return counts / final.shape[0]


def tv_threshold(n_states: int, n_paths: int, factor: float = 2.5) -> float:
    """Statistical tolerance factor * sqrt(|Omega| / N) for empirical TV distances."""
    return factor * math.sqrt(n_states / n_paths)


# --- emptying of a site -----------------------------------------------------

@dataclass(frozen=True)
class PathwiseReport:
    """Stopping times T_0..T_{h-1} of one path and the pathwise assertions."""

    site: int
    h: int
    T: np.ndarray
    stages_reached: int
    loss_violations: int
    height_violations: int
    empty_time: float

    @property
    def ok(self) -> bool:
        return self.loss_violations == 0 and self.height_violations == 0


def emptying_time_check(traj: Trajectory, i: int, h: int) -> PathwiseReport:
    """Rebuild T_k = U_h + ... + U_{h-k} from the recorded construction-1 points.

    Stage k closes at the first point with source i, destination elsewhere
    and level at most r(h - k).  Checked pathwise: L_i(T_k) >= k + 1, and
    X_i(t) >= h - k for t < T_k.
    """
    if traj.engine != "c1":
        raise ConfigError("emptying check needs a construction-1 trajectory with all points kept", ["engine"])
    if not 0 <= i < traj.n:
        raise ConfigError(f"site {i} out of range", ["site"])
    if h < 0 or traj.start[i] < h:
        raise ConfigError(f"need 0 <= h <= x_i = {traj.start[i]}, got h={h}", ["h"])
    T, stages, bad_loss, bad_height, empty_at = kernels.emptying_scan(
        traj.start, traj.times, traj.sources, traj.destinations, traj.levels, traj.applied,
        traj.rates, int(i), int(h))
    return PathwiseReport(int(i), int(h), T, int(stages), int(bad_loss), int(bad_height), float(empty_at))


@dataclass(frozen=True)
class EmptyingSummary:
    site: int
    h: int
    n_paths: int
    T: np.ndarray
    empty_time: np.ndarray
    loss_violations: int
    height_violations: int
    censor_cap: float

    @property
    def ok(self) -> bool:
        return self.loss_violations == 0 and self.height_violations == 0

    @property
    def censored(self) -> int:
        return int(np.sum(~np.isfinite(self.empty_time)))

    @property
    def stage_times(self) -> np.ndarray:
        """U_{h-k} = T_k - T_{k-1} per path (columns k = 0..h-1)."""
        return np.diff(self.T, axis=1, prepend=0.0)

    def mean_empty_time(self) -> tuple[float, float]:
        v = self.empty_time[np.isfinite(self.empty_time)]
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.inf


def hitting_censor_cap(spec: ModelSpec) -> float:
    return 50.0 * big_R(spec.rate, spec.m) + 100.0


def emptying_batch(spec: ModelSpec, x, i: int, h: int, n_paths: int, seed: int,
                   tcap: float | None = None, workers: int | None = None) -> EmptyingSummary:
    """Pathwise emptying check on many construction-1 paths, each run until the
    site has closed all h stages and emptied (or ``tcap``)."""
    x = as_config_array(x, spec.n, spec.m)
    if not 0 <= i < spec.n:
        raise ConfigError(f"site {i} out of range", ["site"])
    if h < 0 or x[i] < h:
        raise ConfigError(f"need 0 <= h <= x_i = {x[i]}, got h={h}", ["h"])
    tcap = hitting_censor_cap(spec) if tcap is None else float(tcap)
    r = np.ascontiguousarray(spec.rates())
    cap = construction1_cap(spec)

    def block(rng, size):
        return kernels.emptying_batch(x, r, cap, int(i), int(h), tcap, size, rng)

    parts = run_blocks(block, check_seed(seed), n_paths, stream_tag=10, workers=workers)
    T = np.concatenate([p[0] for p in parts])
    empty = np.concatenate([p[1] for p in parts])
    return EmptyingSummary(int(i), int(h), n_paths, T, empty,
                           int(sum(p[2] for p in parts)), int(sum(p[3] for p in parts)), tcap)


# --- hitting times and the exponential observable ---------------------------

@dataclass(frozen=True)
class HittingRecord:
    predicate: str
    T: float
    trajectory: Trajectory


def hitting_time(traj: Trajectory, predicate: Callable[[np.ndarray], bool],
                 description: str | None = None) -> HittingRecord:
    """First time (0 included) at which ``predicate(X(t))`` holds; inf if never."""
    times, states = traj.path()
    T = math.inf
    for t, s in zip(times, states):
        if predicate(s):
            T = float(t)
            break
    return HittingRecord(description or getattr(predicate, "__name__", "predicate"), T, traj)


def phi_table(theta: float, m: int) -> np.ndarray:
    """exp(theta k) for k = 0..m+1, refusing exponents past the cap."""
    if theta <= 0:
        raise ConfigError("theta must be positive", ["theta"])
    if theta * (m + 1) > EXPONENT_CAP:
        raise SaturationError(f"theta * (m + 1) = {theta * (m + 1):.6g} exceeds the exponent cap {EXPONENT_CAP}")
    return np.exp(theta * np.arange(m + 2, dtype=float))


@dataclass(frozen=True)
class ExpMomentEstimate:
    """Monte Carlo estimate of E_x[exp(beta T)] for T the hitting time of {phi <= L}.

    Censored paths contribute exp(beta * cap), which biases the mean down, so
    ``ci_low`` stays a valid lower confidence bound while ``ci_high`` is inf.
    """

    theta: float
    beta: float
    L: float
    mean: float
    se: float
    ci_low: float
    ci_high: float
    n_paths: int
    censored: int
    censor_cap: float
    bound: float
    start_phi: float

    @property
    def applicable(self) -> bool:
        """The bound exp(theta) phi(x) / L is only claimed for x outside {phi <= L}."""
        return self.start_phi > self.L

    @property
    def ok(self) -> bool:
        return self.mean - 3.0 * self.se <= self.bound


def exp_moment_estimate(spec: ModelSpec, x, theta: float, beta: float, n_paths: int, seed: int,
                        L: float | None = None, geometry: Geometry | None = None,
                        cap: float | None = None, workers: int | None = None) -> ExpMomentEstimate:
    """E_x[e^{beta T}] with a normal 95% interval; L defaults to the drift level L(theta, beta)."""
    from .exact import drift_level

    x = as_config_array(x, spec.n, spec.m)
    if beta < 0:
        raise ConfigError("beta must be non-negative", ["beta"])
    if L is None:
        _, L = drift_level(spec, theta, beta)
        if L is None:
            raise ConfigError("no drift level exists for these (theta, beta)", ["theta", "beta"])
    expo = phi_table(theta, spec.m)
    cap = hitting_censor_cap(spec) if cap is None else float(cap)
    r = np.ascontiguousarray(spec.rates())
    weight, cumP = jump_tables(spec, geometry)

    def block(rng, size):
        return kernels.hitting_batch(x, r, weight, cumP, expo, float(L), cap, size, rng)

    parts = run_blocks(block, check_seed(seed), n_paths, stream_tag=11, workers=workers)
    T = np.concatenate([p[0] for p in parts])
    cens = np.concatenate([p[1] for p in parts])
    vals = np.exp(beta * T)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else math.inf
    phi_x = float(expo[x].mean())
    return ExpMomentEstimate(theta, beta, float(L), mean, se, mean - 1.96 * se,
                             math.inf if cens.any() else mean + 1.96 * se, n_paths, int(cens.sum()),
                             cap, math.exp(theta) * phi_x / L, phi_x)


# --- martingales --------------------------------------------------------------

def _observable_vector(observable, states: np.ndarray) -> np.ndarray:
    if callable(observable):
        return np.array([float(observable(s)) for s in states])
    vec = np.asarray(observable, dtype=float)
    if vec.shape != (states.shape[0],):
        raise ConfigError("observable vector does not match the state space", ["observable"])
    return vec


def generator_action(spec: ModelSpec, x, observable: Callable, geometry: Geometry | None = None) -> tuple[float, float]:
    """(L f(x), Gamma f(x)) with Gamma f(x) = sum_y q(x, y) (f(y) - f(x))^2."""
    x = as_config_array(x, spec.n, spec.m)
    P = (geometry or Geometry.mean_field()).transition_matrix(spec.n)
    r = spec.rates()
    fx = float(observable(x))
    drift = bracket = 0.0
    for i in np.nonzero(x)[0]:
        for j in range(spec.n):
            if j == i or P[i, j] == 0:
                continue
            y = x.copy()
            y[i] -= 1
            y[j] += 1
            d = float(observable(y)) - fx
            q = r[x[i]] * P[i, j]
            drift += q * d
            bracket += q * d * d
    return drift, bracket


@dataclass(frozen=True)
class MartingaleResidual:
    """M(t) = f(X_t) - f(X_0) - int_0^t Lf and <M,M>_t = int_0^t Gamma f,
    both at the jump times (leading 0) and at t_end (last entry)."""

    times: np.ndarray
    M: np.ndarray
    bracket: np.ndarray


def martingale_residuals(traj: Trajectory, spec: ModelSpec, observable: Callable,
                         geometry: Geometry | None = None) -> MartingaleResidual:
    times, states = traj.path()
    f = np.array([float(observable(s)) for s in states])
    if not np.all(np.isfinite(f)):
        raise SaturationError("observable overflowed along the path")
    act = np.array([generator_action(spec, s, observable, geometry) for s in states])
    grid = np.concatenate([times, [traj.t_end]])
    hold = np.diff(grid)
    int_L = np.concatenate([[0.0], np.cumsum(act[:, 0] * hold)])
    int_G = np.concatenate([[0.0], np.cumsum(act[:, 1] * hold)])
    fvals = np.concatenate([f, [f[-1]]])
    return MartingaleResidual(grid, fvals - f[0] - int_L, int_G)


@dataclass(frozen=True)
class MartingaleDiagnostics:
    t_grid: np.ndarray
    mean_M: np.ndarray
    se_M: np.ndarray
    mean_M2: np.ndarray
    mean_bracket: np.ndarray
    se_diff: np.ndarray
    n_paths: int

    @property
    def zero_mean_ok(self) -> bool:
        return bool(np.all(np.abs(self.mean_M) <= 3.0 * self.se_M + 1e-12))

    @property
    def bracket_ok(self) -> bool:
        return bool(np.all(np.abs(self.mean_M2 - self.mean_bracket) <= 3.0 * self.se_diff + 1e-12))


def martingale_diagnostics(model, x, observable, t_grid, n_paths: int, seed: int,
                           workers: int | None = None) -> MartingaleDiagnostics:
    """Zero-mean and bracket checks for M over exact paths of an enumerated model.

    ``observable`` is a function of a state or a vector over the ranked states.
    The bracket is compared through the paired difference M(t)^2 - <M,M>_t.
    """
    states = model.states
    f = _observable_vector(observable, states)
    if not np.all(np.isfinite(f)):
        raise SaturationError("observable overflows on the state space")
    Q = model.generator
    Lf = Q @ f
    gamma = Q @ (f * f) - 2.0 * f * Lf
    gamma = np.maximum(gamma, 0.0)
    off = Q.tocsr(copy=True)
    off.setdiag(0.0)
    off.eliminate_zeros()
    off.sort_indices()
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    start = model.state_of(x)

    def block(rng, size):
        return kernels.ctmc_batch(off.indptr.astype(np.int64), off.indices.astype(np.int64), off.data,
                                  np.asarray(model.exit_rates, dtype=float), start, t_grid, f, Lf, gamma, size, rng)

    parts = run_blocks(block, check_seed(seed), n_paths, stream_tag=12, workers=workers)
    F, IG, IH = (np.concatenate([p[k] for p in parts]) for k in range(3))
    M = F - f[start] - IG
    D = M * M - IH
    root = math.sqrt(n_paths)
    return MartingaleDiagnostics(t_grid, M.mean(axis=0), M.std(axis=0, ddof=1) / root,
                                 (M * M).mean(axis=0), IH.mean(axis=0), D.std(axis=0, ddof=1) / root, n_paths)


# --- event probabilities ------------------------------------------------------

EVENT_KINDS = ("max_at", "sup_max", "phi_after_hit")


@dataclass(frozen=True)
class Event:
    """One of {||X(t)||_inf >= a}, {sup_{s<=t} ||X(s)||_inf > a},
    {sup_{s in [T, t]} phi^theta(X(s)) > L + 4} with T the hitting time of {phi^theta <= L}."""

    kind: str
    a: float | None = None
    theta: float | None = None
    L: float | None = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ConfigError(f"unknown event kind {self.kind!r}", ["event"])
        if self.kind == "phi_after_hit" and (self.theta is None or self.L is None):
            raise ConfigError("phi event needs theta and L", ["theta", "L"])
        if self.kind != "phi_after_hit" and self.a is None:
            raise ConfigError("sup-norm event needs a", ["a"])

    @classmethod
    def max_at_least(cls, a):
        return cls("max_at", a=a)

    @classmethod
    def sup_exceeds(cls, a):
        return cls("sup_max", a=a)

    @classmethod
    def phi_excursion(cls, theta, L):
        return cls("phi_after_hit", theta=theta, L=L)

    def describe(self) -> str:
        if self.kind == "max_at":
            return f"max_i X_i(t) >= {self.a}"
        if self.kind == "sup_max":
            return f"sup_(s<=t) max_i X_i(s) > {self.a}"
        return f"sup_(s in [T,t]) phi^{self.theta}(X(s)) > {self.L} + 4"


@dataclass(frozen=True)
class EventEstimate:
    event: str
    t: float
    count: int
    n_paths: int
    p: float
    ci_low: float
    ci_high: float


def wilson_interval(count: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(count), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def event_probability(spec: ModelSpec, x, event: Event, t, n_paths: int, seed: int,
                      geometry: Geometry | None = None, workers: int | None = None):
    """Frequency of ``event`` with a Wilson interval; ``t`` may be a scalar or a grid
    (one shared set of paths is observed at every grid time)."""
    x = as_config_array(x, spec.n, spec.m)
    scalar = np.ndim(t) == 0
    t_grid = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) < 0):
        raise ConfigError("event times must be non-negative and sorted", ["t"])
    if event.kind == "phi_after_hit":
        expo = phi_table(event.theta, spec.m)
        level = float(event.L)
    else:
        expo = np.ones(spec.m + 2)
        level = -1.0
    r = np.ascontiguousarray(spec.rates())
    weight, cumP = jump_tables(spec, geometry)

    def block(rng, size):
        return kernels.event_batch(x, r, weight, cumP, expo, level, t_grid, size, rng)

    parts = run_blocks(block, check_seed(seed), n_paths, stream_tag=13, workers=workers)
    fmax, smax, psup = (np.concatenate([p[k] for p in parts]) for k in range(3))
    if event.kind == "max_at":
        hits = fmax >= event.a
    elif event.kind == "sup_max":
        hits = smax > event.a
    else:
        hits = psup > event.L + 4.0
    out = []
    for g, tg in enumerate(t_grid):
        k = int(hits[:, g].sum())
        lo, hi = wilson_interval(k, n_paths)
        out.append(EventEstimate(event.describe(), float(tg), k, n_paths, k / n_paths, lo, hi))
    return out[0] if scalar else out


# --- Poisson domination of arrivals -------------------------------------------

@dataclass(frozen=True)
class DominationCheck:
    t: float
    B: float
    kappa: float
    frequencies: np.ndarray
    bound: float
    slack: float

    @property
    def threshold(self) -> float:
        return self.B * self.kappa * self.t

    @property
    def ok(self) -> bool:
        return bool(np.all(self.frequencies <= self.slack * self.bound))


def gain_domination(spec: ModelSpec, x, t: float, B: float, n_paths: int, seed: int,
                    engine: str = "c2", slack: float = 2.0, backend: str | None = None) -> DominationCheck:
    """Per-site frequency of G_j(t) >= B kappa t against the Poisson(kappa t) tail bound."""
    sample = sample_endpoints(spec, x, t, n_paths, seed, engine=engine, backend=backend)
    mean = spec.kappa * t
    freq = (sample.gains >= B * mean).mean(axis=0)
    return DominationCheck(float(t), float(B), spec.kappa, freq, poisson_tail_bound(mean, B), slack)
