"""Tagged-particle coupling, its Good-constrained variant and path coupling.

Two extra particles I and J ride on a background path X built with
construction 1.  A shared Poisson stream Theta of points (t, u, k), rate
Delta_max in total, moves a tag sitting on a site with background
occupancy q to site k iff u <= Delta(q) = r(q + 1) - r(q).  Both tags read
the same point, so once they share a site they move together forever.
X + delta_I is then a Zero-Range path started from x + delta_i.

The constrained variant suppresses background moves that would leave
Good = {phi^theta2 <= L2 + 4}; it consumes exactly the same random draws, so
with a shared seed the two versions agree until the first suppression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, HorizonError, ZRPError
from .model import ModelSpec, as_config_array, phi_theta
from .rates import RateFunction, big_R
from .rng import check_seed, make_rng, run_blocks
from .sim import Trajectory, phi_table
from .states import StateIndex


# --- background model for tagged pairs ----------------------------------------

@dataclass(frozen=True, eq=False)
class TagModel:
    """Rates needed to run two tags on a background of m particles (m may be 0)."""

    rate: RateFunction
    n: int
    m: int
    r: np.ndarray
    delta: np.ndarray
    u_cap: float
    delta_cap: float

    @classmethod
    def build(cls, rate: RateFunction, n: int, m: int, u_cap: float | None = None,
              delta_cap: float | None = None) -> "TagModel":
        if n < 2 or m < 0:
            raise ConfigError(f"need n >= 2 and m >= 0, got n={n}, m={m}", ["n", "m"])
        if rate.horizon < m + 1:
            raise HorizonError(f"tagged particles need r up to m + 1 = {m + 1}")
        r = np.ascontiguousarray(rate.array(m + 1))
        delta = np.diff(r)
        if np.any(delta < 0):
            raise ConfigError("tagged particles need a non-decreasing rate", ["rate"])
        # a positive cap keeps the candidate stream alive even with no background particle
        need_u = float(r[max(m, 1)])
        need_d = float(delta.max())
        u_cap = need_u if u_cap is None else float(u_cap)
        delta_cap = need_d if delta_cap is None else float(delta_cap)
        if u_cap < need_u or delta_cap < need_d:
            raise ConfigError("caps must dominate r(m) and max Delta(k), k <= m", ["u_cap", "delta_cap"])
        return cls(rate, int(n), int(m), r, delta, u_cap, delta_cap)

    @classmethod
    def of(cls, spec: ModelSpec, **caps) -> "TagModel":
        return cls.build(spec.rate, spec.n, spec.m, **caps)

    def censor_cap(self) -> float:
        return 20.0 * (big_R(self.rate, self.m) + math.log(self.n) + 1.0)


# --- Good set -------------------------------------------------------------------

@dataclass(frozen=True)
class GoodSet:
    """Good = {x : phi^theta2(x) <= L2 + 4}."""

    theta2: float
    L2: float

    def __post_init__(self):
        if not self.theta2 > 0:
            raise ConfigError("theta2 must be positive", ["theta2"])

    @property
    def level(self) -> float:
        return self.L2 + 4.0

    def contains(self, x) -> bool:
        return phi_theta(x, self.theta2) <= self.level

    __contains__ = contains

    @classmethod
    def from_drift(cls, spec: ModelSpec, theta2: float, beta2: float) -> "GoodSet":
        from .exact import drift_level

        _, L = drift_level(spec, theta2, beta2)
        if L is None:
            raise ConfigError("no drift level exists for these (theta2, beta2)", ["theta2", "beta2"])
        return cls(theta2, L)


# --- recorded coupled paths -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoupledTrajectory:
    """Background path, Theta points and the two tag paths.

    ``base`` records the background points; its ``applied`` flags are false
    for suppressed moves, which are also listed in ``suppressed``.
    ``I_path``/``J_path`` are (times with a leading 0, sites).
    """

    base: Trajectory
    suppressed: np.ndarray
    theta_times: np.ndarray
    theta_sites: np.ndarray
    theta_levels: np.ndarray
    i_moved: np.ndarray
    j_moved: np.ndarray
    I_path: tuple
    J_path: tuple
    tau: float
    first_suppression: float
    model: TagModel
    good: GoodSet | None

    @property
    def t_end(self) -> float:
        return self.base.t_end

    @property
    def coalesced(self) -> bool:
        return math.isfinite(self.tau)

    def tags_at(self, t: float) -> tuple[int, int]:
        out = []
        for times, sites in (self.I_path, self.J_path):
            out.append(int(sites[np.searchsorted(times, t, side="right") - 1]))
        return out[0], out[1]

    def background_at(self, t: float) -> np.ndarray:
        return self.base.state_at(t)

    def augmented_at(self, t: float, which: int = 0) -> np.ndarray:
        """X(t) + delta_I(t) (which=0) or X(t) + delta_J(t) (which=1)."""
        x = self.background_at(t)
        x[self.tags_at(t)[which]] += 1
        return x


def _tag_path(start: int, times: np.ndarray, sites: np.ndarray) -> tuple:
    prev = np.concatenate([[start], sites[:-1]]) if sites.size else sites
    change = sites != prev
    return np.concatenate([[0.0], times[change]]), np.concatenate([[start], sites[change]]).astype(np.int64)


def _check_tags(model: TagModel, x, i, j):
    x = as_config_array(x, model.n, model.m)
    for name, s in (("i", i), ("j", j)):
        if not 0 <= s < model.n:
            raise ConfigError(f"tag site {name}={s} out of range", [name])
    return x


def _constraint(model: TagModel, good: GoodSet | None, x):
    if good is None:
        return np.ones(model.m + 2), math.inf
    if not good.contains(x):
        raise ConfigError("start configuration is not in Good", ["x"])
    return phi_table(good.theta2, model.m), good.level


def _run_recorded(model: TagModel, x, i, j, t_end, seed, good):
    x = _check_tags(model, x, i, j)
    t_end = float(t_end)
    if not (t_end >= 0 and math.isfinite(t_end)):
        raise ConfigError("t_end must be finite and non-negative", ["t_end"])
    seed = check_seed(seed)
    expo, level = _constraint(model, good, x)
    (final, times, kinds, a, b, lev, codes, ipath, jpath, tau, supp) = kernels.coupled_record(
        x, int(i), int(j), model.r, model.delta, model.u_cap, model.delta_cap, expo, level, t_end,
        make_rng(seed))
    xi = kinds == 0
    base = Trajectory(x.copy(), "c1", seed, t_end, model.u_cap, times[xi], a[xi], b[xi], lev[xi],
                      codes[xi] == 1, final, model.r)
    th = ~xi
    return CoupledTrajectory(
        base=base,
        suppressed=codes[xi] == 2,
        theta_times=times[th], theta_sites=a[th], theta_levels=lev[th],
        i_moved=(codes[th] & 1) > 0, j_moved=(codes[th] & 2) > 0,
        I_path=_tag_path(int(i), times, ipath), J_path=_tag_path(int(j), times, jpath),
        tau=float(tau), first_suppression=float(supp), model=model, good=good)


def simulate_tagged_pair(spec: ModelSpec, x, i: int, j: int, t_end: float, seed: int) -> CoupledTrajectory:
    """Joint path of (X, I, J) from (x, i, j); tau = first time I = J (inf if after t_end)."""
    return _run_recorded(TagModel.of(spec), x, i, j, t_end, seed, None)


def simulate_constrained(spec: ModelSpec, good: GoodSet, x, i: int, j: int, t_end: float,
                         seed: int) -> CoupledTrajectory:
    """(X*, I*, J*): background moves leaving ``good`` are suppressed."""
    return _run_recorded(TagModel.of(spec), x, i, j, t_end, seed, good)


# --- T_k schedule -----------------------------------------------------------------

@dataclass(frozen=True)
class TkSchedule:
    times: tuple
    complete: bool


def tk_schedule(traj: CoupledTrajectory, c2: float, kmax: int | None = None) -> TkSchedule:
    """T_1 = c2 (X_I(0) v X_J(0)) + 1, T_k = T_{k-1} + c2 (X_I v X_J)(T_{k-1}) + 1.

    Stops at ``kmax`` (complete) or at the first T_k past the recorded
    horizon (partial).
    """
    if c2 < 0:
        raise ConfigError("c2 must be non-negative", ["c2"])
    out = []
    t = 0.0
    while kmax is None or len(out) < kmax:
        x = traj.background_at(t)
        I, J = traj.tags_at(t)
        t = t + c2 * max(x[I], x[J]) + 1.0
        if t > traj.t_end:
            return TkSchedule(tuple(out), kmax is not None and len(out) >= kmax)
        out.append(t)
    return TkSchedule(tuple(out), True)


# --- batches ------------------------------------------------------------------------

@dataclass(frozen=True)
class TaggedBatch:
    tau: np.ndarray
    first_suppression: np.ndarray
    final: np.ndarray
    tags: np.ndarray
    occ_i: np.ndarray
    occ_j: np.ndarray
    schedule: np.ndarray
    t_grid: np.ndarray
    t_end: float

    @property
    def n_paths(self) -> int:
        return self.tau.size

    def augmented(self, which: int = 0) -> np.ndarray:
        """Final X + delta_tag, meaningful when paths were not stopped at tau."""
        out = self.final.copy()
        out[np.arange(out.shape[0]), self.tags[:, which]] += 1
        return out


def tagged_batch(model: TagModel, x, i: int, j: int, t_end: float, n_paths: int, seed: int,
                 good: GoodSet | None = None, t_grid=(), c2: float = 0.0, kmax: int = 0,
                 stop_at_tau: bool = True, workers: int | None = None, stream_tag: int = 20) -> TaggedBatch:
    x = _check_tags(model, x, i, j)
    expo, level = _constraint(model, good, x)
    t_grid = np.sort(np.asarray(t_grid, dtype=float).ravel())

    def block(rng, size):
        return kernels.coupled_batch(x, int(i), int(j), model.r, model.delta, model.u_cap, model.delta_cap,
                                     expo, level, float(t_end), t_grid, float(c2), int(kmax),
                                     bool(stop_at_tau), size, rng)

    parts = run_blocks(block, check_seed(seed), n_paths, stream_tag=stream_tag, workers=workers)
    cols = [np.concatenate([p[k] for p in parts]) for k in range(7)]
    return TaggedBatch(*cols, t_grid, float(t_end))


# --- coalescence ----------------------------------------------------------------------

@dataclass(frozen=True)
class CoalescenceStats:
    tau: np.ndarray
    censor_cap: float
    gamma: float
    exp_moment: float
    exp_moment_se: float

    @property
    def n_paths(self) -> int:
        return self.tau.size

    @property
    def censored(self) -> int:
        return int(np.sum(~np.isfinite(self.tau)))

    @property
    def exp_moment_lower(self) -> float:
        """95% lower confidence bound; censoring only pushes the true value up."""
        return self.exp_moment - 1.96 * self.exp_moment_se

    def survival(self, t: float) -> tuple[float, float]:
        """(P(tau > t), standard error); valid for t below the censoring cap."""
        p = float(np.mean(self.tau > t))
        return p, math.sqrt(p * (1.0 - p) / self.n_paths)

    def median(self) -> float:
        return float(np.median(self.tau))

    def quantiles(self, qs) -> np.ndarray:
        return np.quantile(self.tau, qs)


def coalescence_statistics(spec: ModelSpec, x, i: int, j: int, n_paths: int, gamma: float, seed: int,
                           cap: float | None = None, model: TagModel | None = None,
                           workers: int | None = None, stream_tag: int = 21) -> CoalescenceStats:
    """Empirical law of tau (censored at 20 (R(m) + log n + 1) by default) and E[e^{gamma tau}].

    Censored paths count as exp(gamma * cap) in the moment, a lower bound.
    Raises if every path is censored.
    """
    model = model or TagModel.of(spec)
    cap = model.censor_cap() if cap is None else float(cap)
    batch = tagged_batch(model, x, i, j, cap, n_paths, seed, workers=workers, stream_tag=stream_tag)
    tau = batch.tau
    if n_paths > 0 and not np.any(np.isfinite(tau)):
        raise ZRPError("every coupled path was censored; no coalescence estimate")
    vals = np.exp(gamma * np.minimum(tau, cap))
    se = float(vals.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else math.inf
    return CoalescenceStats(tau, cap, float(gamma), float(vals.mean()), se)


# --- drift certificate for the co-occupant moment --------------------------------------

@dataclass(frozen=True)
class CooccupantCertificate:
    """L* phi*(x, i) <= -a2 phi*(x, i) + b2 on Good x [n], hence
    E[e^{theta2 (X*_I v X*_J)(t)}] <= K for t >= c2 (x_i v x_j)."""

    theta2: float
    a2: float
    b2: float
    c2: float
    K: float
    pairs_checked: int
    max_slack: float


def constrained_drift(model: TagModel, good: GoodSet, cap: int = 200_000) -> tuple[np.ndarray, np.ndarray]:
    """(phi*, L* phi*) over Good x [n] as arrays of shape (|Good|, n)."""
    states = StateIndex(model.n, model.m, cap).states()
    th = good.theta2
    ex = np.exp(th * states)
    phi = ex.mean(axis=1)
    states = states[phi <= good.level]
    ex = ex[phi <= good.level]
    phi = phi[phi <= good.level]
    n = model.n
    rx = model.r[states]
    # phi after moving one particle k -> l only changes two coordinates
    e_up = np.exp(th * (states + 1))
    e_down = np.exp(th * np.maximum(states - 1, 0))
    L = np.zeros_like(ex)
    for i in range(n):
        gain = np.zeros(states.shape[0])
        loss = np.zeros(states.shape[0])
        for k in range(n):
            if k == i:
                continue
            # arrival k -> i
            phi_in = phi + (e_down[:, k] - ex[:, k] + e_up[:, i] - ex[:, i]) / n
            gain += np.where((states[:, k] > 0) & (phi_in <= good.level), rx[:, k], 0.0)
            # departure i -> k
            phi_out = phi + (e_down[:, i] - ex[:, i] + e_up[:, k] - ex[:, k]) / n
            loss += np.where((states[:, i] > 0) & (phi_out <= good.level), rx[:, i], 0.0)
        tag = model.delta[states[:, i]] * (phi - ex[:, i])
        L[:, i] = (gain * math.expm1(th) - loss * (-math.expm1(-th))) * ex[:, i] / n + tag
    return ex, L


def certify_cooccupant_drift(model: TagModel, good: GoodSet, a2_grid=None) -> CooccupantCertificate:
    """Pick a2 on a grid minimising K = 2 (b2/a2 + 1), with b2 the smallest
    constant making the drift inequality hold at every (x, i) in Good x [n]."""
    phi, L = constrained_drift(model, good)
    if a2_grid is None:
        a2_grid = np.geomspace(1e-3, 10.0, 400)
    best = None
    for a2 in np.asarray(a2_grid, dtype=float):
        b2 = max(0.0, float(np.max(L + a2 * phi)))
        K = 2.0 * (b2 / a2 + 1.0)
        if best is None or K < best[2]:
            best = (a2, b2, K)
    a2, b2, K = best
    slack = float(np.max(L + a2 * phi) - b2)
    return CooccupantCertificate(good.theta2, a2, b2, good.theta2 / a2, K, int(phi.size), slack)


# --- path coupling -----------------------------------------------------------------------

def shortest_adjacent_path(x, y) -> list[np.ndarray]:
    """Greedy path of single-particle moves from x to y: the site with the
    largest excess gives to the site with the largest deficit, lowest index on ties."""
    x = np.asarray(x, dtype=np.int64).copy()
    y = np.asarray(y, dtype=np.int64)
    if x.shape != y.shape or x.sum() != y.sum():
        raise ConfigError("x and y must be configurations of the same system", ["x", "y"])
    path = [x.copy()]
    while True:
        d = x - y
        a = int(np.argmax(d))
        if d[a] == 0:
            return path
        b = int(np.argmin(d))
        x[a] -= 1
        x[b] += 1
        path.append(x.copy())


@dataclass(frozen=True)
class PathCouplingBound:
    bound: float
    path: tuple
    edges: tuple  # (background, tag a, tag b, P(tau > t), SE)
    t: float
    exact_tv: float | None

    @property
    def ok(self) -> bool | None:
        return None if self.exact_tv is None else self.bound >= self.exact_tv


def path_coupling_tv_bound(spec: ModelSpec, x, y, t: float, n_paths: int, seed: int,
                           exact_model=None, workers: int | None = None) -> PathCouplingBound:
    """Sum over the greedy path of P(tau > t) + 3 SE for each adjacent pair.

    The pair (z + delta_a, z + delta_b) is coupled with two tags on the
    background z of m - 1 particles.  ``exact_model`` (an ExactModel for the
    same spec) adds the exact TV for comparison.
    """
    x = as_config_array(x, spec.n, spec.m)
    y = as_config_array(y, spec.n, spec.m)
    path = shortest_adjacent_path(x, y)
    model = TagModel.build(spec.rate, spec.n, spec.m - 1)
    edges = []
    total = 0.0
    for l, (u, v) in enumerate(zip(path[:-1], path[1:])):
        a = int(np.nonzero(u > v)[0][0])
        b = int(np.nonzero(v > u)[0][0])
        z = u.copy()
        z[a] -= 1
        batch = tagged_batch(model, z, a, b, t, n_paths, seed, workers=workers, stream_tag=100 + l)
        p = float(np.mean(batch.tau > t))
        se = math.sqrt(p * (1.0 - p) / n_paths)
        edges.append((tuple(int(v) for v in z), a, b, p, se))
        total += p + 3.0 * se
    exact_tv = None
    if exact_model is not None:
        from .exact import distribution_at, tv_distance

        exact_tv = tv_distance(distribution_at(exact_model, x, t), distribution_at(exact_model, y, t))
    return PathCouplingBound(total, tuple(tuple(int(v) for v in s) for s in path), tuple(edges), float(t), exact_tv)
