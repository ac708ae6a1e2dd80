"""Exact finite-state analysis for small (n, m).

Everything here works on the enumerated state space: stationary law,
sparse generators, transient laws by uniformization, total-variation mixing
curves, Poincare constants and numeric checks of the structural inequalities
used for the mean-field zero-range process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.stats import poisson

from .errors import ConfigError, NumericalError, SaturationError
from .model import EXPONENT_CAP, Geometry, ModelSpec, as_config_array
from .rates import RateFunction
from .states import DEFAULT_STATE_CAP, StateIndex

POISSON_TAIL = 1e-13
DENSE_EIG_LIMIT = 2500


def log_weights(spec: ModelSpec, states: np.ndarray) -> np.ndarray:
    """log prod_i prod_{k <= x_i} 1/r(k) for each row of ``states``."""
    r = spec.rates()
    log_fact = np.concatenate([[0.0], np.cumsum(np.log(r[1:]))])
    return -log_fact[states].sum(axis=1)


def stationary_distribution(spec: ModelSpec, geometry: Geometry | None = None, *,
                            cap: int = DEFAULT_STATE_CAP, index: StateIndex | None = None) -> np.ndarray:
    """Product-form law pi(x) proportional to prod_i prod_{k=1..x_i} 1/r(k).

    The same vector serves every doubly stochastic geometry, so ``geometry``
    is accepted only for signature symmetry.
    """
    if geometry is not None:
        geometry.transition_matrix(spec.n)
    index = index or StateIndex(spec.n, spec.m, cap)
    lw = log_weights(spec, index.states())
    w = np.exp(lw - lw.max())
    return w / w.sum()


def build_generator(spec: ModelSpec, geometry: Geometry | None = None, *,
                    cap: int = DEFAULT_STATE_CAP, index: StateIndex | None = None) -> sp.csr_matrix:
    """Sparse generator Q with Q[x, x - e_i + e_j] = r(x_i) P(i, j) for i != j.

    Mean-field uses P(i, j) = 1/n.  Self-moves (i = j) are dropped and the
    diagonal is minus the off-diagonal row sum.
    """
    geometry = geometry or Geometry.mean_field()
    index = index or StateIndex(spec.n, spec.m, cap)
    S = index.states()
    n = spec.n
    P = geometry.transition_matrix(n)
    r = spec.rates()
    rows, cols, vals = [], [], []
    for i in range(n):
        src = np.nonzero(S[:, i] > 0)[0]
        if src.size == 0:
            continue
        base = S[src].copy()
        base[:, i] -= 1
        out_rate = r[S[src, i]]
        for j in range(n):
            if j == i or P[i, j] == 0:
                continue
            tgt = base.copy()
            tgt[:, j] += 1
            rows.append(src)
            cols.append(index.rank_many(tgt))
            vals.append(out_rate * P[i, j])
    N = index.size
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(N, N)).tocsr()
    exit_rates = np.asarray(off.sum(axis=1)).ravel()
    return (off - sp.diags(exit_rates)).tocsr()


class ExactModel:
    """Enumerated chain: index, stationary vector, generator, uniformization rate."""

    def __init__(self, spec: ModelSpec, geometry: Geometry | None = None, cap: int = DEFAULT_STATE_CAP):
        self.spec = spec
        self.geometry = geometry or Geometry.mean_field()
        self.index = StateIndex(spec.n, spec.m, cap)
        self.states = self.index.states()
        self.pi = stationary_distribution(spec, self.geometry, index=self.index)
        self.generator = build_generator(spec, self.geometry, index=self.index)
        self.exit_rates = -self.generator.diagonal()
        self.uniformization_rate = float(self.exit_rates.max())
        self._kernel_t = None
        self._gap = None

    @classmethod
    def mean_field(cls, rate: RateFunction, n: int, m: int, **kw) -> "ExactModel":
        return cls(ModelSpec(rate, n, m, **kw))

    @property
    def size(self) -> int:
        return self.index.size

    def state_of(self, x) -> int:
        return self.index.rank(as_config_array(x, self.spec.n, self.spec.m))

    def point_mass(self, x) -> np.ndarray:
        p = np.zeros(self.size)
        p[self.state_of(x)] = 1.0
        return p

    def uniformized_kernel_t(self) -> sp.csr_matrix:
        """Transpose of I + Q / Lambda, for pushing distributions forward."""
        if self._kernel_t is None:
            lam = self.uniformization_rate
            K = sp.identity(self.size, format="csr") + self.generator / lam
            self._kernel_t = K.T.tocsr()
        return self._kernel_t

    def detailed_balance_error(self) -> float:
        """max |pi(x) Q(x,y) - pi(y) Q(y,x)| over all pairs."""
        F = sp.diags(self.pi) @ self.generator
        diff = (F - F.T).tocoo()
        return float(np.max(np.abs(diff.data), initial=0.0))

    def stationarity_error(self) -> float:
        return float(np.max(np.abs(self.generator.T @ self.pi)))

    def is_reversible(self, tol: float = 1e-12) -> bool:
        return self.detailed_balance_error() <= tol

    def generator_triplets(self):
        coo = self.generator.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def spectral_gap(self) -> float:
        if self._gap is None:
            self._gap = spectral_gap_exact(self)
        return self._gap


# --- transient laws --------------------------------------------------------

def propagate(model: ExactModel, p: np.ndarray, t: float) -> np.ndarray:
    """p exp(tQ) by uniformization; ``p`` is a distribution or a stack of
    distributions as columns."""
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    p = np.asarray(p, dtype=float)
    if t == 0 or model.uniformization_rate == 0:
        return p.copy()
    mu = model.uniformization_rate * t
    kmax = int(poisson.isf(POISSON_TAIL, mu)) + 1
    weights = poisson.pmf(np.arange(kmax + 1), mu)
    KT = model.uniformized_kernel_t()
    v = p.copy()
    acc = weights[0] * v
    for k in range(1, kmax + 1):
        v = KT @ v
        acc += weights[k] * v
    return acc / weights.sum()


def distribution_at(model: ExactModel, x, t: float) -> np.ndarray:
    """Law of X(t) started from x."""
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    return propagate(model, model.point_mass(x), t)


def tv_distance(mu, nu) -> float:
    """Total variation distance (1/2) sum |mu - nu|."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise ValueError(f"dimension mismatch: {mu.shape} vs {nu.shape}")
    for name, v in (("mu", mu), ("nu", nu)):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} sums to {v.sum()!r}, not 1")
    return float(min(1.0, 0.5 * np.abs(mu - nu).sum()))


@dataclass(frozen=True)
class MixingCurve:
    start: tuple
    times: np.ndarray
    tv_values: np.ndarray
    epsilon: float
    t_mix: float


def tv_curve(model: ExactModel, x, times) -> np.ndarray:
    """TV(P_x^t, pi) on an increasing time grid, propagated step by step."""
    times = np.asarray(times, dtype=float)
    if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise ValueError("times must be non-negative and increasing")
    out = np.empty(times.size)
    p = model.point_mass(x)
    prev = 0.0
    for k, t in enumerate(times):
        p = propagate(model, p, t - prev)
        prev = t
        out[k] = 0.5 * np.abs(p - model.pi).sum()
    return out


def tv_crossing_time(model: ExactModel, x, level: float, rtol: float = 1e-3, max_iter: int = 200) -> float:
    """First t with TV(P_x^t, pi) <= level, by doubling then bisection.

    Relies on t -> TV(P_x^t, pi) being non-increasing.  The returned time is
    the upper end of the final bracket, so TV there is <= level.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    pi = model.pi
    p_lo = model.point_mass(x)
    if 0.5 * np.abs(p_lo - pi).sum() <= level:
        return 0.0
    t_lo = 0.0
    t_hi = 1.0 / max(model.uniformization_rate, 1e-300)
    for _ in range(max_iter):
        p_hi = propagate(model, p_lo, t_hi - t_lo)
        if 0.5 * np.abs(p_hi - pi).sum() <= level:
            break
        t_lo, p_lo = t_hi, p_hi
        t_hi *= 2.0
    else:
        raise NumericalError(f"TV did not reach {level} within the doubling cap")
    for _ in range(max_iter):
        if t_hi - t_lo <= rtol * t_hi:
            return t_hi
        mid = 0.5 * (t_lo + t_hi)
        p_mid = propagate(model, p_lo, mid - t_lo)
        if 0.5 * np.abs(p_mid - pi).sum() <= level:
            t_hi = mid
        else:
            t_lo, p_lo = mid, p_mid
    raise NumericalError("bisection for the mixing time did not converge")


def mixing_time_exact(model: ExactModel, x, epsilon: float = 0.25, rtol: float = 1e-3) -> float:
    """t_mix(x; epsilon) to relative tolerance ``rtol``."""
    return tv_crossing_time(model, x, epsilon, rtol)


def worst_case_mixing_time(model: ExactModel, epsilon: float = 0.25, exhaustive_limit: int = 300,
                           rtol: float = 1e-3):
    """max_x t_mix(x; epsilon) and a maximiser.

    All states are scanned when |Omega| <= exhaustive_limit.  Otherwise only
    the states with every particle on one site are tried (one of them for the
    mean-field chain, by exchangeability).  The reduced scan is a heuristic.
    """
    n, m = model.spec.n, model.spec.m
    if model.size <= exhaustive_limit:
        candidates = model.states
    else:
        sites = [0] if model.geometry.is_mean_field else range(n)
        candidates = []
        for s in sites:
            x = np.zeros(n, dtype=np.int64)
            x[s] = m
            candidates.append(x)
    best_t, best_x = -1.0, None
    for x in candidates:
        t = tv_crossing_time(model, x, epsilon, rtol)
        if t > best_t:
            best_t, best_x = t, np.array(x)
    return best_t, best_x


def mixing_curve(model: ExactModel, x, times=None, epsilon: float = 0.25, num: int = 200) -> MixingCurve:
    x = as_config_array(x, model.spec.n, model.spec.m)
    t_mix = mixing_time_exact(model, x, epsilon)
    if times is None:
        times = np.linspace(0.0, 3.0 * max(t_mix, 1.0 / model.uniformization_rate), num)
    times = np.asarray(times, dtype=float)
    return MixingCurve(tuple(x.tolist()), times, tv_curve(model, x, times), epsilon, t_mix)


def cutoff_window(model: ExactModel, x, high: float = 0.9, low: float = 0.1, rtol: float = 1e-4) -> float:
    """t(TV = low) - t(TV = high)."""
    return tv_crossing_time(model, x, low, rtol) - tv_crossing_time(model, x, high, rtol)


def tv_decay_rate(model: ExactModel, t1: float, t2: float) -> float:
    """Slope -(log D(t2) - log D(t1)) / (t2 - t1), D(t) = max_x TV(P_x^t, pi).

    Tends to the Poincare constant as t1 grows for reversible chains.
    """
    eye = np.eye(model.size)
    A = propagate(model, eye, t1)
    B = propagate(model, A, t2 - t1)
    d1 = 0.5 * np.abs(A - model.pi[:, None]).sum(axis=0).max()
    d2 = 0.5 * np.abs(B - model.pi[:, None]).sum(axis=0).max()
    return -(math.log(d2) - math.log(d1)) / (t2 - t1)


# --- Poincare constants ----------------------------------------------------

def symmetrized_generator(model: ExactModel):
    """D^{1/2} (-Q_s) D^{-1/2} where Q_s = (Q + Q*)/2 is the additive
    reversibilisation (Q_s = Q for reversible chains)."""
    s = np.sqrt(model.pi)
    A = sp.diags(s) @ model.generator @ sp.diags(1.0 / s)
    return (-(A + A.T) / 2).tocsr()


def spectral_gap_exact(model: ExactModel) -> float:
    """Smallest non-zero eigenvalue of -Q (through the Dirichlet form when the
    chain is not reversible)."""
    if model.size < 2:
        raise NumericalError("spectral gap needs at least two states")
    S = symmetrized_generator(model)
    if model.size <= DENSE_EIG_LIMIT:
        evals = scipy.linalg.eigvalsh(S.toarray())
    else:
        sigma = -1e-3 * model.uniformization_rate
        try:
            evals = spla.eigsh(S, k=3, sigma=sigma, which="LM", return_eigenvectors=False, tol=1e-12)
        except (spla.ArpackNoConvergence, RuntimeError) as exc:
            raise NumericalError(f"eigensolver failed: {exc}") from exc
    evals = np.sort(np.asarray(evals).real)
    gap = float(evals[1])
    if gap < 1e-12:
        raise NumericalError(f"spectral gap {gap:.3g} below 1e-12: chain looks reducible")
    return gap


def gap_eigenvector(model: ExactModel) -> np.ndarray:
    """Observable attaining the Poincare constant (dense solve; small models)."""
    S = symmetrized_generator(model).toarray()
    evals, evecs = scipy.linalg.eigh(S)
    return evecs[:, 1] / np.sqrt(model.pi)


def dirichlet_form(model: ExactModel, f) -> float:
    """E(f, f) = -<f, Q f>_pi."""
    f = np.asarray(f, dtype=float)
    return float(-np.dot(model.pi * f, model.generator @ f))


def dirichlet_quotient(model: ExactModel, f) -> float:
    f = np.asarray(f, dtype=float)
    mean = np.dot(model.pi, f)
    var = float(np.dot(model.pi, (f - mean) ** 2))
    if var <= 0:
        raise ValueError("observable is constant under pi")
    return dirichlet_form(model, f) / var


def matrix_poincare_constant(P) -> float:
    """lambda_*(P) w.r.t. the uniform law: smallest non-zero eigenvalue of
    I - (P + P^T)/2."""
    P = np.asarray(P, dtype=float)
    evals = np.sort(scipy.linalg.eigvalsh(np.eye(P.shape[0]) - (P + P.T) / 2))
    return float(evals[1])


# --- structural checks -----------------------------------------------------

def single_site_marginal(model: ExactModel, site: int = 0) -> np.ndarray:
    """pi(x_site = k) for k = 0..m."""
    return np.bincount(model.states[:, site], weights=model.pi, minlength=model.spec.m + 1)


@dataclass(frozen=True)
class DecayCheck:
    q: float
    ratios: np.ndarray
    bounds: np.ndarray
    ok: bool


def geometric_decay_check(model: ExactModel, site: int = 0) -> DecayCheck:
    """Check pi(x_1 = k) / pi(x_1 = k - 1) < q / r(k) for k >= 1 with
    q = 2 r(ceil(2 rho))."""
    spec = model.spec
    marg = single_site_marginal(model, site)
    q = 2.0 * spec.rate(math.ceil(2 * spec.rho - 1e-12))
    r = spec.rates()
    ratios = marg[1:] / marg[:-1]
    bounds = q / r[1:]
    return DecayCheck(q, ratios, bounds, bool(np.all(ratios < bounds)))


def drift_generator_action(model: ExactModel, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """(phi^theta, L phi^theta) as vectors over Omega."""
    if theta * model.spec.m > EXPONENT_CAP:
        raise SaturationError(f"theta * m = {theta * model.spec.m:.6g} exceeds the exponent cap")
    phi = np.exp(theta * model.states).mean(axis=1)
    return phi, model.generator @ phi


@dataclass(frozen=True)
class DriftReport:
    theta: float
    beta: float
    c: int | None
    L: float | None
    kappa: float
    ok: bool
    max_excess: float
    max_excess_split: float
    message: str = ""


def drift_level(spec: ModelSpec, theta: float, beta: float, cap: float = EXPONENT_CAP):
    """Smallest integer c with (e^theta - 1) kappa - (1 - e^-theta) r(c)/2 <= -beta.

    Returns (c, L = 2 e^{theta c}) or (None, None) when no c exists on the
    rate's horizon (or before theta * c passes the exponent cap).
    """
    if theta <= 0 or beta <= 0:
        raise ValueError("drift level needs theta > 0 and beta > 0")
    need = ((math.expm1(theta)) * spec.kappa + beta) * 2.0 / (-math.expm1(-theta))
    c_limit = int(min(spec.rate.horizon, math.floor(cap / theta)))
    c = 0
    # closed forms: jump close to the answer before scanning
    if spec.rate.form == "power" and spec.rate.alpha > 0:
        guess = (need / spec.rate.scale) ** (1.0 / spec.rate.alpha)
        c = max(0, min(int(guess) - 2, c_limit))
    while c <= c_limit:
        if spec.rate(c) >= need:
            return c, 2.0 * math.exp(theta * c)
        c += 1
    return None, None


def drift_check(model: ExactModel, theta: float, beta: float, tol: float = 1e-9) -> DriftReport:
    """Find L(theta, beta) = 2 e^{theta c} and verify state by state that
    L phi <= -beta phi + ((e^theta - 1) kappa + beta) L, and the split form
    L phi <= -beta phi 1{phi > L} + (e^theta - 1) kappa phi 1{phi <= L}."""
    spec = model.spec
    if not model.geometry.is_mean_field:
        raise ConfigError("drift check applies to the mean-field generator", ["geometry"])
    c, L = drift_level(spec, theta, beta)
    if c is None:
        return DriftReport(theta, beta, None, None, spec.kappa, False, math.inf, math.inf,
                           "no level c on the rate horizon makes the drift negative enough")
    phi, Lphi = drift_generator_action(model, theta)
    growth = math.expm1(theta) * spec.kappa
    rhs = -beta * phi + (growth + beta) * L
    rhs_split = np.where(phi > L, -beta * phi, growth * phi)
    excess = float(np.max(Lphi - rhs))
    excess_split = float(np.max(Lphi - rhs_split))
    ok = excess <= tol and excess_split <= tol
    return DriftReport(theta, beta, c, L, spec.kappa, ok, excess, excess_split)


@dataclass(frozen=True)
class Sandwich:
    lower: float
    middle: float
    upper: float
    gap_matrix_chain: float
    gap_P: float
    ok: bool


def hermon_salez_sandwich(spec: ModelSpec, P, tol: float = 1e-9) -> Sandwich:
    """lambda_*(L) <= lambda_*(L^P) / lambda_*(P) <= (1 - 1/n) E[r(X_1)] / Var[X_1]."""
    geom = P if isinstance(P, Geometry) else Geometry.from_matrix(P)
    Pm = geom.transition_matrix(spec.n)
    gap_P = matrix_poincare_constant(Pm)
    if gap_P <= 1e-12:
        raise NumericalError("lambda_*(P) vanishes: P is reducible")
    mf = ExactModel(spec)
    mp = ExactModel(spec, geom)
    lower = spectral_gap_exact(mf)
    gap_LP = spectral_gap_exact(mp)
    middle = gap_LP / gap_P
    marg = single_site_marginal(mf)
    k = np.arange(spec.m + 1)
    mean = np.dot(marg, k)
    var = np.dot(marg, (k - mean) ** 2)
    upper = (1 - 1 / spec.n) * np.dot(marg, spec.rates()) / var
    ok = lower <= middle + tol and middle <= upper + tol
    return Sandwich(lower, middle, float(upper), gap_LP, gap_P, bool(ok))


# --- torus -----------------------------------------------------------------

def torus_matrix(p: int, d: int, cap: int = 20_000) -> Geometry:
    """Simple random walk on (Z/pZ)^d, sites in row-major order."""
    if p < 3 or d < 1:
        raise ConfigError(f"torus needs p >= 3 and d >= 1, got p={p}, d={d}", ["p", "d"])
    size = p**d
    if size > cap:
        raise ConfigError(f"torus with p^d = {size} sites exceeds the cap {cap}", ["p", "d"])
    coords = np.array(np.unravel_index(np.arange(size), (p,) * d)).T
    P = np.zeros((size, size))
    for axis in range(d):
        for step in (-1, 1):
            nb = coords.copy()
            nb[:, axis] = (nb[:, axis] + step) % p
            P[np.arange(size), np.ravel_multi_index(nb.T, (p,) * d)] += 1.0 / (2 * d)
    return Geometry.from_matrix(P, f"torus(p={p},d={d})")


def torus_gap_closed_form(p: int, d: int) -> float:
    """(1/d)(1 - cos(2 pi / p))."""
    return (1.0 - math.cos(2.0 * math.pi / p)) / d


def torus_gap_numeric(p: int, d: int) -> float:
    return matrix_poincare_constant(torus_matrix(p, d).matrix)


__all__ = [
    "ExactModel", "MixingCurve", "DecayCheck", "DriftReport", "Sandwich",
    "stationary_distribution", "build_generator", "propagate", "distribution_at",
    "tv_distance", "tv_curve", "tv_crossing_time", "mixing_time_exact",
    "worst_case_mixing_time", "mixing_curve", "cutoff_window", "tv_decay_rate",
    "spectral_gap_exact", "gap_eigenvector", "dirichlet_form", "dirichlet_quotient",
    "matrix_poincare_constant", "single_site_marginal", "geometric_decay_check",
    "drift_level", "drift_check", "hermon_salez_sandwich", "torus_matrix",
    "torus_gap_closed_form", "torus_gap_numeric"
]
