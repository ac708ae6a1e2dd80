"""Named desk-scale experiments and their configuration.

A configuration is a JSON document with ``"schema": "zrp-experiment/1"``.
Fields shared by all experiments are attributes of
:class:`ExperimentConfig`; experiment-specific knobs live in ``params``.
Each experiment returns a :class:`ReportBundle` (CSV tables plus a summary)
that :func:`run_experiment` writes together with a manifest.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigError
from .model import Geometry, ModelSpec, as_config_array, cycle_shift_matrix, extreme_state
from .rates import RateFunction, big_R
from .rng import MAX_SEED

SCHEMA = "zrp-experiment/1"
EXPERIMENTS = ("mix-curve", "cutoff-scan", "gap-table", "coalescence", "path-bound",
               "dissolution", "emptying", "sandwich", "torus")
MAX_PATHS = 10**8
MAX_SITES = 10_000

# documented headers, one entry per emitted table
HEADERS = {
    "mix_curve.csv": ("t", "tv"),
    "cutoff_scan.csv": ("m", "R_m", "t_mix", "ratio", "window", "window_ratio"),
    "gap_table.csv": ("p", "d", "closed_form", "numeric", "abs_err"),
    "gap_table_zrp.csv": ("n", "m", "states", "gap"),
    "coalescence.csv": ("bin_lo", "bin_hi", "count"),
    "coalescence_survival.csv": ("t", "p_tau_gt_t", "se"),
    "path_bound.csv": ("t", "bound", "exact_tv", "dominates"),
    "dissolution.csv": ("t", "a", "count", "paths", "p", "ci_low", "ci_high"),
    "emptying.csv": ("k", "level", "mean_stage", "se_stage", "expected_stage"),
    "sandwich.csv": ("geometry", "n", "m", "lower", "middle", "upper", "ok"),
    "torus.csv": ("p", "d", "sites", "m", "gap_P", "gap_zrp", "ratio"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    rate: RateFunction = field(default_factory=lambda: RateFunction.power(0.5))
    n: int = 3
    m: int | None = None
    m_grid: tuple = ()
    rho: float | None = None
    engine: str = "c1"
    paths: int = 10_000
    t_grid: tuple = ()
    epsilon: float = 0.25
    seed: int = 0
    out: str = "out"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "m_grid", tuple(int(v) for v in self.m_grid))
        object.__setattr__(self, "t_grid", tuple(float(v) for v in self.t_grid))
        object.__setattr__(self, "params", dict(self.params))
        self.validate()

    def validate(self) -> None:
        """Raise one ConfigError naming every offending field."""
        bad, why = [], []

        def fail(name, msg):
            bad.append(name)
            why.append(msg)

        if self.experiment not in EXPERIMENTS:
            fail("experiment", f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if not isinstance(self.n, int) or not 2 <= self.n <= MAX_SITES:
            fail("n", f"n must be an integer in [2, {MAX_SITES}]")
        if self.m is not None and (not isinstance(self.m, int) or self.m < 1):
            fail("m", "m must be a positive integer")
        if any(v < 1 for v in self.m_grid):
            fail("m_grid", "m_grid entries must be positive")
        if self.rho is not None and not self.rho > 0:
            fail("rho", "rho must be positive")
        if self.engine not in ("c1", "c2", "gillespie"):
            fail("engine", "engine must be c1, c2 or gillespie")
        if not isinstance(self.paths, int) or not 1 <= self.paths <= MAX_PATHS:
            fail("paths", f"paths must be an integer in [1, {MAX_PATHS}]")
        if any(not (t >= 0 and math.isfinite(t)) for t in self.t_grid) or list(self.t_grid) != sorted(self.t_grid):
            fail("t_grid", "t_grid must be finite, non-negative and sorted")
        if not 0 < self.epsilon < 1:
            fail("epsilon", "epsilon must lie in (0, 1)")
        if not isinstance(self.seed, int) or not 0 <= self.seed <= MAX_SEED:
            fail("seed", "seed must be an unsigned 64-bit integer")
        if bad:
            raise ConfigError("; ".join(why), bad)

    # serialisation -----------------------------------------------------------

    def to_dict(self) -> dict:
        d = {"schema": SCHEMA}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "rate":
                v = v.to_dict()
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict) or not data:
            raise ConfigError("empty configuration", ["experiment"])
        data = dict(data)
        schema = data.pop("schema", SCHEMA)
        if schema != SCHEMA:
            raise ConfigError(f"unsupported schema {schema!r}; expected {SCHEMA!r}", ["schema"])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration fields {unknown}", unknown)
        if "experiment" not in data:
            raise ConfigError("configuration names no experiment", ["experiment"])
        if "rate" in data:
            data["rate"] = data["rate"] if isinstance(data["rate"], RateFunction) else RateFunction.from_dict(data["rate"])
        return cls(**data)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"configuration is not valid JSON: {exc}", ["config"]) from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc.strerror}", ["config"]) from exc
        return cls.loads(text)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # helpers ------------------------------------------------------------------

    def spec(self, m: int | None = None) -> ModelSpec:
        m = self.m if m is None else m
        if m is None:
            raise ConfigError(f"experiment {self.experiment} needs m", ["m"])
        return ModelSpec(self.rate, self.n, m, rho=self.rho)

    def start(self, spec: ModelSpec, key: str = "x") -> np.ndarray:
        x = self.params.get(key)
        if x is None:
            return extreme_state(spec.n, spec.m)
        return as_config_array(x, spec.n, spec.m)


_SQRT = {"form": "power", "alpha": 0.5}
_LINEAR = {"form": "power", "alpha": 1.0}
DEFAULTS = {
    "mix-curve": {"rate": _SQRT, "n": 3, "m": 12},
    "cutoff-scan": {"rate": _SQRT, "n": 4, "m_grid": [8, 16, 24, 32]},
    "gap-table": {"params": {"geometry": "torus", "p": [3, 4, 5], "d": 1}},
    "coalescence": {"rate": _LINEAR, "n": 3, "m": 2, "params": {"i": 0, "j": 1, "gamma": 0.5}},
    "path-bound": {"rate": _LINEAR, "n": 3, "m": 4, "t_grid": [0.5, 1.0], "paths": 20_000,
                   "params": {"x": [4, 0, 0], "y": [0, 4, 0]}},
    "dissolution": {"rate": _SQRT, "n": 4, "m": 12, "params": {"a": 6}},
    "emptying": {"rate": _SQRT, "n": 3, "m": 6, "params": {"h": 6}},
    "sandwich": {"rate": _SQRT, "n": 4, "m_grid": [2, 4]},
    "torus": {"rate": _SQRT, "m": 2, "params": {"p": [3, 4, 5], "d": 1}},
}


def default_config(experiment: str) -> ExperimentConfig:
    """The documented default instance of an experiment."""
    if experiment not in DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}", ["experiment"])
    return ExperimentConfig.from_dict({"experiment": experiment, **DEFAULTS[experiment]})


@dataclass
class ReportBundle:
    experiment: str
    tables: dict  # file name -> (header, rows)
    summary: dict
    files: dict = field(default_factory=dict)
    manifest: dict | None = None


# --- experiments ------------------------------------------------------------------

def _mix_curve(cfg: ExperimentConfig) -> ReportBundle:
    from .exact import ExactModel, mixing_curve

    spec = cfg.spec()
    model = ExactModel(spec)
    x = cfg.start(spec)
    times = np.asarray(cfg.t_grid) if cfg.t_grid else None
    curve = mixing_curve(model, x, times, cfg.epsilon, num=int(cfg.params.get("num", 200)))
    rows = list(zip(curve.times.tolist(), curve.tv_values.tolist()))
    R = big_R(spec.rate, spec.m)
    return ReportBundle("mix-curve", {"mix_curve.csv": (HEADERS["mix_curve.csv"], rows)},
                        {"n": spec.n, "m": spec.m, "start": x.tolist(), "epsilon": cfg.epsilon,
                         "t_mix": curve.t_mix, "R_m": R, "ratio": curve.t_mix / R, "states": model.size})


@dataclass(frozen=True)
class CutoffScan:
    rows: tuple  # (m, R, t_mix, ratio, window, window_ratio)
    band: tuple

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r[3] for r in self.rows])

    @property
    def window_ratios(self) -> np.ndarray:
        return np.array([r[5] for r in self.rows])

    @property
    def band_ok(self) -> bool:
        lo, hi = self.band
        return bool(np.all((self.ratios >= lo) & (self.ratios <= hi)))

    @property
    def ratio_variation(self) -> float:
        return float(np.abs(np.diff(self.ratios)).sum())

    @property
    def trend_ok(self) -> bool:
        """Total variation of the ratios below twice the first ratio's distance to 1."""
        return self.ratio_variation < 2.0 * abs(self.ratios[0] - 1.0)

    @property
    def window_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.window_ratios) < 0))


def cutoff_scan(rate: RateFunction, n: int, m_grid, epsilon: float = 0.25, band=(0.5, 2.5),
                high: float = 0.9, low: float = 0.1) -> CutoffScan:
    """t_mix((m, 0, ..., 0); epsilon) / R(m) and the 0.9-to-0.1 window over an m grid."""
    from .exact import ExactModel, cutoff_window, mixing_time_exact

    rows = []
    for m in m_grid:
        model = ExactModel(ModelSpec(rate, n, int(m)))
        x = extreme_state(n, int(m))
        R = big_R(rate, int(m))
        t = mixing_time_exact(model, x, epsilon)
        w = cutoff_window(model, x, high, low)
        rows.append((int(m), R, t, t / R, w, w / R))
    return CutoffScan(tuple(rows), tuple(band))


def _cutoff_scan(cfg: ExperimentConfig) -> ReportBundle:
    grid = cfg.m_grid or (8, 16, 24, 32)
    scan = cutoff_scan(cfg.rate, cfg.n, grid, cfg.epsilon)
    return ReportBundle("cutoff-scan", {"cutoff_scan.csv": (HEADERS["cutoff_scan.csv"], list(scan.rows))},
                        {"n": cfg.n, "m_grid": list(grid), "epsilon": cfg.epsilon, "band": list(scan.band),
                         "band_ok": scan.band_ok, "ratio_variation": scan.ratio_variation,
                         "trend_ok": scan.trend_ok, "window_ratio_decreasing": scan.window_decreasing})


def _gap_table(cfg: ExperimentConfig) -> ReportBundle:
    from .exact import ExactModel, spectral_gap_exact, torus_gap_closed_form, torus_gap_numeric

    if cfg.params.get("geometry", "torus") == "torus":
        d = int(cfg.params.get("d", 1))
        rows = []
        for p in cfg.params.get("p", [3, 4, 5]):
            c, v = torus_gap_closed_form(int(p), d), torus_gap_numeric(int(p), d)
            rows.append((int(p), d, c, v, abs(c - v)))
        return ReportBundle("gap-table", {"gap_table.csv": (HEADERS["gap_table.csv"], rows)},
                            {"geometry": "torus", "max_abs_err": max(r[4] for r in rows)})
    grid = cfg.m_grid or ((cfg.m,) if cfg.m else (1, 2, 3, 4))
    rows = []
    for m in grid:
        model = ExactModel(cfg.spec(m))
        rows.append((cfg.n, int(m), model.size, spectral_gap_exact(model)))
    return ReportBundle("gap-table", {"gap_table_zrp.csv": (HEADERS["gap_table_zrp.csv"], rows)},
                        {"geometry": "mean-field", "gaps": [r[3] for r in rows]})


def _coalescence(cfg: ExperimentConfig) -> ReportBundle:
    from .coupling import coalescence_statistics

    spec = cfg.spec()
    x = cfg.start(spec)
    i, j = int(cfg.params.get("i", 0)), int(cfg.params.get("j", 1))
    gamma = float(cfg.params.get("gamma", 0.5))
    stats = coalescence_statistics(spec, x, i, j, cfg.paths, gamma, cfg.seed)
    finite = stats.tau[np.isfinite(stats.tau)]
    bins = int(cfg.params.get("bins", 40))
    counts, edges = np.histogram(finite, bins=bins, range=(0.0, stats.censor_cap))
    hist = [(edges[k], edges[k + 1], int(counts[k])) for k in range(bins)]
    grid = cfg.t_grid or (0.25, 0.5, 1.0, 2.0)
    surv = [(t, *stats.survival(t)) for t in grid]
    return ReportBundle("coalescence", {
        "coalescence.csv": (HEADERS["coalescence.csv"], hist),
        "coalescence_survival.csv": (HEADERS["coalescence_survival.csv"], surv),
    }, {"start": x.tolist(), "i": i, "j": j, "gamma": gamma, "paths": cfg.paths, "censored": stats.censored,
        "censor_cap": stats.censor_cap, "exp_moment": stats.exp_moment, "exp_moment_se": stats.exp_moment_se,
        "median_tau": stats.median()})


def _path_bound(cfg: ExperimentConfig) -> ReportBundle:
    from .coupling import path_coupling_tv_bound
    from .exact import ExactModel

    spec = cfg.spec()
    x = cfg.start(spec, "x")
    y = cfg.start(spec, "y") if "y" in cfg.params else np.roll(x, 1)
    model = ExactModel(spec) if cfg.params.get("exact", True) else None
    rows, path = [], None
    for t in cfg.t_grid or (0.5, 1.0):
        res = path_coupling_tv_bound(spec, x, y, t, cfg.paths, cfg.seed, exact_model=model)
        path = res.path
        rows.append((t, res.bound, math.nan if res.exact_tv is None else res.exact_tv,
                     bool(res.ok) if res.ok is not None else False))
    return ReportBundle("path-bound", {"path_bound.csv": (HEADERS["path_bound.csv"], rows)},
                        {"x": x.tolist(), "y": y.tolist(), "path": [list(p) for p in path],
                         "path_length": len(path) - 1, "all_dominate": all(r[3] for r in rows)})


def _dissolution(cfg: ExperimentConfig) -> ReportBundle:
    from .sim import sample_endpoints, wilson_interval

    spec = cfg.spec()
    x = cfg.start(spec)
    a = int(cfg.params.get("a", max(1, spec.m // 2)))
    R = big_R(spec.rate, spec.m)
    grid = cfg.t_grid or (R / 2, R, 2 * R)
    rows = []
    # common random numbers across the grid: every time point reuses the seed
    for t in grid:
        s = sample_endpoints(spec, x, t, cfg.paths, cfg.seed, engine=cfg.engine)
        k = int(np.sum(s.final.max(axis=1) >= a))
        lo, hi = wilson_interval(k, cfg.paths)
        rows.append((t, a, k, cfg.paths, k / cfg.paths, lo, hi))
    probs = [r[4] for r in rows]
    return ReportBundle("dissolution", {"dissolution.csv": (HEADERS["dissolution.csv"], rows)},
                        {"start": x.tolist(), "a": a, "engine": cfg.engine, "R_m": R,
                         "non_increasing": bool(np.all(np.diff(probs) <= 0))})


def _emptying(cfg: ExperimentConfig) -> ReportBundle:
    from .sim import emptying_batch

    spec = cfg.spec()
    x = cfg.start(spec)
    site = int(cfg.params.get("site", int(np.argmax(x))))
    h = int(cfg.params.get("h", x[site]))
    res = emptying_batch(spec, x, site, h, cfg.paths, cfg.seed)
    U = res.stage_times
    rows = []
    r = spec.rates()
    for k in range(h):
        col = U[:, k][np.isfinite(U[:, k])]
        se = float(col.std(ddof=1) / math.sqrt(col.size)) if col.size > 1 else math.nan
        rows.append((k, h - k, float(col.mean()) if col.size else math.nan, se,
                     spec.n / ((spec.n - 1) * r[h - k])))
    mean_empty, se_empty = res.mean_empty_time() if res.censored < res.n_paths else (math.nan, math.nan)
    return ReportBundle("emptying", {"emptying.csv": (HEADERS["emptying.csv"], rows)},
                        {"start": x.tolist(), "site": site, "h": h, "paths": cfg.paths,
                         "loss_violations": res.loss_violations, "height_violations": res.height_violations,
                         "censored": res.censored, "mean_empty_time": mean_empty, "se_empty_time": se_empty,
                         "R_m": big_R(spec.rate, spec.m)})


def _sandwich(cfg: ExperimentConfig) -> ReportBundle:
    from .exact import hermon_salez_sandwich, torus_matrix

    n = cfg.n
    geoms = [("cycle-shift", Geometry.from_matrix(cycle_shift_matrix(n), "cycle-shift"))]
    if n >= 3:
        geoms.append((f"torus(p={n},d=1)", torus_matrix(n, 1)))
    rows = []
    for m in cfg.m_grid or ((cfg.m,) if cfg.m else (2, 4)):
        spec = cfg.spec(m)
        for name, g in geoms:
            s = hermon_salez_sandwich(spec, g)
            rows.append((name, n, int(m), s.lower, s.middle, s.upper, s.ok))
    return ReportBundle("sandwich", {"sandwich.csv": (HEADERS["sandwich.csv"], rows)},
                        {"all_ok": all(r[6] for r in rows)})


def _torus(cfg: ExperimentConfig) -> ReportBundle:
    from .exact import ExactModel, matrix_poincare_constant, spectral_gap_exact, torus_matrix

    d = int(cfg.params.get("d", 1))
    m = cfg.m or 2
    rows = []
    for p in cfg.params.get("p", [3, 4, 5]):
        g = torus_matrix(int(p), d)
        sites = int(p) ** d
        spec = ModelSpec(cfg.rate, sites, m)
        gap_P = matrix_poincare_constant(g.matrix)
        gap = spectral_gap_exact(ExactModel(spec, g))
        rows.append((int(p), d, sites, m, gap_P, gap, gap / gap_P))
    return ReportBundle("torus", {"torus.csv": (HEADERS["torus.csv"], rows)},
                        {"d": d, "m": m, "ratios": [r[6] for r in rows]})


RUNNERS = {
    "mix-curve": _mix_curve, "cutoff-scan": _cutoff_scan, "gap-table": _gap_table,
    "coalescence": _coalescence, "path-bound": _path_bound, "dissolution": _dissolution,
    "emptying": _emptying, "sandwich": _sandwich, "torus": _torus,
}


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> ReportBundle:
    """Run, then write the tables, ``summary.json`` and ``manifest.json``."""
    from . import __version__
    from ._accel import default_backend

    out_dir = Path(out if out is not None else cfg.out)
    t0 = time.perf_counter()
    bundle = RUNNERS[cfg.experiment](cfg)
    wall = time.perf_counter() - t0
    files = {}
    for name, (header, rows) in bundle.tables.items():
        files[name] = io.write_csv(out_dir / name, header, rows)
    files["summary.json"] = io.write_json(out_dir / "summary.json", {"experiment": cfg.experiment, **bundle.summary})
    bundle.manifest = io.manifest(cfg.experiment, cfg.dumps(), cfg.seed, __version__, wall, files,
                                  {"backend": default_backend(), "config": cfg.to_dict()})
    files["manifest.json"] = io.write_json(out_dir / "manifest.json", bundle.manifest)
    bundle.files = files
    return bundle
