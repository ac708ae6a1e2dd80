"""Exact and Monte Carlo tools for the mean-field Zero-Range process."""

from ._accel import NUMBA_ENABLED, default_backend
from .bounds import (ExpSumSpec, expsum_bounds, expsum_sample, martingale_level_for, martingale_tail_bound,
                     poisson_tail_bound)
from .coupling import (CoupledTrajectory, GoodSet, TagModel, certify_cooccupant_drift, coalescence_statistics,
                       path_coupling_tv_bound, shortest_adjacent_path, simulate_constrained,
                       simulate_tagged_pair, tk_schedule)
from .errors import (ConfigError, HorizonError, InvalidRateError, NumericalError, SaturationError,
                     StateSpaceCapError, ZRPError)
from .exact import (ExactModel, cutoff_window, distribution_at, drift_check, hermon_salez_sandwich,
                    mixing_time_exact, spectral_gap_exact, stationary_distribution, torus_gap_closed_form,
                    torus_gap_numeric, tv_curve, tv_distance)
from .model import Configuration, Geometry, ModelSpec, phi_theta
from .rates import RateFunction, big_R, delta_rate, validate_rate
from .sim import (Event, Trajectory, emptying_time_check, event_probability, exp_moment_estimate,
                  hitting_time, martingale_diagnostics, sample_endpoints, simulate,
                  simulate_construction1, simulate_construction2, simulate_gillespie)
from .states import StateIndex

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED", "default_backend",
    "ExpSumSpec", "expsum_bounds", "expsum_sample", "martingale_level_for", "martingale_tail_bound",
    "poisson_tail_bound",
    "CoupledTrajectory", "GoodSet", "TagModel", "certify_cooccupant_drift", "coalescence_statistics",
    "path_coupling_tv_bound", "shortest_adjacent_path", "simulate_constrained", "simulate_tagged_pair",
    "tk_schedule",
    "ConfigError", "HorizonError", "InvalidRateError", "NumericalError", "SaturationError",
    "StateSpaceCapError", "ZRPError",
    "ExactModel", "cutoff_window", "distribution_at", "drift_check", "hermon_salez_sandwich",
    "mixing_time_exact", "spectral_gap_exact", "stationary_distribution", "torus_gap_closed_form",
    "torus_gap_numeric", "tv_curve", "tv_distance",
    "Configuration", "Geometry", "ModelSpec", "phi_theta",
    "RateFunction", "big_R", "delta_rate", "validate_rate",
    "Event", "Trajectory", "emptying_time_check", "event_probability", "exp_moment_estimate",
    "hitting_time", "martingale_diagnostics", "sample_endpoints", "simulate", "simulate_construction1",
    "simulate_construction2", "simulate_gillespie",
    "StateIndex",
    "__version__",
]
