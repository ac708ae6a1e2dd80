import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zrp import ExactModel, Geometry, ModelSpec, RateFunction, SaturationError
from zrp.exact import (build_generator, cutoff_window, dirichlet_quotient, distribution_at, drift_check,
                       drift_level, gap_eigenvector, geometric_decay_check, hermon_salez_sandwich,
                       matrix_poincare_constant, mixing_curve, mixing_time_exact, single_site_marginal,
                       spectral_gap_exact, stationary_distribution, torus_gap_closed_form, torus_gap_numeric,
                       torus_matrix, tv_curve, tv_decay_rate, tv_distance, worst_case_mixing_time)
from zrp.model import cycle_shift_matrix

from conftest import CONST, LINEAR, SQRT, mf


def test_stationary_two_sites_linear():
    assert np.allclose(stationary_distribution(mf(LINEAR, 2, 2)), [0.25, 0.5, 0.25], atol=1e-15)


def test_stationary_constant_rate_is_uniform():
    assert np.allclose(stationary_distribution(mf(CONST, 3, 2)), np.full(6, 1 / 6), atol=1e-15)


def test_generator_single_particle():
    Q = build_generator(mf(LINEAR, 2, 1)).toarray()
    assert np.allclose(Q, [[-0.5, 0.5], [0.5, -0.5]], atol=0)


def test_generator_two_particles():
    model = ExactModel(mf(LINEAR, 2, 2))
    Q = model.generator.toarray()
    a, b = model.state_of([2, 0]), model.state_of([1, 1])
    assert Q[a, b] == 1.0
    assert Q[b, a] == 0.5
    assert np.allclose(Q.sum(axis=1), 0)


def test_two_state_transient_law():
    model = ExactModel(mf(LINEAR, 2, 1))
    p = distribution_at(model, [1, 0], 1.0)
    assert p[model.state_of([1, 0])] == pytest.approx(0.5 + 0.5 * math.exp(-1), abs=1e-12)


def test_transient_law_at_zero_and_large_t():
    model = ExactModel(mf(SQRT, 3, 4))
    x = [4, 0, 0]
    assert np.array_equal(distribution_at(model, x, 0.0), model.point_mass(x))
    gap = spectral_gap_exact(model)
    # TV decays like C e^{-gap t}; e^{-10} alone is above 1e-6, so use 20 relaxation times
    assert tv_distance(distribution_at(model, x, 20 / gap), model.pi) < 1e-6
    assert tv_distance(distribution_at(model, x, 10 / gap), model.pi) < 10 * math.exp(-10)


def test_transient_semigroup_property():
    model = ExactModel(mf(SQRT, 3, 5))
    from zrp.exact import propagate

    p1 = distribution_at(model, [5, 0, 0], 0.7)
    p2 = propagate(model, distribution_at(model, [5, 0, 0], 0.3), 0.4)
    assert np.allclose(p1, p2, atol=1e-12)


def test_tv_distance_validates():
    assert tv_distance([1, 0], [0, 1]) == 1.0
    with pytest.raises(ValueError):
        tv_distance([1, 0], [1, 0, 0])
    with pytest.raises(ValueError):
        tv_distance([0.5, 0.4], [1, 0])


def test_mixing_time_two_state():
    model = ExactModel(mf(LINEAR, 2, 1))
    assert mixing_time_exact(model, [1, 0], 0.25) == pytest.approx(math.log(2), rel=1e-3)


def test_mixing_curve_crosses_at_t_mix():
    model = ExactModel(mf(SQRT, 3, 12))
    curve = mixing_curve(model, [12, 0, 0])
    assert np.all(np.diff(curve.tv_values) <= 1e-12)
    assert tv_curve(model, [12, 0, 0], [curve.t_mix])[0] <= 0.25
    assert tv_curve(model, [12, 0, 0], [curve.t_mix * (1 - 2e-3)])[0] > 0.25


def test_worst_case_start_is_a_pile():
    model = ExactModel(mf(SQRT, 3, 6))
    t, x = worst_case_mixing_time(model)
    assert sorted(x.tolist()) == [0, 0, 6]
    assert t == pytest.approx(mixing_time_exact(model, [6, 0, 0]), rel=1e-9)


def test_cutoff_window_positive():
    model = ExactModel(mf(SQRT, 3, 8))
    assert cutoff_window(model, [8, 0, 0]) > 0


def test_gap_two_state():
    assert spectral_gap_exact(ExactModel(mf(LINEAR, 2, 1))) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("m", [1, 2, 3])
def test_independent_walkers_gap_is_one(n, m):
    assert spectral_gap_exact(ExactModel(mf(LINEAR, n, m))) == pytest.approx(1.0, abs=1e-10)


def test_gap_matches_dirichlet_quotient_and_decay():
    model = ExactModel(mf(SQRT, 3, 6))
    gap = spectral_gap_exact(model)
    assert dirichlet_quotient(model, gap_eigenvector(model)) == pytest.approx(gap, rel=1e-8)
    rng = np.random.default_rng(0)
    for _ in range(5):
        assert dirichlet_quotient(model, rng.normal(size=model.size)) >= gap - 1e-10
    assert tv_decay_rate(model, 20.0, 30.0) == pytest.approx(gap, rel=2e-2)


def test_sparse_and_dense_gap_agree():
    # 1771 states: dense path; compare with a direct symmetric eigensolve
    model = ExactModel(mf(SQRT, 4, 20))
    D = np.sqrt(model.pi)
    S = (model.generator.toarray() * D[:, None]) / D[None, :]
    ev = np.sort(np.linalg.eigvalsh(0.5 * (S + S.T)))
    assert spectral_gap_exact(model) == pytest.approx(-ev[-2], rel=1e-9)


def test_marginal_two_sites_and_decay():
    model = ExactModel(mf(LINEAR, 2, 2))
    assert np.allclose(single_site_marginal(model), [0.25, 0.5, 0.25])
    check = geometric_decay_check(model)
    assert check.q == 4.0
    assert check.ratios[1] == pytest.approx(0.5)
    assert check.ok


def test_marginal_constant_rate_counts():
    assert np.allclose(single_site_marginal(ExactModel(mf(CONST, 3, 2))), [1 / 2, 1 / 3, 1 / 6])


def test_drift_linear_example():
    # rho cannot sit below the density m/n = 2 of the instance
    with pytest.raises(ValueError):
        ModelSpec(LINEAR, 3, 6, rho=1.0)
    rep = drift_check(ExactModel(mf(LINEAR, 3, 6)), 0.1, 0.05)
    assert rep.L is not None and math.isfinite(rep.L)
    assert rep.ok, rep


def test_drift_level_minimal():
    spec = mf(SQRT, 3, 9)
    c, L = drift_level(spec, 0.1, 0.05)
    need = (math.expm1(0.1) * spec.kappa + 0.05) * 2 / -math.expm1(-0.1)
    assert SQRT(c) >= need > SQRT(c - 1)
    assert L == pytest.approx(2 * math.exp(0.1 * c))
    with pytest.raises(ValueError):
        drift_level(spec, 0.1, 0.0)


def test_drift_level_missing_on_short_table():
    spec = ModelSpec(RateFunction.table([1.0, 1.1, 1.2]), 3, 3)
    assert drift_level(spec, 0.5, 0.5) == (None, None)
    assert not drift_check(ExactModel(spec), 0.5, 0.5).ok


def test_drift_saturation():
    from zrp.exact import drift_generator_action

    with pytest.raises(SaturationError):
        drift_generator_action(ExactModel(mf(LINEAR, 2, 8)), 100.0)


def test_sandwich_single_particle_is_tight():
    for n in (3, 4):
        s = hermon_salez_sandwich(mf(SQRT, n, 1), torus_matrix(n, 1) if n >= 3 else cycle_shift_matrix(n))
        assert s.middle == pytest.approx(1.0, abs=1e-10)
        assert s.upper == pytest.approx(1.0, abs=1e-12)
        assert s.ok


def test_sandwich_two_cycle_and_torus():
    s = hermon_salez_sandwich(mf(LINEAR, 2, 2), cycle_shift_matrix(2))
    assert s.lower <= s.middle + 1e-9 <= s.upper + 2e-9
    s = hermon_salez_sandwich(mf(SQRT, 4, 4), torus_matrix(4, 1))
    assert s.ok


@pytest.mark.parametrize("p,d,value", [(4, 1, 1.0), (3, 2, 0.75), (3, 1, 1.5)])
def test_torus_closed_form(p, d, value):
    assert torus_gap_closed_form(p, d) == pytest.approx(value, abs=1e-15)
    assert torus_gap_numeric(p, d) == pytest.approx(value, abs=1e-12)


def test_torus_matrix_is_doubly_stochastic():
    P = torus_matrix(3, 2).matrix
    assert np.allclose(P.sum(axis=0), 1) and np.allclose(P.sum(axis=1), 1)


def test_matrix_geometry_is_reversible_and_stationary():
    model = ExactModel(mf(SQRT, 4, 3), torus_matrix(4, 1))
    assert model.detailed_balance_error() < 1e-14
    assert model.stationarity_error() < 1e-14


def test_cycle_shift_is_stationary_but_not_reversible():
    model = ExactModel(mf(SQRT, 3, 3), Geometry.from_matrix(cycle_shift_matrix(3)))
    assert model.stationarity_error() < 1e-13
    assert not model.is_reversible()
    assert matrix_poincare_constant(cycle_shift_matrix(3)) == pytest.approx(1.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 4), st.integers(1, 6), st.floats(0.0, 1.0), st.floats(0.2, 5.0))
def test_product_measure_solves_detailed_balance(n, m, alpha, scale):
    model = ExactModel(mf(RateFunction.power(alpha, scale), n, m))
    assert model.detailed_balance_error() < 1e-12
    assert model.stationarity_error() < 1e-12
    assert model.pi.sum() == pytest.approx(1.0, abs=1e-14)
