import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import kstest

from zrp import (ConfigError, Event, ExactModel, RateFunction, distribution_at, emptying_time_check,
                 event_probability, exp_moment_estimate, hitting_time, martingale_diagnostics, phi_theta,
                 sample_endpoints, simulate, simulate_construction1, simulate_construction2, simulate_gillespie,
                 tv_distance)
from zrp import kernels
from zrp._accel import NUMBA_ENABLED
from zrp.exact import drift_level, torus_matrix
from zrp.io import read_csv
from zrp.rates import big_R
from zrp.rng import make_rng
from zrp.sim import (emptying_batch, empirical_law, gain_domination, generator_action, hitting_censor_cap,
                     jump_tables, martingale_residuals, tv_threshold)

from conftest import LINEAR, SQRT, mf, point

ENGINES = ("c1", "c2", "gillespie")


@pytest.mark.parametrize("engine", ENGINES)
def test_zero_horizon_is_empty(engine):
    traj = simulate(mf(SQRT, 3, 4), [2, 1, 1], 0.0, 5, engine)
    assert traj.n_events == 0
    assert traj.final.tolist() == [2, 1, 1]


@pytest.mark.parametrize("engine", ENGINES)
def test_invariants_hold(engine):
    spec = mf(SQRT, 4, 9)
    for seed in range(5):
        traj = simulate(spec, [9, 0, 0, 0], 6.0, seed, engine)
        traj.check_invariants()
        assert traj.n_events > 0


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(1, 8), st.floats(0.0, 1.0), st.integers(0, 2**64 - 1),
       st.sampled_from(ENGINES), st.data())
def test_invariants_property(n, m, alpha, seed, engine, data):
    spec = mf(RateFunction.power(alpha), n, m)
    cuts = sorted(data.draw(st.lists(st.integers(0, m), min_size=n - 1, max_size=n - 1)))
    x = np.diff([0, *cuts, m])
    traj = simulate(spec, x, 3.0, seed, engine)
    traj.check_invariants()
    assert traj.final.sum() == m


@pytest.mark.parametrize("engine", ENGINES)
def test_same_seed_same_path(engine):
    spec = mf(SQRT, 3, 6)
    a = simulate(spec, [6, 0, 0], 4.0, 99, engine)
    b = simulate(spec, [6, 0, 0], 4.0, 99, engine)
    ea, eb = a.events(), b.events()
    assert all(np.array_equal(ea[f], eb[f], equal_nan=True) for f in ea.dtype.names)
    c = simulate(spec, [6, 0, 0], 4.0, 100, engine)
    assert not np.array_equal(a.times, c.times)


def test_caps_must_dominate():
    spec = mf(SQRT, 3, 4)
    with pytest.raises(ConfigError):
        simulate_construction1(spec, [4, 0, 0], 1.0, 0, u_cap=1.0)
    with pytest.raises(ConfigError):
        simulate_construction2(spec, [4, 0, 0], 1.0, 0, u_cap=0.5)
    traj = simulate_construction1(spec, [4, 0, 0], 1.0, 0, u_cap=5.0)
    traj.check_invariants()
    assert traj.u_cap == 5.0


def test_bad_inputs():
    spec = mf(SQRT, 3, 4)
    with pytest.raises(ConfigError):
        simulate(spec, [4, 0, 0], 1.0, 0, "euler")
    with pytest.raises(ConfigError):
        simulate(spec, [3, 0, 0], 1.0, 0)
    with pytest.raises(ConfigError):
        simulate(spec, [4, 0, 0], -1.0, 0)
    with pytest.raises(ConfigError):
        simulate(spec, [4, 0, 0], 1.0, -3)
    with pytest.raises(ConfigError):
        simulate(spec, [4, 0, 0], 1.0, 0, "c1", geometry=torus_matrix(3, 1))


def test_single_particle_holding_times():
    n = 4
    spec = mf(LINEAR, n, 1)
    traj = simulate_construction1(spec, point(n, 1), 1.4e5, 3)
    hold = np.diff(traj.times[traj.applied])[:100_000]
    assert hold.size == 100_000
    assert kstest(hold, "expon", args=(0, n / (n - 1))).pvalue > 0.01


@pytest.mark.parametrize("engine", ENGINES)
def test_two_sites_matches_exact(engine):
    spec = mf(LINEAR, 2, 2)
    model = ExactModel(spec)
    N = 100_000
    sample = sample_endpoints(spec, [2, 0], 1.0, N, 11, engine)
    tv = tv_distance(empirical_law(sample.final, model.index), distribution_at(model, [2, 0], 1.0))
    assert tv <= 3 * math.sqrt(math.log(4 / 0.01) / (2 * N))


def test_numpy_backend_matches_exact():
    spec = mf(SQRT, 3, 3)
    model = ExactModel(spec)
    exact = distribution_at(model, [3, 0, 0], 1.0)
    for engine in ENGINES:
        s = sample_endpoints(spec, [3, 0, 0], 1.0, 50_000, 4, engine, backend="numpy")
        assert s.backend == "numpy"
        assert tv_distance(empirical_law(s.final, model.index), exact) <= tv_threshold(model.size, 50_000)
        assert np.array_equal(s.final, [3, 0, 0] + s.gains - s.losses)


def test_matrix_geometry_matches_exact():
    geom = torus_matrix(4, 1)
    spec = mf(SQRT, 4, 3)
    model = ExactModel(spec, geom)
    s = sample_endpoints(spec, [3, 0, 0, 0], 1.5, 50_000, 8, "gillespie", geometry=geom)
    tv = tv_distance(empirical_law(s.final, model.index), distribution_at(model, [3, 0, 0, 0], 1.5))
    assert tv <= tv_threshold(model.size, 50_000)


def test_batch_independent_of_worker_count(monkeypatch):
    spec = mf(SQRT, 3, 5)
    a = sample_endpoints(spec, [5, 0, 0], 2.0, 10_000, 21, workers=1)
    b = sample_endpoints(spec, [5, 0, 0], 2.0, 10_000, 21, workers=4)
    monkeypatch.setenv("ZRP_WORKERS", "3")
    c = sample_endpoints(spec, [5, 0, 0], 2.0, 10_000, 21)
    assert np.array_equal(a.final, b.final) and np.array_equal(a.final, c.final)


@pytest.mark.skipif(not NUMBA_ENABLED, reason="compiled kernels disabled")
def test_compiled_kernels_are_bit_identical_to_source():
    x = np.array([4, 1, 0], dtype=np.int64)
    r = np.ascontiguousarray(mf(SQRT, 3, 5).rates())
    weight, cumP = jump_tables(mf(SQRT, 3, 5))
    for fn, args in ((kernels.c1_record, (x, r, r[-1], 3.0)),
                     (kernels.c2_record, (x, r, 5 / 3, 3.0)),
                     (kernels.c1_batch, (x, r, r[-1], 2.0, 64)),
                     (kernels.c2_batch, (x, r, 5 / 3, 2.0, 64)),
                     (kernels.gillespie_batch, (x, r, weight, cumP, 2.0, 64))):
        compiled = fn(*args, make_rng(5))
        source = fn.py_func(*args, make_rng(5))
        assert all(np.array_equal(a, b, equal_nan=True) for a, b in zip(compiled, source))


def test_first_departure_mean():
    n, m = 3, 5
    spec = mf(SQRT, n, m)
    want = n / ((n - 1) * SQRT(m))
    firsts = []
    for seed in range(4000):
        traj = simulate_construction2(spec, point(n, m), 20 * want, seed)
        firsts.append(traj.times[traj.applied][0])
    firsts = np.array(firsts)
    assert abs(firsts.mean() - want) <= 3 * firsts.std(ddof=1) / math.sqrt(firsts.size)


def test_event_count_rate_bound():
    n, m, t = 4, 8, 2.0
    spec = mf(SQRT, n, m)
    counts = np.array([simulate_gillespie(spec, point(n, m), t, s).n_events for s in range(2000)])
    assert counts.mean() <= n * spec.kappa * t


def test_single_particle_site_law():
    n, t = 4, 0.8
    s = sample_endpoints(mf(LINEAR, n, 1), point(n, 1), t, 100_000, 2, "gillespie")
    p_home = 1 / n + (1 - 1 / n) * math.exp(-t)
    freq = s.final[:, 0].mean()
    assert abs(freq - p_home) <= 4 * math.sqrt(p_home * (1 - p_home) / 100_000)


@pytest.mark.parametrize("engine", ["c1", "c2"])
def test_gain_domination(engine):
    spec = mf(SQRT, 4, 12)
    for B in (1.5, 2.0, 3.0):
        check = gain_domination(spec, point(4, 12), 2.0, B, 20_000, 6, engine=engine)
        assert check.ok, (B, check.frequencies, check.bound)


def test_emptying_first_stage_forces_departure():
    spec = mf(SQRT, 3, 6)
    for seed in range(50):
        traj = simulate_construction1(spec, [6, 0, 0], 60.0, seed)
        rep = emptying_time_check(traj, 0, 6)
        assert rep.ok
        if rep.stages_reached:
            k0 = np.nonzero((traj.sources == 0) & (traj.destinations != 0) & (traj.levels <= SQRT(6)))[0][0]
            assert traj.applied[k0]
            assert rep.T[0] == traj.times[k0]


def test_emptying_needs_construction1():
    traj = simulate_construction2(mf(SQRT, 3, 6), [6, 0, 0], 1.0, 0)
    with pytest.raises(ConfigError):
        emptying_time_check(traj, 0, 6)
    with pytest.raises(ConfigError):
        emptying_time_check(simulate_construction1(mf(SQRT, 3, 6), [5, 1, 0], 1.0, 0), 0, 6)


def test_emptying_stage_means():
    n, m = 3, 6
    spec = mf(SQRT, n, m)
    summ = emptying_batch(spec, point(n, m), 0, m, 20_000, 1)
    assert summ.ok and summ.censored == 0
    U = summ.stage_times
    for k in range(m):
        want = n / ((n - 1) * SQRT(m - k))
        se = U[:, k].std(ddof=1) / math.sqrt(U.shape[0])
        assert abs(U[:, k].mean() - want) <= 4 * se
    mean, se = summ.mean_empty_time()
    assert mean >= big_R(SQRT, m) - 3 * se


def test_hitting_time_record():
    spec = mf(SQRT, 3, 6)
    traj = simulate_gillespie(spec, [6, 0, 0], 50.0, 3)
    rec = hitting_time(traj, lambda s: s.max() <= 3, "max <= 3")
    times, states = traj.path()
    k = np.searchsorted(times, rec.T)
    assert states[k].max() <= 3 and np.all(states[:k].max(axis=1) > 3)
    assert hitting_time(traj, lambda s: True).T == 0.0


def test_exp_moment_inside_set_is_one():
    spec = mf(SQRT, 3, 9)
    est = exp_moment_estimate(spec, [3, 3, 3], 0.1, 0.05, 1000, 0)
    assert est.mean == 1.0 and not est.applicable


def test_exp_moment_small_beta_tends_to_one():
    spec = mf(LINEAR, 3, 60)
    vals = [exp_moment_estimate(spec, [60, 0, 0], 0.2, b, 1000, 3, L=20.0).mean for b in (0.02, 0.002, 0.0)]
    assert vals[-1] == 1.0
    assert abs(vals[1] - 1) < abs(vals[0] - 1)


def test_exp_moment_bound_where_it_applies():
    spec = mf(LINEAR, 3, 60)
    est = exp_moment_estimate(spec, [60, 0, 0], 0.2, 0.1, 10_000, 5)
    assert est.applicable
    assert est.censored == 0
    assert est.ok, est


def test_residual_of_conserved_count_vanishes():
    spec = mf(SQRT, 3, 5)
    traj = simulate_gillespie(spec, [5, 0, 0], 3.0, 1)
    res = martingale_residuals(traj, spec, lambda s: s.sum())
    assert np.all(res.M == 0) and np.all(res.bracket == 0)


def test_generator_action_matches_exact():
    spec = mf(SQRT, 3, 4)
    model = ExactModel(spec)
    f = np.exp(0.3 * model.states).mean(axis=1)
    Lf = model.generator @ f
    for k in (0, 5, 9):
        drift, _ = generator_action(spec, model.states[k], lambda s: np.exp(0.3 * s).mean())
        assert drift == pytest.approx(Lf[k], rel=1e-12)


def test_two_state_bracket():
    model = ExactModel(mf(LINEAR, 2, 1))
    t = np.array([0.5, 1.0, 2.0])
    d = martingale_diagnostics(model, [1, 0], lambda s: s[0], t, 100_000, 7)
    # Gamma f = 1/2 in both states, so <M,M>_t = t/2 exactly
    assert np.allclose(d.mean_bracket, t / 2, atol=1e-12)
    assert d.zero_mean_ok and d.bracket_ok


def test_exponential_observable_zero_mean():
    model = ExactModel(mf(SQRT, 3, 6))
    d = martingale_diagnostics(model, [6, 0, 0], lambda s: phi_theta(s, 0.3), [0.5, 1, 2], 100_000, 8)
    assert d.zero_mean_ok and d.bracket_ok


def test_event_trivial_cases():
    spec = mf(SQRT, 4, 12)
    assert event_probability(spec, point(4, 12), Event.max_at_least(13), 1.0, 500, 0).p == 0.0
    assert event_probability(spec, point(4, 12), Event.max_at_least(12), 0.0, 500, 0).p == 1.0
    assert event_probability(spec, point(4, 12), Event.sup_exceeds(12), 5.0, 500, 0).p == 0.0
    est = event_probability(spec, [6, 6, 0, 0], Event.sup_exceeds(6), [0.0, 1.0, 5.0], 2000, 0)
    assert est[0].p == 0.0
    assert est[1].p <= est[2].p


def test_dissolution_trend():
    spec = mf(SQRT, 4, 12)
    R = big_R(SQRT, 12)
    ests = event_probability(spec, point(4, 12), Event.max_at_least(6), [R / 2, R, 2 * R], 20_000, 3)
    p = [e.p for e in ests]
    assert p[0] > p[1] > p[2]
    assert all(e.ci_low <= e.p <= e.ci_high for e in ests)


def test_phi_excursion_event():
    spec = mf(LINEAR, 3, 30)
    _, L = drift_level(spec, 0.2, 0.1)
    est = event_probability(spec, [30, 0, 0], Event.phi_excursion(0.2, L), 50.0, 2000, 0)
    assert 0.0 <= est.p <= 1.0
    with pytest.raises(ConfigError):
        Event("phi_after_hit", theta=0.2)


def test_trajectory_csv(tmp_path):
    traj = simulate_construction1(mf(SQRT, 3, 4), [4, 0, 0], 2.0, 0)
    traj.to_csv(tmp_path / "t.csv")
    header, rows = read_csv(tmp_path / "t.csv")
    assert header == ["t", "i", "j", "applied"]
    assert [r[0] for r in rows] == traj.times.tolist()
    assert [r[3] for r in rows] == traj.applied.tolist()


def test_censor_cap_value():
    assert hitting_censor_cap(mf(LINEAR, 3, 3)) == pytest.approx(50 * 11 / 6 + 100)
