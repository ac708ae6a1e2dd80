import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zrp import (ConfigError, ExactModel, GoodSet, ModelSpec, TagModel, ZRPError,
                 certify_cooccupant_drift, coalescence_statistics, distribution_at, path_coupling_tv_bound,
                 shortest_adjacent_path, simulate_constrained, simulate_tagged_pair, spectral_gap_exact,
                 tk_schedule, tv_distance)
from zrp.coupling import constrained_drift, tagged_batch
from zrp.sim import empirical_law, tv_threshold

from conftest import CONST, LINEAR, SQRT, mf


def test_equal_tags_coalesce_at_zero():
    traj = simulate_tagged_pair(mf(LINEAR, 3, 2), [2, 0, 0], 1, 1, 5.0, 0)
    assert traj.tau == 0.0
    stats = coalescence_statistics(mf(LINEAR, 3, 2), [2, 0, 0], 1, 1, 100, 0.5, 0)
    assert np.all(stats.tau == 0) and stats.exp_moment == 1.0


def test_tag_model_caps():
    model = TagModel.of(mf(SQRT, 3, 4))
    assert model.u_cap == SQRT(4)
    assert model.delta_cap == pytest.approx(1.0)
    assert model.delta.size == 5
    with pytest.raises(ConfigError):
        TagModel.of(mf(SQRT, 3, 4), delta_cap=0.5)
    assert TagModel.build(LINEAR, 3, 0).u_cap == 1.0


@pytest.mark.parametrize("which", [0, 1])
def test_augmented_marginal_is_zrp_law(which):
    spec = mf(LINEAR, 3, 2)
    x, i, j, t = np.array([2, 0, 0]), 0, 1, 1.0
    batch = tagged_batch(TagModel.of(spec), x, i, j, t, 100_000, 3, stop_at_tau=False)
    big = ExactModel(mf(LINEAR, 3, 3))
    start = x.copy()
    start[(i, j)[which]] += 1
    emp = empirical_law(batch.augmented(which), big.index)
    assert tv_distance(emp, distribution_at(big, start, t)) <= tv_threshold(big.size, 100_000)


def test_coupling_inequality():
    spec = mf(LINEAR, 3, 2)
    big = ExactModel(mf(LINEAR, 3, 3))
    stats = coalescence_statistics(spec, [1, 1, 0], 0, 2, 100_000, 0.5, 4)
    for t in (0.5, 1.0, 2.0):
        p, se = stats.survival(t)
        tv = tv_distance(distribution_at(big, [2, 1, 0], t), distribution_at(big, [1, 1, 1], t))
        assert p + 3 * se >= tv


def test_coalescence_is_absorbing_and_shared():
    spec = mf(SQRT, 3, 4)
    for seed in range(20):
        traj = simulate_tagged_pair(spec, [4, 0, 0], 0, 1, 15.0, seed)
        if traj.coalesced:
            for t in np.linspace(traj.tau, traj.t_end, 25):
                I, J = traj.tags_at(t)
                assert I == J
        # at a Theta point both tags see Delta of their own site; equal occupancy -> same outcome
        for t, moved_i, moved_j in zip(traj.theta_times, traj.i_moved, traj.j_moved):
            I, J = traj.tags_at(np.nextafter(t, -np.inf))
            x = traj.background_at(np.nextafter(t, -np.inf))
            if x[I] == x[J]:
                assert moved_i == moved_j


def test_unconstrained_background_is_c1_path():
    traj = simulate_tagged_pair(mf(SQRT, 3, 4), [4, 0, 0], 0, 1, 5.0, 7)
    traj.base.check_invariants()
    assert traj.suppressed.sum() == 0 and traj.first_suppression == math.inf


def test_whole_space_good_changes_nothing():
    spec = mf(SQRT, 3, 6)
    a = simulate_tagged_pair(spec, [6, 0, 0], 0, 2, 10.0, 12)
    b = simulate_constrained(spec, GoodSet(0.3, 1e9), [6, 0, 0], 0, 2, 10.0, 12)
    assert np.array_equal(a.base.times, b.base.times)
    assert np.array_equal(a.base.applied, b.base.applied)
    assert np.array_equal(a.I_path[1], b.I_path[1]) and a.tau == b.tau


def test_prefix_property_and_good_invariance():
    spec = mf(SQRT, 3, 6)
    good = GoodSet(0.5, 2.0)
    seen_suppression = False
    for seed in range(30):
        free = simulate_tagged_pair(spec, [2, 2, 2], 0, 1, 10.0, seed)
        held = simulate_constrained(spec, good, [2, 2, 2], 0, 1, 10.0, seed)
        s = held.first_suppression
        seen_suppression |= math.isfinite(s)
        before = held.base.times < s
        k = int(before.sum())
        assert np.array_equal(free.base.times[:k], held.base.times[:k])
        assert np.array_equal(free.base.applied[:k], held.base.applied[:k])
        for t in np.linspace(0, min(s, 10.0), 20, endpoint=False):
            assert np.array_equal(free.background_at(t), held.background_at(t))
            assert free.tags_at(t) == held.tags_at(t)
        _, states = held.base.path()
        assert all(good.contains(x) for x in states)
    assert seen_suppression


def test_constrained_start_must_be_good():
    with pytest.raises(ConfigError):
        simulate_constrained(mf(SQRT, 3, 6), GoodSet(0.5, 2.0), [6, 0, 0], 0, 1, 1.0, 0)


def test_good_set_from_drift():
    good = GoodSet.from_drift(mf(LINEAR, 3, 6), 0.3, 0.1)
    assert good.level == good.L2 + 4
    assert [6, 0, 0] in good


def test_schedule_from_empty_sites_starts_at_one():
    traj = simulate_tagged_pair(mf(SQRT, 3, 4), [4, 0, 0], 1, 2, 20.0, 0)
    sched = tk_schedule(traj, 0.7, kmax=3)
    assert sched.times[0] == 1.0 and sched.complete
    t1 = sched.times[0]
    x = traj.background_at(t1)
    I, J = traj.tags_at(t1)
    assert sched.times[1] == pytest.approx(t1 + 0.7 * max(x[I], x[J]) + 1)
    short = tk_schedule(simulate_tagged_pair(mf(SQRT, 3, 4), [4, 0, 0], 1, 2, 1.5, 0), 0.7)
    assert not short.complete and len(short.times) == 1


def test_first_schedule_time_is_deterministic():
    spec = mf(LINEAR, 3, 6)
    c2 = 0.4
    batch = tagged_batch(TagModel.of(spec), [3, 2, 1], 0, 1, 50.0, 2000, 1, c2=c2, kmax=1, stop_at_tau=False)
    assert np.all(batch.schedule[:, 0] == c2 * 3 + 1)
    theta3 = 0.2
    assert np.mean(np.exp(theta3 * batch.schedule[:, 0])) == pytest.approx(math.exp(theta3 * (c2 * 3 + 1)))


def test_certificate_holds_on_good_pairs():
    spec = mf(LINEAR, 3, 6)
    model = TagModel.of(spec)
    good = GoodSet(0.5, 2.0)
    cert = certify_cooccupant_drift(model, good)
    phi, L = constrained_drift(model, good)
    assert np.all(L <= -cert.a2 * phi + cert.b2 + 1e-9)
    assert cert.K == pytest.approx(2 * (cert.b2 / cert.a2 + 1))
    assert cert.c2 == pytest.approx(good.theta2 / cert.a2)


def test_cooccupant_moment_below_K():
    spec = mf(LINEAR, 3, 6)
    good = GoodSet.from_drift(spec, 0.3, 0.1)
    model = TagModel.of(spec)
    cert = certify_cooccupant_drift(model, good)
    x, i, j = np.array([6, 0, 0]), 0, 1
    t0 = cert.c2 * max(x[i], x[j])
    grid = [t0, t0 + 1, t0 + 3]
    batch = tagged_batch(model, x, i, j, grid[-1], 20_000, 2, good=good, t_grid=grid, stop_at_tau=False)
    vals = np.exp(good.theta2 * np.maximum(batch.occ_i, batch.occ_j))
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(vals.shape[0])
    assert np.all(mean - 3 * se <= cert.K)


def test_schedule_survival_decays():
    spec = mf(LINEAR, 3, 6)
    good = GoodSet.from_drift(spec, 0.3, 0.1)
    cert = certify_cooccupant_drift(TagModel.of(spec), good)
    kmax = 6
    batch = tagged_batch(TagModel.of(spec), [6, 0, 0], 0, 1, 200.0, 50_000, 9, good=good,
                         c2=cert.c2, kmax=kmax)
    T = batch.schedule
    alive = np.isfinite(T) & (batch.tau[:, None] >= T) & (batch.first_suppression[:, None] > T)
    p = alive.mean(axis=0)
    assert np.all(np.diff(p) <= 0)
    ks = np.arange(1, kmax + 1)
    keep = p > 0
    slope = np.polyfit(ks[keep], np.log(p[keep]), 1)[0]
    assert slope < 0


def test_gap_consequence_of_exponential_moment():
    spec = mf(LINEAR, 3, 2)
    gap = spectral_gap_exact(ExactModel(spec))
    gamma = gap / 2
    for x, i, j in (([2, 0, 0], 0, 1), ([1, 1, 0], 0, 2), ([0, 1, 1], 1, 0)):
        stats = coalescence_statistics(spec, x, i, j, 20_000, gamma, 5)
        assert stats.censored == 0
        assert math.isfinite(stats.exp_moment)
    assert gamma < gap


def test_time_rescaling_halves_tau():
    spec1 = mf(LINEAR, 3, 4)
    spec2 = ModelSpec(LINEAR.scaled(2.0), 3, 4)
    a = coalescence_statistics(spec1, [4, 0, 0], 0, 1, 20_000, 0.1, 8)
    b = coalescence_statistics(spec2, [4, 0, 0], 0, 1, 20_000, 0.1, 8)
    # shared seeds: every clock runs twice as fast, path by path
    assert np.allclose(b.tau * 2, a.tau, rtol=1e-9)
    assert b.median() * 2 == pytest.approx(a.median(), rel=1e-9)


def test_constant_rate_tags_move_only_from_empty_sites():
    # r(0) = 0 makes Delta(0) = r(1) > 0 even for a constant rate
    model = TagModel.of(mf(CONST, 3, 3))
    assert model.delta.tolist() == [1.0, 0.0, 0.0, 0.0]
    stats = coalescence_statistics(mf(CONST, 3, 3), [0, 0, 3], 0, 1, 2000, 0.1, 0)
    assert stats.censored < stats.n_paths


def test_all_censored_is_an_error():
    with pytest.raises(ZRPError):
        coalescence_statistics(mf(LINEAR, 3, 3), [3, 0, 0], 0, 1, 100, 0.1, 0, cap=1e-12)


def test_path_coupling_trivial_and_adjacent():
    spec = mf(LINEAR, 3, 4)
    exact = ExactModel(spec)
    same = path_coupling_tv_bound(spec, [2, 1, 1], [2, 1, 1], 1.0, 1000, 0, exact)
    assert same.bound == 0.0 and same.exact_tv == 0.0 and same.ok
    adj = path_coupling_tv_bound(spec, [2, 1, 1], [1, 2, 1], 1.0, 50_000, 0, exact)
    assert len(adj.path) == 2 and adj.ok


def test_path_coupling_far_pair():
    spec = mf(LINEAR, 3, 4)
    exact = ExactModel(spec)
    for t in (0.5, 1.0):
        res = path_coupling_tv_bound(spec, [4, 0, 0], [0, 4, 0], t, 50_000, 1, exact)
        assert len(res.path) == 5
        assert res.ok, (t, res.bound, res.exact_tv)


def test_path_coupling_symmetric():
    spec = mf(LINEAR, 3, 4)
    a = path_coupling_tv_bound(spec, [3, 1, 0], [0, 1, 3], 1.0, 50_000, 2)
    b = path_coupling_tv_bound(spec, [0, 1, 3], [3, 1, 0], 1.0, 50_000, 3)
    se = sum(e[4] for e in a.edges) + sum(e[4] for e in b.edges)
    assert abs(a.bound - b.bound) <= 4 * se + 12 * max(e[4] for e in a.edges + b.edges)


@st.composite
def pairs(draw):
    n = draw(st.integers(2, 6))
    m = draw(st.integers(1, 10))

    def comp():
        cuts = sorted(draw(st.lists(st.integers(0, m), min_size=n - 1, max_size=n - 1)))
        return np.diff([0, *cuts, m])

    return comp(), comp()


@settings(max_examples=200)
@given(pairs())
def test_greedy_path_shape(pair):
    x, y = pair
    path = shortest_adjacent_path(x, y)
    assert np.array_equal(path[0], x) and np.array_equal(path[-1], y)
    assert len(path) - 1 == int(np.maximum(x - y, 0).sum()) <= x.sum()
    top = max(x.max(), y.max())
    for u, v in zip(path[:-1], path[1:]):
        d = v - u
        assert sorted(d.tolist()) == [-1] + [0] * (len(d) - 2) + [1]
        assert v.max() <= top


def test_greedy_tie_break():
    path = shortest_adjacent_path([2, 2, 0, 0], [0, 0, 2, 2])
    assert path[1].tolist() == [1, 2, 1, 0]


def test_larger_delta_coalesces_stochastically_faster():
    # Delta for r = k dominates Delta for r = sqrt(k); the order holds in law, not path by path
    fast = coalescence_statistics(mf(LINEAR, 3, 4), [4, 0, 0], 0, 1, 50_000, 0.1, 1)
    slow = coalescence_statistics(mf(SQRT, 3, 4), [4, 0, 0], 0, 1, 50_000, 0.1, 1)
    for t in (0.5, 1.0, 2.0, 4.0):
        pf, sf = fast.survival(t)
        ps, ss = slow.survival(t)
        assert pf <= ps + 3 * (sf + ss)
