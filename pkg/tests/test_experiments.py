import math

import numpy as np
import pytest

from cbswap import auxiliary, coupled, swap
from cbswap import experiments as E
from cbswap.coupled import PartitionThresholds
from cbswap.errors import CensoredData, EmptyClass, NotReached, TooLarge
from cbswap.state import ChainState, PartitionLabel, adjacent_pair, build_model, initial_state

from conftest import brute_force_law


def rec(tau, lag=1, censored=False, cap=10**6):
    return E.MeetingRecord(0, 0, lag, tau, censored, cap)


# ---------------------------------------------------------------- instances

def test_probability_sources(tmp_path):
    r = np.random.default_rng(0)
    p = E.generate_probs("uniform", 50, r)
    assert p.shape == (50,) and np.all((p > 0) & (p < 1))
    np.testing.assert_array_equal(E.generate_probs("equal:0.3", 4, r), [0.3] * 4)
    f = tmp_path / "p.csv"
    f.write_text("0.1\n0.2\n0.3\n")
    np.testing.assert_allclose(E.generate_probs(f"csv:{f}", 3, r), [0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        E.generate_probs(f"csv:{f}", 4, r)
    with pytest.raises(ValueError):
        E.generate_probs("gamma", 3, r)


def test_instance_rng_independent_of_replicates():
    a = E.instance_rng(5, 100).random(3)
    b = E.instance_rng(5, 100).random(3)
    c = E.instance_rng(5, 101).random(3)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_resolve_target():
    assert E.resolve_target("ratio:0.5", 257) == 128
    assert E.resolve_target("fixed:10", 1024) == 10
    assert E.resolve_target("7", 20) == 7


# ---------------------------------------------------------------- meetings

@pytest.mark.parametrize("lag", [1, 3, 10])
def test_met_at_alignment_gives_lag(lag):
    m = build_model(np.random.default_rng(0).random(12), 5)
    x0 = initial_state(m, "uniform-subset", np.random.default_rng(1))
    x_lag = x0.copy()
    swap.run(m, x_lag, lag, np.random.default_rng(2))
    tau, cens = E.lagged_meeting_time(m, x0, x_lag, lag, 1000, np.random.default_rng(2))
    assert (tau, cens) == (lag, False)


def test_meeting_record_invariants():
    m = build_model(np.random.default_rng(1).random(20), 10)
    recs = E.run_meetings(m, 2, 30, None, master_seed=4)
    assert all(r.tau >= r.lag for r in recs)
    short = E.run_meetings(m, 1, 30, 3, master_seed=4)
    assert any(r.censored for r in short)
    assert all(r.tau == 3 for r in short if r.censored)


def test_meetings_reproducible_and_thread_independent():
    m = build_model(np.random.default_rng(2).random(30), 15)
    a = E.run_meetings(m, 1, 40, None, master_seed=11, threads=1)
    b = E.run_meetings(m, 1, 40, None, master_seed=11, threads=4)
    assert [r.tau for r in a] == [r.tau for r in b]
    assert [r.seed for r in a] == [r.seed for r in b]


def test_equal_p_meetings_finite():
    m = build_model(np.full(20, 0.4), 10)
    recs = E.run_meetings(m, 1, 500, None, master_seed=0, threads=4)
    assert not any(r.censored for r in recs)
    # each adjacent step contracts at rate (N-2)/((N-I)I); meeting must be far below the cap
    assert np.mean([r.tau for r in recs]) < E.default_cap(20) / 10


# ---------------------------------------------------------------- TV bound

def test_tv_bound_examples():
    c = E.tv_upper_bound([rec(5)], [2])
    assert c.bounds[0] == 2
    taus = [3, 7, 12]
    c = E.tv_upper_bound([rec(t) for t in taus], [0, 11, 20])
    assert c.bounds[0] == pytest.approx(np.mean(np.array(taus) - 1))
    assert c.bounds[1] == 0 and c.bounds[2] == 0


def test_tv_bound_lag_two():
    c = E.tv_upper_bound([rec(9, lag=2)], [0, 1, 6, 7])
    # ceil((9 - 2 - t) / 2)
    np.testing.assert_array_equal(c.bounds, [4, 3, 1, 0])


def test_tv_bound_monotone_and_default_grid():
    r = np.random.default_rng(0)
    recs = [rec(int(t)) for t in r.integers(1, 200, 300)]
    c = E.tv_upper_bound(recs)
    taus = np.array([r.tau for r in recs])
    assert c.times[0] == 0 and c.times[-1] == taus.max() - 1
    assert np.all(np.diff(c.bounds) <= 0) and np.all(c.bounds >= 0)
    assert c.bounds[-1] == 0


def test_tv_bound_rejects_censoring_and_mixed_lags():
    with pytest.raises(CensoredData):
        E.tv_upper_bound([rec(5), rec(9, censored=True)])
    with pytest.raises(ValueError):
        E.tv_upper_bound([rec(5, lag=1), rec(5, lag=2)])


def test_estimate_mixing_time():
    c = E.TvBoundCurve(np.array([0, 1, 2]), np.array([2, 0.5, 0.005]), np.zeros(3), 1, 1)
    assert E.estimate_mixing_time(c, 0.01) == 2
    assert E.estimate_mixing_time(c, 3.0) == 0
    with pytest.raises(NotReached):
        E.estimate_mixing_time(c, 0.001)


def test_mixing_time_bisection_matches_scan():
    r = np.random.default_rng(3)
    for _ in range(20):
        taus = r.integers(1, 500, 200)
        lag = int(r.integers(1, 4))
        taus = np.maximum(taus, lag)
        curve = E.tv_upper_bound([rec(int(t), lag) for t in taus])
        for eps in (0.01, 0.1, 0.5):
            assert E.mixing_time_from_taus(taus, lag, eps) == E.estimate_mixing_time(curve, eps)


def test_bootstrap_ci_brackets():
    taus = np.random.default_rng(4).integers(10, 300, 500)
    est = E.mixing_time_from_taus(taus, 1, 0.01)
    lo, hi = E.bootstrap_mixing_ci(taus, 1, 0.01, 300)
    assert lo <= est <= hi


def test_geometric_grid():
    g = E.geometric_grid(10_000, 64)
    assert g[0] == 1 and g[-1] == 10_000 and np.all(np.diff(g) > 0) and len(g) <= 64


def test_tv_bound_valid_where_estimator_is_nondegenerate():
    """Exact TV <= bound + 3 stderr wherever at least one replicate is still unmet."""
    m = build_model(np.random.default_rng(6).random(6), 3)
    recs = E.run_meetings(m, 1, 2000, None, master_seed=6)
    curve = E.tv_upper_bound(recs)
    tv = E.exact_tv_curve(m, curve.times)
    live = curve.bounds > 0
    assert np.all(tv[live] <= curve.bounds[live] + 3 * curve.stderr[live])


# ---------------------------------------------------------------- brute force

def test_enumerate_cb():
    _, law = E.enumerate_cb(build_model([0.5, 0.5], 1))
    np.testing.assert_allclose(law, [0.5, 0.5])
    probs = [0.1, 0.2, 0.3, 0.4]
    supports, law = E.enumerate_cb(build_model(probs, 2))
    oracle = brute_force_law(probs, 2)
    assert law.sum() == pytest.approx(1.0) and len(law) == 6
    for s, p in zip(supports, law):
        assert p == pytest.approx(oracle[tuple(np.flatnonzero(s))])
    with pytest.raises(TooLarge):
        E.enumerate_cb(build_model(np.full(30, 0.5), 15))


def test_exact_tv_curve_decreases_to_zero():
    m = build_model(np.random.default_rng(0).random(6), 3)
    tv = E.exact_tv_curve(m, [0, 5, 50, 500])
    assert np.all(np.diff(tv) <= 1e-15) and tv[-1] < 1e-10
    tv_first = E.exact_tv_curve(m, [0], "first-I")
    assert tv_first[0] > tv[0]


def test_verify_contraction_equal_p():
    n, top = 8, 3
    rep = E.verify_adjacent_contraction(build_model(np.full(n, 0.2), top), n_mc=2000)
    want = (n - 2) / ((n - top) * top)
    assert rep.min_rate == pytest.approx(want) and rep.max_rate == pytest.approx(want)
    assert rep.ok


def test_verify_contraction_uniform():
    m = build_model(np.random.default_rng(1).random(10), 5)
    rep = E.verify_adjacent_contraction(m, np.random.default_rng(2), n_paths=2, n_mc=3000)
    assert rep.min_rate > 0 and rep.ok
    a, b = rep.worst_pair
    assert rep.worst_odds == (m.odds[a], m.odds[b])
    with pytest.raises(TooLarge):
        E.verify_adjacent_contraction(build_model(np.full(12, 0.5), 6))


# ---------------------------------------------------------------- partition

def test_wilson():
    lo, hi = E.wilson_interval(0, 100)
    assert lo == 0 and 0 < hi < 0.05
    lo, hi = E.wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert E.wilson_interval(0, 0) == (0.0, 1.0)


def test_sample_class_pairs_respect_class():
    m = build_model(np.random.default_rng(0).random(60), 30)
    th = PartitionThresholds.from_percentiles(m)
    r = np.random.default_rng(1)
    for lab in (PartitionLabel.U, PartitionLabel.F):
        bits, a, b = E.sample_class_pairs(m, th, lab, 500, r)
        assert np.all(bits[np.arange(500), a] == 0) and np.all(bits[np.arange(500), b] == 1)
        lo = np.minimum(m.odds[a], m.odds[b])
        hi = np.maximum(m.odds[a], m.odds[b])
        is_u = (lo < th.w_lo) & (hi > th.w_hi)
        assert np.all(is_u) if lab == PartitionLabel.U else not np.any(is_u)


def test_partition_estimates_consistent_with_exact_laws():
    """Monte Carlo tallies agree with exact one-step laws averaged over the same pair law."""
    m = build_model(np.random.default_rng(2).random(40), 20)
    th = PartitionThresholds.from_percentiles(m)
    r = np.random.default_rng(3)
    k = 40_000
    res = E.estimate_partition_transitions(m, th, k, r)
    assert len(res) == 6
    for est in res:
        assert 0 <= est.ci_low <= est.estimate <= est.ci_high <= 1
        assert est.scaled == pytest.approx(est.estimate * 40)
    by = {(e.from_label, e.to_label): e for e in res}
    for origin in (PartitionLabel.U, PartitionLabel.F):
        assert sum(by[(origin, d)].count for d in PartitionLabel) == k
        bits, a, b = E.sample_class_pairs(m, th, origin, 4000, r)
        laws = np.array([coupled.transition_law(m, adjacent_pair(ChainState(x), int(i), int(j)), th)
                         for x, i, j in zip(bits, a, b)])
        for d in PartitionLabel:
            mean = laws[:, d - 1].mean()
            se = math.sqrt(laws[:, d - 1].var() / len(laws) + mean * (1 - mean) / k)
            assert abs(by[(origin, d)].estimate - mean) < 4 * se + 1e-12


def test_partition_empty_class():
    m = build_model(np.full(20, 0.3), 10)
    with pytest.raises(EmptyClass):
        E.estimate_partition_transitions(m, PartitionThresholds(0.1, 1.0), 100,
                                         np.random.default_rng(0))


# ---------------------------------------------------------------- chasing

def test_run_chasing_small():
    m = build_model(np.random.default_rng(0).random(100), 50)
    th = PartitionThresholds.from_percentiles(m)
    res, kept = E.run_chasing(m, th, 60, 150, master_seed=1, keep=2)
    assert res.counts.sum() == 60 * 150
    assert res.counts[0, 2] == 0 and res.counts[2, :2].sum() == 0
    assert len(kept) == 2 and np.all(kept[0].labels <= kept[0].dominated_by)
    assert 0 < res.q.xi_uf <= res.envelope["uf_max"]


def test_run_chasing_rejects_bad_rates():
    m = build_model(np.random.default_rng(0).random(100), 50)
    th = PartitionThresholds.from_percentiles(m)
    with pytest.raises(Exception) as info:
        E.run_chasing(m, th, 10, 100, rates=(50.0, 1.0, 1.0))
    assert isinstance(info.value, (auxiliary.InvalidBranchProbability, ValueError))


# ---------------------------------------------------------------- sweeps

def test_mixing_sweep_rows():
    rows = E.mixing_sweep([16, 24], "ratio:0.5", "nlogn", master_seed=2, replicates=40,
                          n_boot=50)
    assert [r["n"] for r in rows] == [16, 24]
    for r in rows:
        assert r["censored"] == 0
        assert r["mixing_scaled"] == pytest.approx(r["mixing_time"] / (r["n"] * math.log(r["n"])))
        assert r["ci_low"] <= r["mixing_scaled"] <= r["ci_high"]
    again = E.mixing_sweep([16], "ratio:0.5", "nlogn", master_seed=2, replicates=40, n_boot=50)
    assert again[0]["mixing_time"] == rows[0]["mixing_time"]
