import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from welfare_bandits.dyadic import (MIN_EPOCH_ROUNDS, ConfidenceInterval, DyadicConfig, DyadicSearch,
                                    width_decay_constant, epoch_probe_points, half_widths, interior_sample_point,
                                    interval_demand_estimate, replay_dyadic, run_dyadic, trim_active_interval,
                                    truncation_index)
from welfare_bandits.envs import ConcaveEnv, FixedSequenceEnv, UniformEnv
from welfare_bandits.welfare import expected_welfare_uniform


def is_dyadic(x):
    return Fraction(x).denominator & (Fraction(x).denominator - 1) == 0


def test_probe_points_examples():
    assert epoch_probe_points(0.0, 1.0, 1) == (0.25, 0.5, 0.75)
    l, c, r = epoch_probe_points(0.0, 1.0, 2)
    assert (l, c, r) == pytest.approx((1 / 3, 0.5, 2 / 3), abs=1e-15)
    assert epoch_probe_points(0.25, 0.75, 3) == (0.375, 0.5, 0.625)
    with pytest.raises(ValueError):
        epoch_probe_points(0.5, 0.5, 1)


@given(st.floats(0, 0.99), st.floats(0.001, 1), st.integers(1, 50))
def test_probe_point_geometry(lo, width, tau):
    hi = min(1.0, lo + width)
    l, c, r = epoch_probe_points(lo, hi, tau)
    d = hi - lo
    assert lo <= l < c < r <= hi and c == (lo + hi) / 2
    assert r - l == pytest.approx(d / 2 if tau % 2 else d / 3, rel=1e-12)


def test_interior_sample_point_examples():
    assert interior_sample_point(0.25, 0.5, 0, 0) == 0.375
    assert interior_sample_point(0.0, 1.0, 3, 2) == 0.625
    with pytest.raises(ValueError):
        interior_sample_point(0.0, 1.0, 3, 4)


@given(st.floats(0, 0.9), st.floats(0.01, 0.1), st.integers(0, 1000), st.data())
def test_interior_point_strictly_inside(w1, width, n, data):
    k = data.draw(st.integers(0, n))
    x = interior_sample_point(w1, w1 + width, n, k)
    assert w1 < x < w1 + width


def test_truncation_index():
    hits = [5, 10, 20, 25, 30, 35, 40, 45]  # count 7 reached at 40, 8 at 45
    assert truncation_index(hits, 45) == 44
    assert truncation_index(hits, 44) == 44
    assert truncation_index(hits, 40) == 40
    # count 3 reached at 20 and still 3 at 22
    assert truncation_index(hits, 22) == 22
    assert truncation_index(hits, 24) == 24
    assert truncation_index(hits, 7) == 7  # count 1 since round 5
    assert truncation_index([], 100) == 0
    assert truncation_index(hits, 4) == 0


def test_truncated_estimate_constant_on_plateau():
    # every s between reaching count 7 and the eighth hit selects the same samples
    outcomes = [1, 0, 1, 1, 0, 1, 1, 0]
    for s_count in (7,):
        mean, n = interval_demand_estimate(outcomes[:s_count])
        assert (mean, n) == interval_demand_estimate(outcomes)
    assert interval_demand_estimate(outcomes) == (5 / 8, 7)


def test_interval_demand_estimate_examples():
    assert interval_demand_estimate([]) == (0.0, 0)
    assert interval_demand_estimate([1, 1, 0]) == (0.5, 3)
    assert interval_demand_estimate([1] * 7) == (7 / 8, 7)
    assert interval_demand_estimate([1] * 14) == (7 / 8, 7)
    assert interval_demand_estimate([1] * 15) == (15 / 16, 15)


def test_half_widths():
    g_point, g_int = half_widths(0.5, 50, 0.25, 0.5, 3, 0.7, 0.01)
    assert g_point == pytest.approx(0.5 * math.sqrt(math.log(200) / 100), rel=1e-14)
    assert g_point == pytest.approx(0.11509, abs=5e-6)
    assert g_int == pytest.approx(0.7 * 0.25 * (math.sqrt(math.log(200) / 8) + 0.5), rel=1e-14)
    assert half_widths(0.5, 0, 0.25, 0.5, 0, 0.7, 0.01)[0] == math.inf
    assert half_widths(0.0, 10, 0.0, 0.5, 0, 0.7, 0.01)[0] == 0.0


def test_target_selection():
    s = DyadicSearch(DyadicConfig(0.7, 0.01))
    assert s.select_sampling_target() == "l"
    for x in (s.l, s.c, s.r):
        s.point_n[x] = 10**6
    assert s.select_sampling_target() == "lc"
    for log, n in zip(s.logs, (10**6, 1)):
        log.n = n
    assert s.select_sampling_target() == "cr"


def test_uninformative_start():
    s = DyadicSearch(DyadicConfig(0.7, 0.01))
    for J in s.confidence_intervals():
        assert J.center == 0 and J.half_width == math.inf


def test_confidence_centers_under_unit_demand():
    lam = 0.7
    s = DyadicSearch(DyadicConfig(lam, 0.5))
    for _ in range(3000):
        s.step(1.0)
    assert s.lo == 0.0 and s.hi == 1.0 or s.lo > 0
    lc, cr, lr = s.confidence_intervals()
    # demand is one everywhere; only the truncated interval count keeps the estimate below one
    n = s.logs[0].n
    assert lc.center == pytest.approx((s.c - s.l) * (1 - lam * n / (n + 1)), rel=1e-12)
    assert lc.center == pytest.approx((s.c - s.l) * (1 - lam), abs=(s.c - s.l) * lam / (n + 1) + 1e-15)
    assert lr.center == pytest.approx(lc.center + cr.center, rel=1e-14)


def test_trim_rules():
    probes = (0.25, 0.5, 0.75)
    wide = ConfidenceInterval(0.0, 1.0)
    assert trim_active_interval((0.0, 1.0), probes, (ConfidenceInterval(0.05, 0.01), wide, wide)) == (0.25, 1.0)
    assert trim_active_interval((0.0, 1.0), probes, (wide, ConfidenceInterval(-0.05, 0.01), wide)) == (0.0, 0.75)
    assert trim_active_interval((0.0, 1.0), probes, (wide, wide, ConfidenceInterval(0.3, 0.1))) == (0.25, 1.0)
    assert trim_active_interval((0.0, 1.0), probes, (wide, wide, ConfidenceInterval(-0.3, 0.1))) == (0.0, 0.75)
    assert trim_active_interval((0.0, 1.0), probes, (wide, wide, wide)) is None


def _reference_policies(config, values):
    s = DyadicSearch(config)
    return np.array([s.step(v)[0] for v in values]), s


@pytest.mark.parametrize("env", [UniformEnv(), ConcaveEnv(lam=0.7, epsilon=0.1),
                                 ConcaveEnv(lam=0.7, epsilon=-0.1)])
def test_reference_matches_compiled(env):
    cfg = DyadicConfig.for_horizon(0.7, 10**4)
    values = env.with_seed(3).valuations(1, 6000)
    xs, s = _reference_policies(cfg, values)
    run = replay_dyadic(cfg, values)
    assert np.array_equal(xs, run.policies)
    assert run.final == (s.lo, s.hi)
    assert [e[0] for e in s.epochs] == list(run.epoch_start)


def test_probe_points_are_dyadic_and_inside():
    run = run_dyadic(DyadicConfig.for_horizon(0.7, 10**5), UniformEnv(), 10**5, 11)
    for tau, (lo, hi) in enumerate(zip(run.epoch_lo, run.epoch_hi), start=1):
        for x in epoch_probe_points(lo, hi, tau):
            assert lo <= x <= hi and is_dyadic(x)
    assert all(is_dyadic(x) for x in np.unique(run.policies))


@pytest.mark.parametrize("seed", range(5))
def test_interval_shrinks_geometrically(seed):
    run = run_dyadic(DyadicConfig.for_horizon(0.7, 10**5), UniformEnv(), 10**5, seed)
    w = run.widths
    bounds = np.append(run.epoch_lo, run.final[0]), np.append(run.epoch_hi, run.final[1])
    for tau in range(1, len(w)):
        assert bounds[0][tau] >= bounds[0][tau - 1] and bounds[1][tau] <= bounds[1][tau - 1]
        # the last entry is the interval in force at the horizon, possibly untrimmed
        if tau < len(w) - 1:
            keep = 3 / 4 if tau % 2 == 1 else 5 / 6
            assert w[tau] <= keep * w[tau - 1] + 1e-15


def test_interior_sampling_cycles_through_cells():
    s = DyadicSearch(DyadicConfig(0.7, 0.01))
    seen = []
    for v in UniformEnv(seed=4).valuations(1, 400):
        target = s.select_sampling_target()
        tau, log = s.tau, s.logs[0]
        n_before, k_before = log.n, log.k
        x, _ = s.step(v)
        if target == "lc" and s.tau == tau:
            seen.append((n_before, k_before, x, log.w1, log.w2))
    assert seen
    for (n, k, x, w1, w2) in seen:
        assert x == w1 + (w2 - w1) * ((k + 0.5) / (n + 1))
    # consecutive samples at a fixed count walk k = 0, 1, ..., n and wrap around
    for a, b in zip(seen, seen[1:]):
        if a[0] == b[0]:
            assert b[1] == (a[1] + 1) % (a[0] + 1)


def test_half_width_decay_within_epoch():
    cfg = DyadicConfig.for_horizon(0.7, 2 * 10**4)
    s = DyadicSearch(cfg, record_widths=True)
    for v in UniformEnv(seed=9).valuations(1, 2 * 10**4):
        s.step(v)
    checked = 0
    for tau, elapsed, hw in s.width_log:
        if elapsed >= MIN_EPOCH_ROUNDS:
            assert hw <= width_decay_constant(cfg.delta) / math.sqrt(elapsed)
            checked += 1
    assert checked > 1000


def test_coverage_of_welfare_differences():
    lam, cfg = 0.7, DyadicConfig(0.7, 0.01)
    W = lambda x: float(expected_welfare_uniform(x, lam))
    misses = total = 0
    for seed in range(40):
        s = DyadicSearch(cfg)
        for v in UniformEnv(seed=seed).valuations(1, 400):
            s.step(v)
            if s.t - s.epoch_start == 0:
                continue
            truth = (W(s.c) - W(s.l), W(s.r) - W(s.c), W(s.r) - W(s.l))
            for J, d in zip(s.confidence_intervals(), truth):
                total += 1
                misses += not (J.lower <= d <= J.upper)
    assert misses <= 0.01 * total


def test_no_trim_on_short_horizon():
    run = run_dyadic(DyadicConfig.for_horizon(0.7, 10), UniformEnv(), 10, 0)
    assert run.final == (0.0, 1.0) and len(run.epoch_start) == 1
    empty = replay_dyadic(DyadicConfig(0.7, 0.1), [])
    assert empty.final == (0.0, 1.0) and len(empty.policies) == 0


def test_containment_small_scale():
    lam = 0.7
    x_star = (1 - lam) / (2 - lam)
    cfg = DyadicConfig.for_horizon(lam, 2 * 10**4)
    hits = [run_dyadic(cfg, UniformEnv(), 2 * 10**4, s).final for s in range(40)]
    assert sum(lo <= x_star <= hi for lo, hi in hits) >= 38


def test_concave_family_keeps_maximizer():
    env = ConcaveEnv(lam=0.7, epsilon=0.15)
    x_star = 1 - env.params.h_bar
    cfg = DyadicConfig.for_horizon(0.7, 5 * 10**4)
    runs = [run_dyadic(cfg, env, 5 * 10**4, s).final for s in range(20)]
    assert sum(lo <= x_star <= hi for lo, hi in runs) >= 19


def test_config_validation():
    for lam, delta in [(0.7, 0.0), (0.7, 1.0), (0.0, 0.5), (1.0, 0.5)]:
        with pytest.raises(ValueError):
            DyadicConfig(lam, delta)
    assert DyadicConfig.for_horizon(0.7, 100).delta == pytest.approx(1e-5)
    assert width_decay_constant(0.01) == pytest.approx(72 * math.sqrt(10) * (math.sqrt(2 * math.log(200)) + 4))


def test_deterministic_sequence_env_runs():
    run = replay_dyadic(DyadicConfig(0.5, 0.01), FixedSequenceEnv(tuple([0.6] * 500)).valuations(1, 500))
    assert len(run.policies) == 500
