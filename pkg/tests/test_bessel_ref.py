"""Tests for the reference radial diffusion and its exit-probability laws."""

import math

import numpy as np
import pytest
from scipy.stats import binomtest

from stochacc import bessel_ref
from stochacc.bessel_ref import (
    BesselParams,
    bessel_exit_time_mc,
    exit_prob_exact,
    mu,
    p_plus,
    simulate_bessel,
    wilson_interval,
)
from stochacc.errors import (
    DegeneratePath,
    InvalidInput,
    InvalidInterval,
    SubcriticalGamma,
)


class TestParams:
    def test_defaults(self):
        p = BesselParams(gamma=1.0)
        assert p.r0 == 1.0
        assert p.dt == 1e-4
        assert p.horizon == 2.0
        assert p.n_steps == 20_000

    @pytest.mark.parametrize("gamma", [0.5, 0.2, -1.0])
    def test_subcritical_gamma_rejected(self, gamma):
        with pytest.raises(SubcriticalGamma):
            BesselParams(gamma=gamma)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"r0": 0.0},
            {"r0": -1.0},
            {"dt": 0.0},
            {"dt": -1e-4},
            {"dt": 3.0},  # exceeds the default horizon
        ],
    )
    def test_bad_numbers_rejected(self, kwargs):
        with pytest.raises(InvalidInput):
            BesselParams(gamma=1.0, **kwargs)


class TestSimulate:
    def test_grid_shape_and_start(self):
        p = BesselParams(gamma=1.0, dt=1e-3, horizon=0.25, r0=2.5)
        path = simulate_bessel(p, 7)
        assert path.shape == (251,)
        assert path[0] == 2.5

    def test_deterministic_per_seed(self):
        p = BesselParams(gamma=0.8, dt=1e-3, horizon=0.1)
        a = simulate_bessel(p, 123)
        b = simulate_bessel(p, 123)
        c = simulate_bessel(p, 124)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_generator_seed_advances(self):
        p = BesselParams(gamma=0.8, dt=1e-3, horizon=0.1)
        g = np.random.default_rng(0)
        a = simulate_bessel(p, g)
        b = simulate_bessel(p, g)
        assert not np.array_equal(a, b)

    def test_paths_stay_positive(self):
        # the proposal floor rejects any step into (or below) zero
        p = BesselParams(gamma=0.51, dt=1e-3, horizon=1.0, r0=0.05)
        lo = min(simulate_bessel(p, k).min() for k in range(20))
        assert lo > 0.0

    def test_subdivided_steps_keep_path_finite(self):
        # large dt with small gamma forces frequent proposals near the
        # floor, so the halving stack is exercised heavily
        p = BesselParams(gamma=0.51, dt=1.0, horizon=300.0, r0=1.0)
        path = simulate_bessel(p, 5)
        assert np.all(np.isfinite(path))
        assert path.min() > 0.0

    def test_strong_drift_never_steps_down_much(self):
        p = BesselParams(gamma=50.0, dt=1e-4, horizon=0.05)
        path = simulate_bessel(p, 42)
        drops = np.diff(path)
        assert drops.min() > -5.0 * math.sqrt(p.dt)

    def test_degenerate_budget_raises(self, monkeypatch):
        monkeypatch.setattr(bessel_ref, "_bessel_path_kernel", lambda *a: 1)
        with pytest.raises(DegeneratePath):
            simulate_bessel(BesselParams(gamma=1.0), 0)

    def test_mean_square_at_unit_horizon(self):
        # E R_T^2 = r0^2 + (2 gamma + 1) T; at gamma=1, T=1 that is 4
        p = BesselParams(gamma=1.0, dt=1e-4, horizon=1.0)
        n_paths = 10_000
        finals = np.empty(n_paths)
        for k in range(n_paths):
            finals[k] = simulate_bessel(p, 900_000 + k)[-1]
        sq = finals**2
        se = sq.std(ddof=1) / math.sqrt(n_paths)
        assert abs(sq.mean() - 4.0) <= 3.0 * se

    @pytest.mark.parametrize("gamma", [0.75, 1.0, 2.0])
    def test_mean_square_growth_slope(self, gamma):
        p = BesselParams(gamma=gamma, dt=1e-3, horizon=1.0)
        n_paths = 3000
        acc = np.zeros(p.n_steps + 1)
        for k in range(n_paths):
            acc += simulate_bessel(p, 50_000 + k) ** 2
        mean_sq = acc / n_paths
        t = np.arange(p.n_steps + 1) * p.dt
        slope = np.polyfit(t, mean_sq, 1)[0]
        target = 2.0 * gamma + 1.0
        assert abs(slope - target) <= 0.05 * target

    @pytest.mark.parametrize("gamma", [1.0, 2.0])
    def test_power_transform_stopped_at_barriers_is_conserved(self, gamma):
        # R^(1 - 2 gamma) is the scale function; stopped at the first exit
        # from (1/2, 2) it is a bounded martingale, so its mean stays at
        # r0^(1 - 2 gamma) = 1.  (Unstopped it is only a local martingale
        # and its mean genuinely decays, so the stopped form is the one
        # that admits a clean statistical check.)
        p = BesselParams(gamma=gamma, dt=4e-5)
        n_paths = 10_000
        stats = bessel_exit_time_mc(p, 0.5, 2.0, n_paths, 300_000)
        power = 1.0 - 2.0 * gamma
        hi, lo = 2.0**power, 0.5**power
        phat = stats.prob_upper
        mean_m = phat * hi + (1.0 - phat) * lo
        se = abs(hi - lo) * math.sqrt(phat * (1.0 - phat) / n_paths)
        assert abs(mean_m - 1.0) <= 4.0 * se


class TestExitProbExact:
    def test_symmetric_doubling_value(self):
        assert exit_prob_exact(1.0, 0.5, 2.0) == pytest.approx(2.0 / 3.0, abs=1e-15)

    def test_upper_barrier_at_start_gives_one(self):
        assert exit_prob_exact(1.3, 0.5, 1.0 + 1e-12) == pytest.approx(1.0, abs=1e-9)

    def test_far_upper_barrier_limit(self):
        # as a_plus grows the value tends to 1 - a_minus^(2 gamma - 1)
        assert exit_prob_exact(1.0, 0.5, 1e12) == pytest.approx(0.5, abs=1e-9)

    def test_monotone_in_gamma(self):
        grid = np.linspace(0.5001, 10.0, 200)
        vals = [exit_prob_exact(g, 0.5, 2.0) for g in grid]
        assert np.all(np.diff(vals) > 0.0)

    @pytest.mark.parametrize("gamma", [0.5, 0.25, -2.0])
    def test_subcritical_rejected(self, gamma):
        with pytest.raises(SubcriticalGamma):
            exit_prob_exact(gamma, 0.5, 2.0)

    @pytest.mark.parametrize(
        "a_minus,a_plus",
        [(1.0, 2.0), (0.0, 2.0), (-0.5, 2.0), (0.5, 1.0), (0.5, 0.9), (1.5, 2.0)],
    )
    def test_bad_interval_rejected(self, a_minus, a_plus):
        with pytest.raises(InvalidInterval):
            exit_prob_exact(1.0, a_minus, a_plus)


class TestLevelWalkConstants:
    def test_symmetric_case(self):
        assert p_plus(1.0) == pytest.approx(2.0 / 3.0, abs=1e-15)
        assert mu(1.0) == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_critical_limit_is_a_fair_coin(self):
        assert abs(p_plus(0.5001) - 0.5) < 1e-3
        assert abs(mu(0.5001)) < 2e-3

    def test_strong_drift_limit(self):
        assert abs(p_plus(10.0) - 1.0) < 1e-5

    def test_agrees_with_exit_prob_on_grid(self):
        for g in np.linspace(0.5001, 10.0, 97):
            assert abs(p_plus(g) - exit_prob_exact(g, 0.5, 2.0)) <= 1e-14

    def test_always_favors_up(self):
        for g in np.linspace(0.5001, 10.0, 97):
            assert 0.5 < p_plus(g) < 1.0

    def test_subcritical_rejected(self):
        with pytest.raises(SubcriticalGamma):
            p_plus(0.5)
        with pytest.raises(SubcriticalGamma):
            mu(0.3)


class TestWilsonInterval:
    def test_matches_scipy(self):
        for s, n in [(3, 10), (0, 50), (50, 50), (333, 1000)]:
            lo, hi = wilson_interval(s, n)
            ref = binomtest(s, n).proportion_ci(confidence_level=0.99, method="wilson")
            assert lo == pytest.approx(ref.low, abs=1e-12)
            assert hi == pytest.approx(ref.high, abs=1e-12)

    def test_contains_point_estimate(self):
        lo, hi = wilson_interval(7, 20)
        assert lo < 7 / 20 < hi

    def test_empty_rejected(self):
        with pytest.raises(InvalidInput):
            wilson_interval(0, 0)


class TestExitTimeMc:
    def test_start_outside_barriers_rejected(self):
        p = BesselParams(gamma=1.0)
        with pytest.raises(InvalidInterval):
            bessel_exit_time_mc(p, 1.5, 2.0, 10, 0)
        with pytest.raises(InvalidInterval):
            bessel_exit_time_mc(p, 0.5, 0.9, 10, 0)

    def test_needs_paths(self):
        with pytest.raises(InvalidInput):
            bessel_exit_time_mc(BesselParams(gamma=1.0), 0.5, 2.0, 0, 0)

    def test_unpacks_as_documented_triple(self):
        stats = bessel_exit_time_mc(BesselParams(gamma=1.0), 0.9, 1.1, 200, 3)
        prob, mean_t, ci = stats
        assert prob == stats.prob_upper
        assert mean_t == stats.mean_exit_time
        assert ci == stats.ci
        assert stats.ci[0] <= stats.prob_upper <= stats.ci[1]

    def test_deterministic_per_seed(self):
        p = BesselParams(gamma=1.0)
        a = bessel_exit_time_mc(p, 0.8, 1.25, 300, 11)
        b = bessel_exit_time_mc(p, 0.8, 1.25, 300, 11)
        assert a.prob_upper == b.prob_upper
        assert a.mean_exit_time == b.mean_exit_time

    def test_tight_barriers_exit_immediately(self):
        p = BesselParams(gamma=1.0)
        stats = bessel_exit_time_mc(p, 0.999, 1.001, 500, 21)
        assert stats.mean_exit_time < 10.0 * p.dt

    def test_probability_matches_closed_form(self):
        p = BesselParams(gamma=1.0, dt=4e-5)
        n_paths = 6000
        stats = bessel_exit_time_mc(p, 0.5, 2.0, n_paths, 99)
        target = exit_prob_exact(1.0, 0.5, 2.0)
        sigma = math.sqrt(target * (1.0 - target) / n_paths)
        assert abs(stats.prob_upper - target) <= 3.0 * sigma
        assert stats.n_degenerate == 0
        assert stats.n_censored == 0

    def test_exit_time_tail_is_nontrivial(self):
        p = BesselParams(gamma=1.0, dt=4e-5)
        stats = bessel_exit_time_mc(p, 0.5, 2.0, 2000, 17)
        tail = float(np.mean(stats.exit_times > 0.1))
        assert 0.0 < tail < 1.0

    def test_degenerate_paths_are_counted_and_excluded(self, monkeypatch):
        def fake_kernel(master, stream, r0, gamma, dt, lo, hi, cap):
            if stream % 2 == 0:
                return 2, 0.0
            return 1, 0.5

        monkeypatch.setattr(bessel_ref, "_bessel_exit_kernel", fake_kernel)
        stats = bessel_exit_time_mc(BesselParams(gamma=1.0), 0.5, 2.0, 100, 0)
        assert stats.n_degenerate == 50
        assert stats.prob_upper == 1.0
        assert stats.mean_exit_time == 0.5
        assert len(stats.exit_times) == 50

    def test_all_degenerate_raises(self, monkeypatch):
        monkeypatch.setattr(
            bessel_ref, "_bessel_exit_kernel", lambda *a: (2, 0.0)
        )
        with pytest.raises(DegeneratePath):
            bessel_exit_time_mc(BesselParams(gamma=1.0), 0.5, 2.0, 10, 0)
