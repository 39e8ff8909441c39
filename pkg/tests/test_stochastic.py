"""Bridge sampler law, Euler integrator, and Heston simulator checks."""

import math

import numpy as np
import pytest

from tsbridge.errors import ConfigError, DomainError
from tsbridge.stochastic import (
    DEFAULT_HESTON_RANGES,
    HestonParams,
    RandomSource,
    euler_maruyama_step,
    sample_brownian_bridge,
    sample_heston_dataset,
    simulate_heston,
)


class TestBrownianBridge:
    def test_left_endpoint_pins_exactly(self):
        rng = RandomSource(0)
        y = sample_brownian_bridge(np.array([1.5, -2.0]), np.array([3.0, 0.0]), 0.0, 1.0, 0.0, rng)
        np.testing.assert_array_equal(y, [1.5, -2.0])

    def test_midpoint_variance_quarter(self):
        # unit interval, t=0.5: sigma_t^2 = 0.5*0.5/1 = 0.25
        rng = RandomSource(1)
        draws = sample_brownian_bridge(
            np.zeros(200_000), np.zeros(200_000), 0.0, 1.0, 0.5, rng
        )
        var = draws.var()
        se = 0.25 * math.sqrt(2.0 / 200_000)
        assert abs(var - 0.25) < 4 * se

    def test_mean_and_variance_against_closed_form(self):
        n = 100_000
        rng = RandomSource(2)
        t = 0.25
        draws = sample_brownian_bridge(np.zeros(n), np.ones(n), 0.0, 1.0, t, rng)
        mean_true = t
        var_true = t * (1 - t)
        assert abs(draws.mean() - mean_true) < 3 * math.sqrt(var_true / n)
        assert abs(draws.var() - var_true) < 3 * var_true * math.sqrt(2.0 / n)

    def test_domain_check(self):
        rng = RandomSource(3)
        with pytest.raises(DomainError):
            sample_brownian_bridge(np.zeros(1), np.ones(1), 0.0, 1.0, 1.0, rng)
        with pytest.raises(DomainError):
            sample_brownian_bridge(np.zeros(1), np.ones(1), 0.5, 1.0, 0.2, rng)

    @pytest.mark.parametrize("t", [0.25, 0.5, 0.75])
    def test_law_on_generic_interval(self, t):
        n = 100_000
        rng = RandomSource(4)
        t_l, t_r = 2.0, 4.0
        tt = t_l + t * (t_r - t_l)
        left, right = -1.0, 2.0
        draws = sample_brownian_bridge(
            np.full(n, left), np.full(n, right), t_l, t_r, tt, rng
        )
        span = t_r - t_l
        mean_true = (t_r - tt) / span * left + (tt - t_l) / span * right
        var_true = (tt - t_l) * (t_r - tt) / span
        assert abs(draws.mean() - mean_true) < 3 * math.sqrt(var_true / n)
        assert abs(draws.var() - var_true) < 3 * var_true * math.sqrt(2.0 / n)


class TestEulerMaruyama:
    def test_zero_drift_terminal_variance(self):
        # 50 steps over [0, 1]: terminal ~ N(0, 1)
        n_paths, n_steps = 50_000, 50
        rng = RandomSource(5)
        y = np.zeros(n_paths)
        dt = 1.0 / n_steps
        for k in range(n_steps):
            y = euler_maruyama_step(y, k * dt, dt, lambda t, y, c: 0.0, None, rng)
        assert abs(y.var() - 1.0) < 3 * math.sqrt(2.0 / n_paths)

    def test_constant_drift_no_noise(self):
        class ZeroRng:
            def normal(self, size=None):
                return np.zeros(size)

        y = euler_maruyama_step(np.array([1.0]), 0.0, 0.1, lambda t, y, c: 3.0, None, ZeroRng())
        np.testing.assert_allclose(y, [1.3], rtol=1e-12)

    def test_ou_terminal_variance(self):
        # dY = -Y dt + dW from 0: Var(Y_1) = (1 - e^-2)/2
        n_paths, n_steps = 50_000, 50
        rng = RandomSource(6)
        y = np.zeros(n_paths)
        dt = 1.0 / n_steps
        for k in range(n_steps):
            y = euler_maruyama_step(y, k * dt, dt, lambda t, y, c: -y, None, rng)
        target = (1.0 - math.exp(-2.0)) / 2.0
        # allow discretization bias on top of MC error
        assert abs(y.var() - target) < 0.02 * target + 3 * target * math.sqrt(2.0 / n_paths)

    def test_rejects_bad_dt(self):
        with pytest.raises(DomainError):
            euler_maruyama_step(np.zeros(1), 0.0, 0.0, lambda t, y, c: 0.0, None, RandomSource(7))


class TestHeston:
    def test_degenerate_cir_is_constant(self):
        params = HestonParams(kappa=2.0, theta=1.0, xi_vol=1e-12, rho=0.0, r=0.0, v0=1.0)
        path = simulate_heston(params, n_steps=100, dt=1e-3, x0=1.0, rng=RandomSource(8))
        np.testing.assert_allclose(path[:, 1], 1.0, atol=1e-9)

    def test_cir_mean_reversion(self):
        # E[v_t] = theta + (v0 - theta) e^{-kappa t}
        params = HestonParams(kappa=2.0, theta=1.0, xi_vol=0.3, rho=-0.5, r=0.05, v0=0.5)
        n_steps = 252
        dt = 1.0 / 252
        total = 0.0
        n_paths = 100_000
        chunk = 20_000
        rngs = RandomSource(9).spawn(n_paths // chunk)
        from tsbridge.stochastic import _heston_paths

        for child in rngs:
            noise = child.normal(size=(chunk, n_steps, 2))
            paths = _heston_paths(2.0, 1.0, 0.3, -0.5, 0.05, 0.5, 1.0, n_steps, dt, noise)
            total += paths[:, -1, 1].sum()
        mean_v1 = total / n_paths
        target = 1.0 - 0.5 * math.exp(-2.0)
        assert abs(mean_v1 - target) / target < 0.01

    def test_deterministic_growth_at_zero_vol(self):
        params = HestonParams(kappa=1.0, theta=1e-10, xi_vol=1e-12, rho=0.0, r=0.05, v0=1e-10)
        path = simulate_heston(params, n_steps=252, dt=1.0 / 252, x0=1.0, rng=RandomSource(10))
        np.testing.assert_allclose(path[-1, 0], math.exp(0.05), rtol=1e-3)

    def test_sqrt_never_sees_negative(self):
        # xi=0.9 with tiny v0 stresses the truncation; result must stay finite
        params = HestonParams(kappa=0.5, theta=0.5, xi_vol=0.9, rho=0.9 - 1e-9, r=0.1, v0=0.01)
        path = simulate_heston(params, n_steps=500, dt=1.0 / 252, x0=1.0, rng=RandomSource(11))
        assert np.isfinite(path).all()

    def test_brownian_increment_correlation_matches_rho(self):
        rho = -0.7
        kappa, theta, xi, r = 2.0, 1.0, 0.4, 0.05
        from tsbridge.stochastic import _heston_paths

        n_paths, n_steps, dt = 50_000, 8, 1.0 / 252
        noise = RandomSource(12).normal(size=(n_paths, n_steps, 2))
        paths = _heston_paths(kappa, theta, xi, rho, r, 1.0, 1.0, n_steps, dt, noise)
        x, v = paths[:, :-1, 0], np.maximum(paths[:, :-1, 1], 0.0)
        dx = np.diff(paths[:, :, 0], axis=1)
        dv = np.diff(paths[:, :, 1], axis=1)
        dw_x = ((dx - r * x * dt) / (np.sqrt(v) * x * math.sqrt(dt))).reshape(-1)
        dw_v = ((dv - kappa * (theta - v) * dt) / (xi * np.sqrt(v) * math.sqrt(dt))).reshape(-1)
        est = np.corrcoef(dw_x, dw_v)[0, 1]
        assert abs(est - rho) < 3.0 * (1 - rho**2) / math.sqrt(dw_x.size)

    def test_invalid_params_rejected(self):
        with pytest.raises(DomainError):
            HestonParams(kappa=-1.0, theta=1.0, xi_vol=0.1, rho=0.0, r=0.0, v0=1.0)
        with pytest.raises(DomainError):
            HestonParams(kappa=1.0, theta=1.0, xi_vol=0.1, rho=1.0, r=0.0, v0=1.0)

    def test_seed_determinism(self):
        params = HestonParams(kappa=2.0, theta=1.0, xi_vol=0.3, rho=0.2, r=0.05, v0=0.8)
        a = simulate_heston(params, 50, 1.0 / 252, 1.0, RandomSource(13))
        b = simulate_heston(params, 50, 1.0 / 252, 1.0, RandomSource(13))
        np.testing.assert_array_equal(a, b)


class TestHestonDataset:
    def test_default_ranges_respected(self):
        dataset, truths = sample_heston_dataset(50, 20, 1.0 / 252, RandomSource(14))
        assert dataset.values.shape == (50, 20, 2)
        assert dataset.dim_names == ["X", "v"]
        for p in truths:
            for name, (lo, hi) in DEFAULT_HESTON_RANGES.items():
                assert lo <= getattr(p, name) <= hi

    def test_point_ranges_share_params(self):
        ranges = {k: (0.7, 0.7) for k in ("kappa", "theta", "xi_vol")}
        ranges["rho"] = (-0.3, -0.3)
        ranges["r"] = (0.05, 0.05)
        _, truths = sample_heston_dataset(10, 5, 1.0 / 252, RandomSource(15), ranges=ranges)
        assert len({(p.kappa, p.theta, p.xi_vol, p.rho, p.r) for p in truths}) == 1

    def test_invalid_range_rejected(self):
        with pytest.raises(ConfigError):
            sample_heston_dataset(
                5, 5, 1.0 / 252, RandomSource(16), ranges={"kappa": (2.0, 1.0)}
            )
        with pytest.raises(ConfigError):
            sample_heston_dataset(
                5, 5, 1.0 / 252, RandomSource(16), ranges={"bogus": (0.0, 1.0)}
            )

    def test_dataset_determinism(self):
        a, _ = sample_heston_dataset(8, 12, 1.0 / 252, RandomSource(17))
        b, _ = sample_heston_dataset(8, 12, 1.0 / 252, RandomSource(17))
        np.testing.assert_array_equal(a.values, b.values)

    def test_desk_and_paper_shapes(self):
        desk, _ = sample_heston_dataset(20, 50, 1.0 / 252, RandomSource(18))
        assert desk.values.shape == (20, 50, 2)
        assert desk.grid.n_intervals == 49
