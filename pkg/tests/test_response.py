"""Response curves, recovery times, implied shocks, and the forecaster."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from ioresponse.dynamics import ShockProfile, equilibrium_output, simulate_trajectory
from ioresponse.errors import GridMismatch, IllConditioned
from ioresponse.iodata import IOTable, NoiseSpec, noise_covariance
from ioresponse.response import (
    RECOVERY_EPS,
    fluctuation_panel_regression,
    fluctuation_prediction,
    general_response,
    implied_shock,
    impulse_response,
    impulse_response_monte_carlo,
    lrt_forecast,
    recovery_time,
    response_grid,
    step_response,
)
from ioresponse.susceptibility import SimulationBudget, truncated_susceptibility

from conftest import build_panel, random_economy


@pytest.fixture(scope="module")
def decoupled():
    return IOTable.from_coefficients(
        "AAA", 2000, ["S1", "S2"], np.zeros((2, 2)), [1.0, 1.0]
    )


class TestImpulse:
    def test_zero_lag_equals_shock(self, two_sector_table):
        x = np.array([0.7, -0.2])
        curve = impulse_response(two_sector_table, x, response_grid(2.0, 0.5))
        np.testing.assert_array_equal(curve.values[0], x)

    def test_decoupled_exponential_decay(self, decoupled):
        grid = response_grid(5.0, 0.25)
        curve = impulse_response(decoupled, np.array([1.0, 0.0]), grid)
        np.testing.assert_allclose(curve.values[:, 0], np.exp(-grid), rtol=1e-12)
        np.testing.assert_array_equal(curve.values[:, 1], np.zeros(len(grid)))

    def test_decay_to_zero(self, two_sector_table):
        curve = impulse_response(
            two_sector_table, np.array([1.0, 1.0]), np.array([0.0, 100.0])
        )
        assert np.max(np.abs(curve.values[-1])) < 1e-12

    def test_area_under_curve_is_infinite_horizon_step_limit(self, two_sector_table):
        x = np.array([1.0, 0.5])
        grid = response_grid(80.0, 0.01)
        curve = impulse_response(two_sector_table, x, grid)
        area = np.trapezoid(curve.values, grid, axis=0)
        limit = np.linalg.solve(np.eye(2) - two_sector_table.coefficients, x)
        np.testing.assert_allclose(area, limit, rtol=1e-4)

    def test_superposition_and_scaling_exact(self, two_sector_table):
        grid = response_grid(3.0, 0.5)
        x1 = np.array([1.0, 0.0])
        x2 = np.array([0.0, 2.0])
        c1 = impulse_response(two_sector_table, x1, grid)
        c2 = impulse_response(two_sector_table, x2, grid)
        both = impulse_response(two_sector_table, x1 + x2, grid)
        np.testing.assert_allclose(both.values, c1.values + c2.values, atol=1e-13)
        scaled = impulse_response(two_sector_table, 3.0 * x1, grid)
        np.testing.assert_allclose(scaled.values, 3.0 * c1.values, rtol=1e-13)


class TestStep:
    def test_starts_at_zero(self, two_sector_table):
        curve = step_response(two_sector_table, np.array([1.0, 1.0]), response_grid(1.0, 0.5))
        np.testing.assert_array_equal(curve.values[0], [0.0, 0.0])

    def test_scalar_leontief_limit(self):
        table = IOTable.from_coefficients("AAA", 2000, ["S1"], [[0.5]], [1.0])
        curve = step_response(table, np.array([1.0]), np.array([0.0, 200.0]))
        np.testing.assert_allclose(curve.values[-1], [2.0], rtol=1e-12)

    def test_two_sector_infinite_limit_is_leontief_column(self, two_sector_table):
        curve = step_response(
            two_sector_table, np.array([1.0, 0.0]), np.array([0.0, 200.0])
        )
        np.testing.assert_allclose(
            curve.values[-1], [10.0 / 9.0, 2.0 / 9.0], rtol=1e-12
        )

    def test_grid_point_matches_truncated_susceptibility_bitwise(self, two_sector_table):
        x = np.array([0.3, 1.1])
        grid = np.array([0.0, 0.7, 1.9, 4.2])
        curve = step_response(two_sector_table, x, grid)
        for k, t in enumerate(grid[1:], start=1):
            expected = truncated_susceptibility(two_sector_table.coefficients, t) @ x
            np.testing.assert_array_equal(curve.values[k], expected)


class TestGeneralResponse:
    def test_tabulated_step_matches_closed_form(self, two_sector_table):
        x = np.array([1.0, -0.5])
        dt = 1e-3
        times = dt * np.arange(int(3.0 / dt) + 1)
        shock = ShockProfile.tabulated(times, np.tile(x, (len(times), 1)))
        grid = np.array([0.0, 1.0, 2.0, 3.0])
        curve = general_response(two_sector_table, shock, grid)
        exact = step_response(two_sector_table, x, grid)
        np.testing.assert_allclose(curve.values[1:], exact.values[1:], rtol=1e-6)

    def test_zero_profile_is_zero(self, two_sector_table):
        times = np.linspace(0.0, 2.0, 21)
        shock = ShockProfile.tabulated(times, np.zeros((21, 2)))
        curve = general_response(two_sector_table, shock, np.array([0.0, 1.0, 2.0]))
        assert not curve.values.any()

    def test_superposition_of_profiles(self, two_sector_table):
        rng = np.random.default_rng(5)
        times = np.linspace(0.0, 2.0, 41)
        v1 = rng.normal(size=(41, 2))
        v2 = rng.normal(size=(41, 2))
        grid = np.array([0.0, 0.5, 1.0, 2.0, 3.0])
        c1 = general_response(two_sector_table, ShockProfile.tabulated(times, v1), grid)
        c2 = general_response(two_sector_table, ShockProfile.tabulated(times, v2), grid)
        both = general_response(
            two_sector_table, ShockProfile.tabulated(times, v1 + v2), grid
        )
        np.testing.assert_allclose(both.values, c1.values + c2.values, atol=1e-12)

    def test_grid_mismatch(self, two_sector_table):
        times = np.array([0.0, 1.0, 2.0])
        shock = ShockProfile.tabulated(times, np.ones((3, 2)))
        with pytest.raises(GridMismatch):
            general_response(two_sector_table, shock, np.array([0.0, 0.5]))

    def test_free_decay_after_profile_end(self, two_sector_table):
        times = np.array([0.0, 0.5, 1.0])
        shock = ShockProfile.tabulated(times, np.ones((3, 2)))
        curve = general_response(two_sector_table, shock, np.array([0.0, 1.0, 30.0]))
        assert np.max(np.abs(curve.values[2])) < 1e-7
        assert np.max(np.abs(curve.values[1])) > 0.1


class TestRecovery:
    def test_decoupled_unit_impulse_recovers_at_one_year(self, decoupled):
        grid = response_grid(5.0, 0.1)
        curve = impulse_response(decoupled, np.array([1.0, 1.0]), grid)
        times = recovery_time(curve, eps=np.exp(-1.0))
        np.testing.assert_allclose(times, [1.0, 1.0])

    def test_zero_curve_recovers_immediately(self, decoupled):
        curve = impulse_response(decoupled, np.array([0.0, 0.0]), response_grid(1.0, 0.5))
        # an all-zero shock gives an all-zero threshold and an all-zero curve
        np.testing.assert_array_equal(recovery_time(curve, eps=0.05), [0.0, 0.0])

    def test_never_recovered_is_inf(self, decoupled):
        curve = impulse_response(decoupled, np.array([1.0, 1.0]), response_grid(0.5, 0.1))
        times = recovery_time(curve, eps=0.05)
        assert np.all(np.isinf(times))

    def test_unshocked_sector_uses_shock_norm(self, two_sector_table):
        grid = response_grid(60.0, 0.05)
        curve = impulse_response(two_sector_table, np.array([1.0, 0.0]), grid)
        times = recovery_time(curve, eps=RECOVERY_EPS)
        assert np.all(np.isfinite(times))
        assert times[1] > 0.0  # spillover sector measured against ||X||_inf


class TestImpliedShock:
    def test_zero_change_zero_shock(self, two_sector_table):
        y = two_sector_table.output
        shock = implied_shock(two_sector_table, y, y)
        np.testing.assert_array_equal(shock.values, [0.0, 0.0])

    def test_decoupled_componentwise_formula(self, decoupled):
        y = decoupled.output
        delta = np.array([0.3, -0.1])
        shock = implied_shock(decoupled, y, y + delta)
        np.testing.assert_allclose(
            shock.values, delta / (1.0 - np.exp(-1.0)), rtol=1e-12
        )

    def test_forward_map_round_trip(self):
        table = random_economy(6, seed=40)
        rng = np.random.default_rng(41)
        x = rng.normal(size=6)
        rho1 = truncated_susceptibility(table.coefficients, 1.0)
        delta = rho1 @ x
        shock = implied_shock(table, table.output, table.output + delta)
        np.testing.assert_allclose(shock.values, x, rtol=1e-8)
        np.testing.assert_allclose(rho1 @ shock.values, delta, rtol=1e-8)

    def test_condition_cap_and_ridge(self, two_sector_table):
        y = two_sector_table.output
        delta = np.array([0.1, 0.1])
        with pytest.raises(IllConditioned):
            implied_shock(two_sector_table, y, y + delta, condition_cap=1.0)
        shock = implied_shock(
            two_sector_table, y, y + delta, condition_cap=1.0, ridge=1e-8
        )
        rho1 = truncated_susceptibility(two_sector_table.coefficients, 1.0)
        np.testing.assert_allclose(rho1 @ shock.values, delta, rtol=1e-5)


class TestForecast:
    def test_no_change_forecasts_no_change(self, two_sector_table):
        y = two_sector_table.output
        np.testing.assert_allclose(lrt_forecast(two_sector_table, y, y), y)

    def test_decoupled_closed_form(self, decoupled):
        y = decoupled.output
        delta = np.array([0.5, -0.2])
        forecast = lrt_forecast(decoupled, y, y + delta)
        factor = (1.0 - np.exp(-2.0)) / (1.0 - np.exp(-1.0))
        np.testing.assert_allclose(forecast, y + factor * delta, rtol=1e-12)

    def test_intermediate_year_reproduced_exactly(self):
        table = random_economy(5, seed=50)
        rng = np.random.default_rng(51)
        y_t = table.output
        y_t1 = y_t * (1.0 + rng.normal(0.0, 0.05, size=5))
        shock = implied_shock(table, y_t, y_t1)
        rho1 = truncated_susceptibility(table.coefficients, 1.0)
        reconstructed = y_t + rho1 @ shock.values
        np.testing.assert_allclose(reconstructed, y_t1, rtol=1e-10)

    def test_matches_noiseless_step_simulation(self):
        table = random_economy(4, seed=60)
        rng = np.random.default_rng(61)
        x = rng.normal(0.0, 0.1, size=4) * table.output
        y0 = equilibrium_output(table.coefficients, table.demand)
        rho = truncated_susceptibility
        y_t1 = y0 + rho(table.coefficients, 1.0) @ x
        forecast = lrt_forecast(table, y0, y_t1)
        traj = simulate_trajectory(
            table, np.zeros((4, 4)), ShockProfile.step(x),
            dt=4e-5, horizon=2.0, burn_in=0.0,
        )
        scale = np.max(np.abs(traj.states[-1]))
        assert np.max(np.abs(forecast - traj.states[-1])) < 1e-6 * scale
        exact = y0 + rho(table.coefficients, 2.0) @ x
        np.testing.assert_allclose(forecast, exact, rtol=1e-10)


class TestFluctuation:
    def test_identity_susceptibility_prediction_proportional_to_output(self, decoupled):
        pred = fluctuation_prediction(decoupled, horizon=math.inf)
        np.testing.assert_allclose(pred, decoupled.output, rtol=1e-12)

    def test_panel_regression_fields(self):
        panel = build_panel(n_countries=3, years=(2000, 2006), n_sectors=4, seed=9)
        reg = fluctuation_panel_regression(panel)
        assert reg.base_year == 2000
        assert len(reg.predictor) == 3 * 4
        assert -1.0 <= reg.r <= 1.0
        assert -1.0 <= reg.r_with_size_control <= 1.0
        assert np.isfinite(reg.eta)

    def test_absolute_change_variant(self):
        panel = build_panel(n_countries=3, years=(2000, 2006), n_sectors=4, seed=9)
        signed = fluctuation_panel_regression(panel)
        absolute = fluctuation_panel_regression(panel, absolute=True)
        assert np.all(absolute.observed >= signed.observed - 1e-12)
        assert np.all(absolute.observed >= 0.0)


class TestWiodExamples:
    def test_usa_2014_slowest_large_sector_recovers_in_six_to_ten_years(
        self, wiod_file
    ):
        from ioresponse.iodata import parse_io_table

        table = parse_io_table(wiod_file, "USA", 2014, clip_negative_flows=True)
        grid = response_grid(15.0, 0.01)
        curve = impulse_response(table, np.ones(table.n_sectors), grid)
        times = recovery_time(curve, eps=RECOVERY_EPS)
        largest = np.argsort(-table.output)[:30]
        slowest = float(np.max(times[largest]))
        assert 6.0 <= slowest <= 10.0


class TestMonteCarloCurve:
    def test_agrees_with_analytic_within_three_se(self):
        table = random_economy(4, seed=70)
        nu = noise_covariance(NoiseSpec.output_proportional(0.02), table)
        x = np.array([1.0, 0.0, -0.5, 0.25])
        budget = SimulationBudget(dt=0.01, length=800.0, replicas=8, seed=71)
        mc = impulse_response_monte_carlo(table, x, nu, 2.0, budget)
        exact = impulse_response(table, x, mc.grid)
        gap = np.abs(mc.values - exact.values)
        assert np.all(gap < 3.0 * mc.standard_errors + 1e-9)
        assert mc.provenance == "monte_carlo"
