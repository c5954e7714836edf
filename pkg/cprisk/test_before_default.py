"""Before-default solver: Merton benchmark, driver maximisation, Howard iteration, log closed form."""

from __future__ import annotations

import math

import numpy as np
import pytest

from cprisk import before_default
from cprisk.before_default import (
    SolverConfig,
    ValuePolicySolution,
    driver_derivative,
    driver_objective,
    maximize_driver,
    merton_constrained,
    merton_value,
    solve,
    solve_howard,
    solve_log,
    strategy_bounds,
    time_average_strategy,
)
from cprisk.errors import ModelValidationError, SolverError
from cprisk.after_default import log_kp
from cprisk.model import DefaultLaw, MarketSpec, Utility


def market(gamma: float) -> MarketSpec:
    return MarketSpec.reference(mu_F=0.03, sigma_F=0.1, gamma=gamma, T=1.0)


# ---- Merton benchmark ----


@pytest.mark.parametrize(
    "u, gamma, expected",
    [(Utility.power(0.2), 0.5, 2.00), (Utility.power(-0.2), 0.01, 2.50), (Utility.log(), 0.8, 1.25), (Utility.power(0.2), 0.1, 3.75)],
)
def test_merton_constrained_proportion(u, gamma, expected):
    assert merton_constrained(market(gamma), u).pi == pytest.approx(expected, abs=1e-12)


def test_merton_multiplier():
    u = Utility.power(0.2)
    bench = merton_constrained(market(0.1), u, np.array([0.0, 0.5, 1.0]))
    rate = 0.03 * 3.75 - 0.5 * 0.8 * 0.01 * 3.75**2
    assert bench.rate == pytest.approx(rate, abs=1e-15)
    np.testing.assert_allclose(bench.y, np.exp(0.2 * rate * np.array([1.0, 0.5, 0.0])), rtol=1e-15)
    log_bench = merton_constrained(market(0.1), Utility.log(), np.array([0.0, 1.0]))
    np.testing.assert_array_equal(log_bench.y, [1.0, 1.0])


def test_merton_value_log():
    bench = merton_constrained(market(0.5), Utility.log())
    assert merton_value(market(0.5), Utility.log(), 0.0, math.e) == pytest.approx(1.0 + bench.rate, abs=1e-15)


# ---- driver maximisation ----


def _objective_gap(pi, ref, gamma, p, y, kp):
    """F(pi) - F(ref) without cancellation (mu=0.03, sigma=0.1)."""
    d = pi - ref
    growth = (0.03 * d - 0.5 * (1.0 - p) * 0.01 * d * (pi + ref)) * y
    base = 1.0 - ref * gamma
    jump = kp * base**p * np.expm1(p * np.log1p(-d * gamma / base)) / p
    return growth + jump


def test_driver_closed_form_without_jump_exposure():
    spec = MarketSpec.reference(gamma=0.0)
    pi, _ = maximize_driver(spec, DefaultLaw.exponential(0.1), Utility.power(0.2), 0.3, 0.9)
    assert pi == pytest.approx(3.75, abs=1e-12)


@pytest.mark.slow
def test_driver_maximiser_matches_grid_scan():
    rng = np.random.default_rng(20240601)
    for _ in range(100):
        p = float(rng.choice([-1, 1]) * rng.uniform(0.05, 0.5))
        gamma = float(rng.uniform(0.01, 0.8))
        lam = float(rng.uniform(0.01, 0.3))
        t = float(rng.uniform(0.0, 1.0))
        y = float(rng.uniform(0.5, 1.5))
        spec, law, u = market(gamma), DefaultLaw.exponential(lam), Utility.power(p)

        pi_star, _ = maximize_driver(spec, law, u, t, y)
        lower, upper = strategy_bounds(spec, law, u, t, y)
        assert lower - 1e-12 <= pi_star <= upper + 1e-12
        assert pi_star < 1.0 / gamma

        kp = math.exp(log_kp(spec, law, u, t))
        hi = min(upper, (1.0 - 1e-12) / gamma)
        lo = lower - 0.05 * (hi - lower) - 1e-3
        scan = np.linspace(lo, hi, 1_000_001)
        coarse = scan[np.argmax(driver_objective(scan, 0.03, 0.1, gamma, p, y, kp))]
        width = 2 * (scan[1] - scan[0]) + 2e-6
        fine = np.linspace(max(lo, coarse - width), min(hi, coarse + width), 1_000_001)
        best = fine[np.argmax(_objective_gap(fine, coarse, gamma, p, y, kp))]
        assert abs(pi_star - best) < 1e-6


def test_driver_rejects_log_utility():
    with pytest.raises(ValueError):
        maximize_driver(market(0.1), DefaultLaw.exponential(0.1), Utility.log(), 0.5, 1.0)


# ---- Howard iteration ----


def test_table_cell_power_positive():
    sol = solve_howard(market(0.1), DefaultLaw.exponential(0.01), Utility.power(0.2))
    assert time_average_strategy(sol) == pytest.approx(3.57, abs=0.02)


def test_table_cell_power_negative_short_position():
    sol = solve_howard(market(0.5), DefaultLaw.exponential(0.1), Utility.power(-0.2))
    assert time_average_strategy(sol) == pytest.approx(-0.58, abs=0.02)


def test_table_cell_large_loss():
    sol = solve_howard(market(0.8), DefaultLaw.exponential(0.01), Utility.power(0.2))
    assert time_average_strategy(sol) == pytest.approx(0.91, abs=0.02)


def test_no_default_reduces_to_merton():
    sol = solve_howard(market(0.1), DefaultLaw.exponential(0.0), Utility.power(0.2))
    np.testing.assert_allclose(sol.Y, sol.Y_merton, atol=1e-10)
    np.testing.assert_allclose(sol.pi, sol.pi_merton, atol=1e-10)


def test_solution_invariants():
    law = DefaultLaw.exponential(0.05)
    sol = solve_howard(market(0.5), law, Utility.power(0.2))
    assert sol.Y[-1] == law.survival(1.0)
    assert np.all(sol.Y > 0)
    assert np.all(np.diff(sol.Y) < 0)
    assert np.all(sol.pi_lower <= sol.pi + 1e-12)
    assert np.all(sol.pi <= sol.pi_upper + 1e-12)
    assert np.all(sol.pi_upper <= 1.0 / 0.5)
    assert np.all(sol.pi <= sol.pi_merton + 1e-12)
    assert np.all(sol.Y <= sol.Y_merton)


@pytest.mark.parametrize(
    "gamma, lam, expected",
    [(0.5, 0.01, 1.22), (0.8, 0.01, 0.70), (0.5, 0.05, 0.18), (0.5, 0.1, -0.58), (0.5, 0.3, -2.40)],
)
def test_capped_negative_exponent_cells(gamma, lam, expected):
    # Merton proportion min(2.5, 1/gamma) is capped for these columns.
    sol = solve_howard(market(gamma), DefaultLaw.exponential(lam), Utility.power(-0.2))
    assert np.all(np.isfinite(sol.Y)) and np.all(sol.Y > 0)
    assert np.all(sol.pi * gamma < 1.0)
    assert time_average_strategy(sol) == pytest.approx(expected, abs=0.02)


@pytest.mark.parametrize("p, gamma, lam", [(0.2, 0.5, 0.1), (-0.2, 0.5, 0.1), (-0.2, 0.8, 0.01)])
def test_first_order_condition_holds(p, gamma, lam):
    sol = solve_howard(market(gamma), DefaultLaw.exponential(lam), Utility.power(p))
    kp = np.exp(sol.log_kp)
    slope = driver_derivative(sol.pi, 0.03, 0.1, gamma, p, sol.Y, kp)
    slope_lower = driver_derivative(sol.pi_lower, 0.03, 0.1, gamma, p, sol.Y, kp)
    assert np.all(np.abs(slope) <= 1e-9 * (1.0 + np.abs(slope_lower)))


def test_every_iterate_stays_in_bracket(monkeypatch):
    calls = []
    original = before_default.maximize_driver_kernel

    def recording(mu, sigma, gamma, p, y, kp, *args):
        pi, objective = original(mu, sigma, gamma, p, y, kp, *args)
        lower, upper = before_default.driver_bounds(mu, sigma, gamma, p, y, kp)
        calls.append((pi, lower, upper))
        return pi, objective

    monkeypatch.setattr(before_default, "maximize_driver_kernel", recording)
    sol = solve_howard(market(0.5), DefaultLaw.exponential(0.1), Utility.power(-0.2))
    assert len(calls) == sol.iterations
    for pi, lower, upper in calls:
        assert np.all(lower - 1e-12 * (1.0 + np.abs(lower)) <= pi)
        assert np.all(pi <= upper + 1e-12)
        assert np.all(pi * 0.5 < 1.0)


def test_howard_values_improve_monotonically():
    for p in (0.2, -0.2):
        sol = solve_howard(market(0.5), DefaultLaw.exponential(0.1), Utility.power(p))
        improvements = np.diff(np.asarray(sol.value_history) / p)
        assert np.all(improvements >= -1e-12)
        assert sol.iterations >= 2


def test_unconstrained_exposure_gives_merton_strategy():
    sol = solve_howard(MarketSpec.reference(gamma=0.0), DefaultLaw.exponential(0.1), Utility.power(0.2))
    np.testing.assert_allclose(sol.pi, 3.75, atol=1e-12)


def test_tiny_loss_approaches_merton():
    sol = solve_howard(MarketSpec.reference(gamma=1e-6), DefaultLaw.exponential(0.1), Utility.power(0.2))
    assert abs(time_average_strategy(sol) - 3.75) < 1e-3


def test_grid_refinement_is_stable():
    law, u = DefaultLaw.exponential(0.1), Utility.power(0.2)
    coarse = solve_howard(market(0.5), law, u, SolverConfig(n_steps=500))
    fine = solve_howard(market(0.5), law, u, SolverConfig(n_steps=1000))
    assert coarse.Y[0] == pytest.approx(fine.Y[0], abs=1e-10)


def test_gamma_monotonicity():
    law, u = DefaultLaw.exponential(0.01), Utility.power(0.2)
    averages = [time_average_strategy(solve_howard(market(g), law, u)) for g in (0.01, 0.1, 0.5, 0.8)]
    assert all(a >= b for a, b in zip(averages, averages[1:]))


def test_lambda_monotonicity():
    u = Utility.power(-0.2)
    averages = [
        time_average_strategy(solve_howard(market(0.5), DefaultLaw.exponential(lam), u))
        for lam in (0.01, 0.05, 0.1, 0.3)
    ]
    assert all(a >= b for a, b in zip(averages, averages[1:]))


@pytest.mark.parametrize("p", [1e-4, -1e-4])
def test_small_exponent_approaches_log_solution(p):
    law = DefaultLaw.exponential(0.01)
    power_avg = time_average_strategy(solve_howard(market(0.1), law, Utility.power(p)))
    log_avg = time_average_strategy(solve_log(market(0.1), law))
    assert power_avg == pytest.approx(log_avg, abs=5e-3)


def test_iteration_cap_raises_solver_error():
    cfg = SolverConfig(max_howard_iters=1, howard_tol=1e-14)
    with pytest.raises(SolverError) as exc:
        solve_howard(market(0.5), DefaultLaw.exponential(0.1), Utility.power(0.2), cfg)
    assert exc.value.iterations == 1


def test_invalid_solver_config():
    with pytest.raises(ModelValidationError, match="n_steps"):
        solve_howard(market(0.1), DefaultLaw.exponential(0.1), Utility.power(0.2), SolverConfig(n_steps=1))


def test_inadmissible_model_rejected_before_solving():
    with pytest.raises(ModelValidationError):
        solve_howard(market(1.0), DefaultLaw.exponential(0.1), Utility.power(0.2))


def test_value_scales_terminal_utility():
    sol = solve_howard(market(0.1), DefaultLaw.exponential(0.05), Utility.power(0.2))
    assert sol.value(2.0) == pytest.approx(2.0**0.2 / 0.2 * sol.Y[0], rel=1e-14)


def test_tabulated_law_solves():
    law = DefaultLaw.tabulated([0.0, 0.25, 0.5, 0.75, 1.0], [0.02, 0.04, 0.06, 0.04, 0.02])
    sol = solve_howard(MarketSpec.constant_after(0.03, 0.1, 0.2, 0.02, 0.15), law, Utility.power(0.2))
    assert sol.Y[-1] == pytest.approx(0.96, abs=1e-15)
    assert np.all(sol.pi <= sol.pi_merton + 1e-12)


# ---- log utility ----


def test_log_exact_short_position():
    sol = solve_log(market(0.5), DefaultLaw.exponential(0.3))
    np.testing.assert_allclose(sol.pi, -3.0, atol=1e-12)


def test_log_zero_position():
    sol = solve_log(market(0.1), DefaultLaw.exponential(0.3))
    np.testing.assert_allclose(sol.pi, 0.0, atol=1e-12)


def test_log_table_cell():
    sol = solve_log(market(0.1), DefaultLaw.exponential(0.01))
    assert time_average_strategy(sol) == pytest.approx(2.86, abs=0.02)
    law = DefaultLaw.exponential(0.01)
    np.testing.assert_allclose(sol.Y, law.survival(sol.grid), rtol=0, atol=0)


def test_log_zero_density_hits_constraint():
    law = DefaultLaw.tabulated([0.0, 0.5], [0.2, 0.2])
    sol = solve_log(market(0.5), law)
    tail = sol.grid > 0.5
    np.testing.assert_allclose(sol.pi[tail], 2.0, atol=1e-12)


def test_log_bounds_contain_strategy():
    sol = solve_log(market(0.5), DefaultLaw.exponential(0.1))
    assert np.all(sol.pi_lower <= sol.pi + 1e-12)
    assert np.all(sol.pi <= sol.pi_upper + 1e-12)


def test_solve_dispatches_on_utility():
    law = DefaultLaw.exponential(0.05)
    assert solve(market(0.1), law, Utility.log()).utility.is_log
    assert not solve(market(0.1), law, Utility.power(0.2)).utility.is_log


# ---- time averaging and output ----


def _manual_solution(grid: np.ndarray, pi: np.ndarray) -> ValuePolicySolution:
    ones = np.ones_like(grid)
    return ValuePolicySolution(
        grid=grid,
        Y=ones,
        pi=pi,
        pi_lower=pi,
        pi_upper=pi,
        Y_merton=ones,
        pi_merton=pi,
        log_kp=np.zeros_like(grid),
        utility=Utility.power(0.2),
    )


def test_time_average_of_linear_policy():
    grid = np.linspace(0.0, 1.0, 1001)
    assert time_average_strategy(_manual_solution(grid, grid.copy())) == pytest.approx(0.5, abs=1e-6)


def test_solution_frame_columns():
    sol = solve_log(market(0.1), DefaultLaw.exponential(0.01), SolverConfig(n_steps=10))
    frame = sol.to_frame()
    assert list(frame.columns) == ["t", "Y", "pi_hat", "pi_lower", "pi_upper", "Y_merton", "pi_merton", "log_kp"]
    assert len(frame) == 11
