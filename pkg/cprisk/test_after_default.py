"""After-default closed forms."""

from __future__ import annotations

import math

import numpy as np
import pytest

from cprisk.after_default import (
    after_default_point,
    b2_integral,
    log_kp,
    strategy_after,
    value_after,
)
from cprisk.model import DefaultLaw, MarketSpec, Utility


def reference_spec(**kw) -> MarketSpec:
    return MarketSpec.reference(mu_F=0.03, sigma_F=0.1, T=1.0, **kw)


def zero_drift_spec() -> MarketSpec:
    return MarketSpec.constant_after(0.03, 0.1, 0.1, 0.0, 0.2)


# ---- log_kp ----


def test_log_kp_hand_value():
    got = log_kp(reference_spec(), DefaultLaw.exponential(0.01), Utility.power(0.2), 0.5)
    expected = math.log(0.01 * math.exp(-0.005)) + 0.2 * 0.1**2 * 0.5 / (2 * 0.8)
    assert got == pytest.approx(expected, abs=1e-14)


def test_log_kp_at_horizon_is_log_density():
    law = DefaultLaw.exponential(0.05)
    got = log_kp(reference_spec(), law, Utility.power(-0.2), 1.0)
    assert got == pytest.approx(math.log(law.density(1.0)), abs=1e-15)


def test_zero_sharpe_ratio_leaves_log_density():
    law = DefaultLaw.exponential(0.1)
    grid = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(log_kp(zero_drift_spec(), law, Utility.power(0.5), grid), np.log(law.density(grid)), atol=1e-15)


def test_zero_density_gives_minus_infinity():
    law = DefaultLaw.tabulated([0.0, 0.5], [0.2, 0.2])
    assert log_kp(reference_spec(), law, Utility.power(0.2), 0.8) == -math.inf


def test_log_kp_rejects_log_utility():
    with pytest.raises(ValueError):
        log_kp(reference_spec(), DefaultLaw.exponential(0.01), Utility.log(), 0.5)


@pytest.mark.parametrize(
    "theta, p, lam",
    [(0.1, 0.2, 0.01), (0.3, -0.2, 0.05), (0.5, 0.5, 0.1), (0.7, -1.0, 0.3), (0.9, 0.1, 0.2)],
)
def test_log_kp_matches_lognormal_expectation(theta, p, lam):
    spec = reference_spec()
    law = DefaultLaw.exponential(lam)
    u = Utility.power(p)
    q = u.q
    alpha = law.density(theta)
    b2 = b2_integral(spec, theta)

    rng = np.random.default_rng(12345)
    # ln Z_T(theta) ~ N(-b2/2, b2) under the historical measure.
    log_z = -0.5 * b2 + math.sqrt(b2) * rng.standard_normal(1_000_000)
    samples = alpha ** (1.0 + q) * np.exp(-q * log_z)
    mean = samples.mean()
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    estimate = mean ** (1.0 - p)
    estimate_se = abs(1.0 - p) * mean ** (-p) * se

    exact = math.exp(log_kp(spec, law, u, theta))
    assert abs(estimate - exact) < 4.0 * estimate_se + 1e-15


def test_log_kp_is_continuous_in_theta():
    n = 1000
    grid = np.linspace(0.0, 1.0, n + 1)
    values = np.asarray(log_kp(reference_spec(), DefaultLaw.exponential(0.01), Utility.power(0.2), grid))
    assert np.max(np.abs(np.diff(values))) < 10.0 / n


# ---- b2_integral ----


def test_b2_integral_theta_only_schedule():
    # (mu_d/sigma_d)^2 = (0.03*0.5 / 0.15)^2 = 0.01 on a remaining horizon of 0.5.
    assert b2_integral(reference_spec(), 0.5) == pytest.approx(0.005, abs=1e-16)
    assert b2_integral(reference_spec(), 1.0) == 0.0


def test_b2_integral_time_dependent_quadrature():
    spec = MarketSpec(
        mu_F=0.03,
        sigma_F=0.1,
        gamma=0.1,
        mu_d=lambda theta, t: 0.03 * np.asarray(t, dtype=float) + 0.0 * np.asarray(theta),
        sigma_d=lambda theta, t: np.full(np.broadcast(np.asarray(theta), np.asarray(t)).shape, 0.1),
        time_dependent=True,
    )
    theta = np.array([0.0, 0.25, 0.6])
    # int_theta^1 (0.3 t)^2 dt = 0.09 (1 - theta^3) / 3
    np.testing.assert_allclose(b2_integral(spec, theta), 0.03 * (1.0 - theta**3), rtol=1e-13)


# ---- strategy_after ----


def test_strategy_after_examples():
    spec = reference_spec()
    assert strategy_after(spec, Utility.power(0.2), 0.0) == 0.0
    assert strategy_after(spec, Utility.power(0.2), 1.0) == pytest.approx(3.75, abs=1e-12)
    assert strategy_after(spec, Utility.log(), 0.5) == pytest.approx(0.015 / 0.0225, abs=1e-12)


def test_strategy_after_does_not_depend_on_density():
    u = Utility.power(-0.2)
    point_a = after_default_point(reference_spec(), DefaultLaw.exponential(0.01), u, 0.4)
    point_b = after_default_point(reference_spec(), DefaultLaw.exponential(0.3), u, 0.4)
    assert point_a.pi_d == point_b.pi_d
    assert point_a.log_kp != point_b.log_kp


def test_strategy_after_scaling_invariance():
    base = MarketSpec.constant_after(0.03, 0.1, 0.1, 0.02, 0.15)
    for c in (0.5, 2.0, 3.0):
        scaled = MarketSpec.constant_after(0.03, 0.1, 0.1, c * c * 0.02, c * 0.15)
        assert strategy_after(scaled, Utility.power(0.2), 0.3) == pytest.approx(
            strategy_after(base, Utility.power(0.2), 0.3), rel=1e-13
        )


def test_strategy_after_rejects_zero_volatility():
    spec = MarketSpec.constant_after(0.03, 0.1, 0.1, 0.02, 0.0)
    with pytest.raises(ValueError):
        strategy_after(spec, Utility.power(0.2), 0.3)


# ---- value_after ----


@pytest.mark.parametrize("p", [0.2, -0.2, 0.7])
def test_value_after_homogeneity(p):
    spec, law, u = reference_spec(), DefaultLaw.exponential(0.05), Utility.power(p)
    base = value_after(spec, law, u, 0.3, 1.7)
    for c in (0.5, 2.0, 10.0):
        assert value_after(spec, law, u, 0.3, c * 1.7) == pytest.approx(c**p * base, rel=1e-12)


def test_value_after_at_horizon():
    law = DefaultLaw.exponential(0.1)
    got = value_after(reference_spec(), law, Utility.power(0.2), 1.0, 1.0)
    assert got == pytest.approx(law.density(1.0) / 0.2, rel=1e-12)


def test_log_value_after_with_zero_drift():
    law = DefaultLaw.exponential(0.1)
    spec = zero_drift_spec()
    alpha = law.density(0.4)
    assert value_after(spec, law, Utility.log(), 0.4, 1.0) == pytest.approx(0.0, abs=1e-16)
    assert value_after(spec, law, Utility.log(), 0.4, math.e) == pytest.approx(alpha, rel=1e-14)


def test_log_value_after_carries_sharpe_term():
    law = DefaultLaw.exponential(0.1)
    alpha = law.density(0.5)
    got = value_after(reference_spec(), law, Utility.log(), 0.5, 2.0)
    assert got == pytest.approx(alpha * (math.log(2.0) + 0.5 * 0.005), rel=1e-13)


def test_value_after_rejects_nonpositive_wealth():
    with pytest.raises(ValueError):
        value_after(reference_spec(), DefaultLaw.exponential(0.1), Utility.power(0.2), 0.5, 0.0)
