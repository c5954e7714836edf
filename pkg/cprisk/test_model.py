"""Market, default law and utility checks."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from cprisk.errors import ModelValidationError
from cprisk.model import (
    DefaultLaw,
    MarketSpec,
    Utility,
    default_probability,
    density,
    intensity,
    load_density_csv,
    sample_default_times,
    survival,
    validate,
)


def uniform_law() -> DefaultLaw:
    return DefaultLaw.tabulated([0.0, 1.0], [1.0, 1.0])


def hump_law() -> DefaultLaw:
    return DefaultLaw.tabulated([0.0, 0.25, 0.5, 0.75, 1.0], [0.02, 0.04, 0.06, 0.04, 0.02])


# ---- validate ----


def test_table_parameter_row_is_valid():
    spec = MarketSpec.reference(gamma=0.5)
    bundle = validate(spec, DefaultLaw.exponential(0.01), Utility.power(0.2))
    assert bundle.spec is spec


def test_gamma_at_one_is_rejected():
    with pytest.raises(ModelValidationError) as exc:
        validate(MarketSpec.reference(gamma=1.0), DefaultLaw.exponential(0.01), Utility.power(0.2))
    assert "loss given default must be < 1" in str(exc.value)


@pytest.mark.parametrize("p", [1.0, 0.0, 1.5])
def test_crra_exponent_out_of_range(p):
    with pytest.raises(ModelValidationError) as exc:
        validate(MarketSpec.reference(), DefaultLaw.exponential(0.01), Utility.power(p))
    assert "CRRA exponent must satisfy p<1, p≠0" in str(exc.value)


def test_every_violation_is_reported():
    spec = MarketSpec.constant_after(0.03, -0.1, 1.2, 0.02, 0.0)
    with pytest.raises(ModelValidationError) as exc:
        validate(spec, DefaultLaw.exponential(-1.0), Utility.power(2.0))
    fields = {msg.split(":")[0] for msg in exc.value.errors}
    assert {"sigma_F", "gamma", "sigma_d", "p", "lam"} <= fields


def test_log_utility_is_valid():
    validate(MarketSpec.reference(), DefaultLaw.exponential(0.3), Utility.log())


def test_tabulated_grid_must_increase():
    law = DefaultLaw.tabulated([0.0, 0.5, 0.5, 1.0], [0.1, 0.1, 0.1, 0.1])
    with pytest.raises(ModelValidationError, match="strictly increasing"):
        validate(MarketSpec.reference(), law, Utility.power(0.2))


def test_exhausted_survival_is_rejected():
    law = DefaultLaw.tabulated([0.0, 0.5], [2.0, 2.0])
    with pytest.raises(ModelValidationError, match="survival"):
        validate(MarketSpec.reference(), law, Utility.power(0.2))


# ---- survival / density / intensity ----


def test_exponential_survival_values():
    assert survival(DefaultLaw.exponential(0.01), 1.0) == pytest.approx(0.990050, abs=1e-6)
    assert survival(DefaultLaw.exponential(0.3), 0.0) == 1.0


def test_exponential_density_values():
    assert density(DefaultLaw.exponential(0.01), 0.0) == pytest.approx(0.01, rel=1e-15)
    assert density(DefaultLaw.exponential(0.3), 1.0) == pytest.approx(0.222245, abs=1e-6)


def test_exponential_intensity_is_exact():
    law = DefaultLaw.exponential(0.01)
    grid = np.linspace(0.0, 1.0, 100)
    assert np.all(intensity(law, grid) == 0.01)
    assert intensity(DefaultLaw.exponential(0.3), 1.0) == 0.3


@pytest.mark.parametrize("lam, expected, printed", [(0.01, 0.00995, 0.01), (0.05, 0.0488, 0.05), (0.1, 0.0952, 0.10), (0.3, 0.2592, 0.26)])
def test_default_probability_column(lam, expected, printed):
    pd_value = default_probability(DefaultLaw.exponential(lam), 1.0)
    assert pd_value == pytest.approx(expected, abs=1e-4)
    assert round(pd_value, 2) == printed


def test_zero_intensity_never_defaults():
    law = DefaultLaw.exponential(0.0)
    assert default_probability(law, 1.0) == 0.0
    assert np.all(np.isinf(law.sample(np.array([0.0, 0.5, 0.999]))))


def test_uniform_tabulated_law():
    law = uniform_law()
    assert survival(law, 0.25) == pytest.approx(0.75, abs=1e-15)
    assert intensity(law, 0.5) == pytest.approx(2.0, abs=1e-14)


def test_tabulated_density_interpolates():
    law = hump_law()
    assert density(law, 0.5) == 0.06
    assert density(law, 0.375) == pytest.approx(0.05, abs=1e-15)
    assert density(law, 1.5) == 0.0


def test_tabulated_survival_plus_mass_is_conserved():
    law = hump_law()
    for t in np.linspace(0.0, 1.0, 41):
        integral, _ = quad(lambda s: float(law.density(s)), 0.0, t, points=[0.25, 0.5, 0.75], epsabs=1e-13)
        assert survival(law, t) + integral == pytest.approx(survival(law, 0.0), abs=1e-8)


def test_sub_probability_mass_sits_beyond_grid():
    law = hump_law()
    assert law.total_mass == pytest.approx(0.04, abs=1e-15)
    assert survival(law, 0.0) == 1.0
    assert survival(law, 1.0) == pytest.approx(0.96, abs=1e-15)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        survival(DefaultLaw.exponential(0.1), -0.1)
    with pytest.raises(ValueError):
        density(DefaultLaw.exponential(0.1), -1.0)


def test_evaluations_are_nonnegative():
    for law in (DefaultLaw.exponential(0.3), hump_law()):
        grid = np.linspace(0.0, 1.0, 51)
        assert np.all(np.asarray(law.density(grid)) >= 0)
        assert np.all(np.asarray(law.survival(grid)) > 0)
        assert np.all(np.asarray(law.intensity(grid)) >= 0)


# ---- sampling ----


def test_tabulated_sampling_inverts_cdf():
    law = hump_law()
    u = np.linspace(0.0, 0.0399, 50)
    tau = law.sample(u)
    assert np.all(np.isfinite(tau))
    np.testing.assert_allclose(law.cumulative(tau), u, atol=1e-13)
    assert np.all(np.isinf(law.sample(np.array([0.0401, 0.5, 0.99]))))


def test_exponential_sampling_inverts_cdf():
    law = DefaultLaw.exponential(0.3)
    u = np.array([0.0, 0.1, 0.5, 0.9])
    np.testing.assert_allclose(law.cumulative(sample_default_times(law, u)), u, atol=1e-14)


# ---- density files ----


def test_load_density_csv(tmp_path):
    path = tmp_path / "density.csv"
    path.write_text("theta,alpha\n0.0,0.1\n0.5,0.2\n1.0,0.1\n", encoding="utf-8")
    law = load_density_csv(path)
    assert law.theta == (0.0, 0.5, 1.0)
    assert law.total_mass == pytest.approx(0.15)


def test_load_density_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "density.csv"
    path.write_text("t,a\n0.0,0.1\n1.0,0.1\n", encoding="utf-8")
    with pytest.raises(ModelValidationError, match="theta,alpha"):
        load_density_csv(path)


def test_load_density_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_density_csv(tmp_path / "nope.csv")


# ---- utility ----


def test_utility_values():
    assert Utility.power(0.5).evaluate(4.0) == pytest.approx(4.0)
    assert Utility.power(-0.2).evaluate(1.0) == pytest.approx(-5.0)
    assert Utility.log().evaluate(math.e) == pytest.approx(1.0)
    assert Utility.power(0.2).q == pytest.approx(0.25)
    with pytest.raises(ValueError):
        Utility.log().evaluate(0.0)
