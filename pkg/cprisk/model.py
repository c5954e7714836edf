"""
cprisk.model

Market, default law and utility shared by every solver.

Responsibilities:
- MarketSpec   : before-default drift/volatility, proportional loss given
                 default, after-default coefficient schedules, horizon.
- DefaultLaw   : default-time density alpha(theta) (exponential or tabulated)
                 with survival G(t), intensity alpha(t)/G(t) and P[tau <= T].
- Utility      : CRRA power utility x^p/p or log utility.
- validate()   : admissibility checks; every violated invariant is reported
                 by field name in a single ModelValidationError.

All objects are frozen; evaluations are pure functions of their inputs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from cprisk.errors import ModelValidationError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

# Number of theta points used to check after-default volatility positivity.
SCHEDULE_CHECK_POINTS = 257

# Total mass of a tabulated density may exceed 1 by this much (quadrature noise).
MASS_TOLERANCE = 1e-9


def _out(value: Any) -> Any:
    """Return a Python float for 0-d results, the array otherwise."""
    arr = np.asarray(value, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def _check_nonnegative(name: str, values: ArrayLike) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError(f"{name} must be >= 0")
    return arr


# ---------------------------------------------------------------------------
# After-default coefficient schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearSchedule:
    """Coefficient moving linearly in theta from `start` (theta=0) to `end` (theta=T)."""

    start: float
    end: float
    T: float

    def __call__(self, theta: ArrayLike) -> Any:
        theta = np.asarray(theta, dtype=float)
        return _out(self.start + (self.end - self.start) * theta / self.T)


@dataclass(frozen=True)
class ConstantSchedule:
    value: float

    def __call__(self, theta: ArrayLike) -> Any:
        return _out(np.full(np.shape(theta), self.value, dtype=float))


# ---------------------------------------------------------------------------
# Market
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarketSpec:
    """
    Stock market exposed to a counterparty default.

    Before default the stock has constant drift `mu_F` and volatility
    `sigma_F`; at the default time theta it drops by the fraction `gamma`
    and then follows mu_d(theta), sigma_d(theta). With `time_dependent=True`
    the schedules are called as mu_d(theta, t) instead.
    """

    mu_F: float
    sigma_F: float
    gamma: float
    mu_d: Callable[..., Any]
    sigma_d: Callable[..., Any]
    T: float = 1.0
    X0: float = 1.0
    time_dependent: bool = False

    @classmethod
    def reference(
        cls,
        mu_F: float = 0.03,
        sigma_F: float = 0.1,
        gamma: float = 0.1,
        T: float = 1.0,
        X0: float = 1.0,
    ) -> "MarketSpec":
        """Schedules mu_d = mu_F*theta/T, sigma_d = sigma_F*(2 - theta/T)."""
        return cls(
            mu_F=mu_F,
            sigma_F=sigma_F,
            gamma=gamma,
            mu_d=LinearSchedule(0.0, mu_F, T),
            sigma_d=LinearSchedule(2.0 * sigma_F, sigma_F, T),
            T=T,
            X0=X0,
        )

    @classmethod
    def constant_after(
        cls,
        mu_F: float,
        sigma_F: float,
        gamma: float,
        mu_after: float,
        sigma_after: float,
        T: float = 1.0,
        X0: float = 1.0,
    ) -> "MarketSpec":
        return cls(
            mu_F=mu_F,
            sigma_F=sigma_F,
            gamma=gamma,
            mu_d=ConstantSchedule(mu_after),
            sigma_d=ConstantSchedule(sigma_after),
            T=T,
            X0=X0,
        )

    def after_drift(self, theta: ArrayLike, t: Optional[ArrayLike] = None) -> Any:
        """mu_d at default time theta (and calendar time t for time-dependent schedules)."""
        if self.time_dependent:
            return _out(self.mu_d(theta, theta if t is None else t))
        return _out(self.mu_d(theta))

    def after_vol(self, theta: ArrayLike, t: Optional[ArrayLike] = None) -> Any:
        if self.time_dependent:
            return _out(self.sigma_d(theta, theta if t is None else t))
        return _out(self.sigma_d(theta))


# ---------------------------------------------------------------------------
# Default law
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DefaultLaw:
    """
    Deterministic default-time density.

    kind="exponential": alpha(theta) = lam * exp(-lam * theta).
    kind="tabulated"  : alpha linear between the (theta, alpha) nodes, zero
                        outside; G uses the trapezoidal rule, which is exact for
                        the piecewise-linear density. Mass missing from the grid
                        sits beyond the horizon (tau = +inf).
    """

    kind: str = "exponential"
    lam: float = 0.0
    theta: Tuple[float, ...] = ()
    alpha: Tuple[float, ...] = ()
    quadrature: str = "trapezoid"
    _nodes: np.ndarray = field(init=False, repr=False, compare=False)
    _values: np.ndarray = field(init=False, repr=False, compare=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        nodes = np.asarray(self.theta, dtype=float)
        values = np.asarray(self.alpha, dtype=float)
        cum = np.zeros_like(nodes)
        if nodes.size > 1:
            cum[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(nodes))
        object.__setattr__(self, "_nodes", nodes)
        object.__setattr__(self, "_values", values)
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def exponential(cls, lam: float) -> "DefaultLaw":
        return cls(kind="exponential", lam=float(lam))

    @classmethod
    def tabulated(cls, theta: ArrayLike, alpha: ArrayLike) -> "DefaultLaw":
        return cls(
            kind="tabulated",
            theta=tuple(float(v) for v in np.ravel(theta)),
            alpha=tuple(float(v) for v in np.ravel(alpha)),
        )

    @property
    def is_exponential(self) -> bool:
        return self.kind == "exponential"

    @property
    def total_mass(self) -> float:
        """Mass carried by the density itself (1 for the exponential law with lam > 0)."""
        if self.is_exponential:
            return 1.0 if self.lam > 0 else 0.0
        return float(self._cum[-1]) if self._cum.size else 0.0

    # -- evaluations -------------------------------------------------------

    def density(self, theta: ArrayLike) -> Any:
        theta = _check_nonnegative("theta", theta)
        if self.is_exponential:
            return _out(self.lam * np.exp(-self.lam * theta))
        return _out(np.interp(theta, self._nodes, self._values, left=0.0, right=0.0))

    def cumulative(self, t: ArrayLike) -> Any:
        """P[tau <= t] = integral of alpha over [0, t]."""
        t = _check_nonnegative("t", t)
        if self.is_exponential:
            return _out(-np.expm1(-self.lam * t))
        nodes, values, cum = self._nodes, self._values, self._cum
        if nodes.size < 2:
            return _out(np.zeros_like(t))
        idx = np.clip(np.searchsorted(nodes, t, side="right") - 1, 0, nodes.size - 2)
        x = np.clip(t - nodes[idx], 0.0, None)
        width = nodes[idx + 1] - nodes[idx]
        slope = (values[idx + 1] - values[idx]) / width
        partial = cum[idx] + values[idx] * x + 0.5 * slope * x * x
        result = np.where(t >= nodes[-1], cum[-1], np.where(t <= nodes[0], 0.0, partial))
        return _out(result)

    def survival(self, t: ArrayLike) -> Any:
        """G(t) = P[tau > t]."""
        t = _check_nonnegative("t", t)
        if self.is_exponential:
            return _out(np.exp(-self.lam * t))
        beyond_grid = 1.0 - self.total_mass
        return _out((self.total_mass - np.asarray(self.cumulative(t))) + beyond_grid)

    def intensity(self, t: ArrayLike) -> Any:
        t = _check_nonnegative("t", t)
        if self.is_exponential:
            return _out(np.full(np.shape(t), self.lam, dtype=float))
        g = np.asarray(self.survival(t))
        if np.any(g <= 0):
            raise ValueError("survival G(t) is 0: density mass exhausted before t")
        return _out(np.asarray(self.density(t)) / g)

    def default_probability(self, T: ArrayLike) -> Any:
        return self.cumulative(T)

    def sample(self, uniforms: ArrayLike) -> np.ndarray:
        """
        Inverse-CDF sampling of tau from uniforms in [0, 1).

        Uniforms at or above the density's total mass map to +inf (no default).
        Inside a tabulated interval the CDF is quadratic and is inverted exactly.
        """
        u = np.asarray(uniforms, dtype=float)
        if self.is_exponential:
            if self.lam <= 0:
                return np.full(u.shape, np.inf)
            with np.errstate(divide="ignore"):
                return -np.log1p(-u) / self.lam
        nodes, values, cum = self._nodes, self._values, self._cum
        tau = np.full(u.shape, np.inf)
        hit = u < self.total_mass
        if not np.any(hit):
            return tau
        uh = u[hit]
        idx = np.clip(np.searchsorted(cum, uh, side="right") - 1, 0, nodes.size - 2)
        width = nodes[idx + 1] - nodes[idx]
        slope = (values[idx + 1] - values[idx]) / width
        r = uh - cum[idx]
        disc = np.sqrt(np.clip(values[idx] ** 2 + 2.0 * slope * r, 0.0, None))
        denom = values[idx] + disc
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.where(denom > 0, 2.0 * r / denom, 0.0)
        tau[hit] = nodes[idx] + np.clip(x, 0.0, width)
        return tau


def survival(law: DefaultLaw, t: ArrayLike) -> Any:
    return law.survival(t)


def density(law: DefaultLaw, theta: ArrayLike) -> Any:
    return law.density(theta)


def intensity(law: DefaultLaw, t: ArrayLike) -> Any:
    return law.intensity(t)


def default_probability(law: DefaultLaw, T: ArrayLike) -> Any:
    return law.default_probability(T)


def sample_default_times(law: DefaultLaw, uniforms: ArrayLike) -> np.ndarray:
    return law.sample(uniforms)


def load_density_csv(path: Union[str, Path]) -> DefaultLaw:
    """Read a `theta,alpha` CSV into a tabulated DefaultLaw."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"density file not found: {path}")
    frame = pd.read_csv(path)
    if list(frame.columns) != ["theta", "alpha"]:
        raise ModelValidationError([f"law.path: expected header 'theta,alpha', got {','.join(map(str, frame.columns))!r}"])
    law = DefaultLaw.tabulated(frame["theta"].to_numpy(float), frame["alpha"].to_numpy(float))
    errors = _law_errors(law, horizon=None)
    if errors:
        raise ModelValidationError(errors)
    logger.info("Loaded tabulated density from %s (%d nodes, mass=%.6f)", path, len(law.theta), law.total_mass)
    return law


# ---------------------------------------------------------------------------
# Utility
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Utility:
    """CRRA utility: kind="power" gives x^p/p, kind="log" gives ln x."""

    kind: str = "power"
    p: float = 0.5

    @classmethod
    def power(cls, p: float) -> "Utility":
        return cls(kind="power", p=float(p))

    @classmethod
    def log(cls) -> "Utility":
        return cls(kind="log", p=0.0)

    @property
    def is_log(self) -> bool:
        return self.kind == "log"

    @property
    def risk_p(self) -> float:
        """Exponent entering the closed forms; the log case is p = 0."""
        return 0.0 if self.is_log else self.p

    @property
    def q(self) -> float:
        p = self.risk_p
        return p / (1.0 - p)

    @property
    def label(self) -> str:
        return "log" if self.is_log else f"p={self.p:g}"

    def evaluate(self, x: ArrayLike) -> Any:
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("wealth x must be > 0")
        if self.is_log:
            return _out(np.log(x))
        return _out(np.exp(self.p * np.log(x)) / self.p)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelBundle:
    spec: MarketSpec
    law: DefaultLaw
    utility: Utility


def _finite(value: float) -> bool:
    try:
        return math.isfinite(float(value))
    except (TypeError, ValueError):
        return False


def _law_errors(law: DefaultLaw, horizon: Optional[float]) -> List[str]:
    errors: List[str] = []
    if law.kind not in ("exponential", "tabulated"):
        return [f"law.kind: unknown density kind {law.kind!r}"]
    if law.is_exponential:
        if not _finite(law.lam) or law.lam < 0:
            errors.append("lam: default intensity must be finite and >= 0")
        return errors

    nodes = np.asarray(law.theta, dtype=float)
    values = np.asarray(law.alpha, dtype=float)
    if nodes.size < 2 or nodes.size != values.size:
        return ["theta: tabulated density needs >= 2 nodes and one alpha per theta"]
    if law.quadrature != "trapezoid":
        errors.append(f"quadrature: unsupported rule {law.quadrature!r}")
    if not np.all(np.isfinite(nodes)) or np.any(nodes < 0):
        errors.append("theta: grid must be finite and >= 0")
    if np.any(np.diff(nodes) <= 0):
        errors.append("theta: grid must be strictly increasing")
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        errors.append("alpha: density must be finite and nonnegative")
    if not errors and law.total_mass > 1.0 + MASS_TOLERANCE:
        errors.append(f"alpha: total mass {law.total_mass:.6g} exceeds 1")
    if not errors and horizon is not None and law.survival(horizon) <= 0:
        errors.append("law: survival G(t) must stay > 0 on [0, T]")
    return errors


def validate(spec: MarketSpec, law: DefaultLaw, u: Utility) -> ModelBundle:
    """
    Check every admissibility invariant and return the bundle unchanged.

    Raises ModelValidationError listing each violated invariant by name.
    """
    errors: List[str] = []

    if not _finite(spec.mu_F):
        errors.append("mu_F: drift must be finite")
    if not _finite(spec.sigma_F) or spec.sigma_F <= 0:
        errors.append("sigma_F: volatility must be > 0")
    if not _finite(spec.gamma) or spec.gamma < 0:
        errors.append("gamma: loss given default must be >= 0")
    elif spec.gamma >= 1:
        errors.append("gamma: loss given default must be < 1")
    if not _finite(spec.T) or spec.T <= 0:
        errors.append("T: horizon must be > 0")
    if not _finite(spec.X0) or spec.X0 <= 0:
        errors.append("X0: initial wealth must be > 0")

    if _finite(spec.T) and spec.T > 0:
        grid = np.linspace(0.0, spec.T, SCHEDULE_CHECK_POINTS)
        try:
            if spec.time_dependent:
                th, tt = np.meshgrid(grid, grid, indexing="ij")
                keep = tt >= th
                vols = np.asarray(spec.after_vol(th[keep], tt[keep]))
                drifts = np.asarray(spec.after_drift(th[keep], tt[keep]))
            else:
                vols = np.asarray(spec.after_vol(grid))
                drifts = np.asarray(spec.after_drift(grid))
            if not np.all(np.isfinite(vols)) or np.any(vols <= 0):
                errors.append("sigma_d: after-default volatility must be > 0 on [0, T]")
            if not np.all(np.isfinite(drifts)):
                errors.append("mu_d: after-default drift must be finite on [0, T]")
        except Exception as exc:  # noqa: BLE001
            errors.append(f"mu_d/sigma_d: schedule evaluation failed: {exc}")

    if u.kind not in ("power", "log"):
        errors.append(f"utility: unknown kind {u.kind!r}")
    elif not u.is_log and (not _finite(u.p) or u.p >= 1 or u.p == 0):
        errors.append("p: CRRA exponent must satisfy p<1, p≠0")

    horizon = spec.T if _finite(spec.T) and spec.T > 0 else None
    errors.extend(_law_errors(law, horizon))

    if errors:
        for msg in errors:
            logger.debug("validation failure: %s", msg)
        raise ModelValidationError(errors)
    return ModelBundle(spec=spec, law=law, utility=u)


__all__ = [
    "ArrayLike",
    "LinearSchedule",
    "ConstantSchedule",
    "MarketSpec",
    "DefaultLaw",
    "Utility",
    "ModelBundle",
    "validate",
    "survival",
    "density",
    "intensity",
    "default_probability",
    "sample_default_times",
    "load_density_csv",
]
