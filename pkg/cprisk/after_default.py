"""
cprisk.after_default

Closed-form after-default quantities for deterministic coefficients.

After a default at time theta the investor faces a complete market with
coefficients mu_d(theta), sigma_d(theta). With CRRA utility the optimal value
is U(x) * k(theta)^p and the optimal proportion is the Merton ratio
mu_d / ((1-p) sigma_d^2). k(theta)^p is only ever handled in log space:

    ln k(theta)^p = ln alpha(theta) + p / (2(1-p)) * int_theta^T (mu_d/sigma_d)^2 du

For log utility (the p -> 0 limit) the weight is alpha(theta) and the value is
alpha(theta) * (ln x + b2 / 2), with b2 the Sharpe-ratio integral above.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Optional, Tuple

import numpy as np

from cprisk.model import ArrayLike, DefaultLaw, MarketSpec, Utility, _out

logger = logging.getLogger(__name__)

GAUSS_LEGENDRE_POINTS = 64
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GAUSS_LEGENDRE_POINTS)


@dataclass(frozen=True)
class AfterDefaultPoint:
    theta: float
    log_kp: float
    pi_d: float
    b2_integral: float


def _check_theta(spec: MarketSpec, theta: ArrayLike) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or np.any(theta > spec.T * (1.0 + 1e-12)):
        raise ValueError(f"theta must lie in [0, T={spec.T:g}]")
    return np.minimum(theta, spec.T)


def b2_integral(spec: MarketSpec, theta: ArrayLike) -> Any:
    """int_theta^T (mu_d / sigma_d)^2 (theta, u) du."""
    theta = _check_theta(spec, theta)
    if not spec.time_dependent:
        ratio = np.asarray(spec.after_drift(theta)) / np.asarray(spec.after_vol(theta))
        return _out(ratio * ratio * (spec.T - theta))

    half = 0.5 * (spec.T - theta)
    centre = 0.5 * (spec.T + theta)
    u = centre[..., None] + half[..., None] * _GL_NODES
    th = np.broadcast_to(theta[..., None], u.shape)
    ratio = np.asarray(spec.after_drift(th, u)) / np.asarray(spec.after_vol(th, u))
    return _out(half * ((ratio * ratio) @ _GL_WEIGHTS))


def log_kp(spec: MarketSpec, law: DefaultLaw, u: Utility, theta: ArrayLike) -> Any:
    """
    Natural log of k(theta)^p for power utility.

    Returns -inf where alpha(theta) = 0 (zero after-default weight).
    """
    if u.is_log:
        raise ValueError("log_kp is defined for power utility; use log_weight for log utility")
    theta = _check_theta(spec, theta)
    alpha = np.asarray(law.density(theta))
    p = u.p
    with np.errstate(divide="ignore"):
        log_alpha = np.log(alpha)
    return _out(log_alpha + p / (2.0 * (1.0 - p)) * np.asarray(b2_integral(spec, theta)))


def log_weight(spec: MarketSpec, law: DefaultLaw, theta: ArrayLike) -> Tuple[Any, Any]:
    """Log-utility after-default weight alpha(theta) and constant alpha(theta) * b2 / 2."""
    theta = _check_theta(spec, theta)
    alpha = np.asarray(law.density(theta))
    return _out(alpha), _out(0.5 * alpha * np.asarray(b2_integral(spec, theta)))


def strategy_after(
    spec: MarketSpec,
    u: Utility,
    theta: ArrayLike,
    t: Optional[ArrayLike] = None,
) -> Any:
    """
    Optimal after-default proportion mu_d / ((1-p) sigma_d^2).

    Does not depend on the default density. `t` only matters for
    time-dependent schedules.
    """
    theta = _check_theta(spec, theta)
    p = u.risk_p
    drift = np.asarray(spec.after_drift(theta, t))
    vol = np.asarray(spec.after_vol(theta, t))
    if np.any(vol == 0):
        raise ValueError("after-default volatility sigma_d(theta) is 0")
    return _out(drift / ((1.0 - p) * vol * vol))


def value_after_from_log(
    spec: MarketSpec,
    law: DefaultLaw,
    u: Utility,
    theta: ArrayLike,
    log_x: ArrayLike,
) -> Any:
    """V^d_theta(x) evaluated from ln x; shapes of theta and log_x broadcast."""
    log_x = np.asarray(log_x, dtype=float)
    if u.is_log:
        alpha, constant = log_weight(spec, law, theta)
        # alpha*ln(x/alpha) + alpha*(ln alpha + b2/2): the ln alpha terms cancel.
        return _out(np.asarray(alpha) * log_x + np.asarray(constant))
    p = u.p
    lkp = np.asarray(log_kp(spec, law, u, theta))
    return _out(np.sign(p) * np.exp(p * log_x - np.log(abs(p)) + lkp))


def value_after(
    spec: MarketSpec,
    law: DefaultLaw,
    u: Utility,
    theta: ArrayLike,
    x: ArrayLike,
) -> Any:
    """After-default value U(x) k(theta)^p (power) or alpha (ln x + b2/2) (log)."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("wealth x must be > 0")
    return value_after_from_log(spec, law, u, theta, np.log(x))


def after_default_point(
    spec: MarketSpec,
    law: DefaultLaw,
    u: Utility,
    theta: float,
) -> AfterDefaultPoint:
    if u.is_log:
        with np.errstate(divide="ignore"):
            lkp = float(np.log(law.density(theta)))
    else:
        lkp = float(log_kp(spec, law, u, theta))
    return AfterDefaultPoint(
        theta=float(theta),
        log_kp=lkp,
        pi_d=float(strategy_after(spec, u, theta)),
        b2_integral=float(b2_integral(spec, theta)),
    )


__all__ = [
    "GAUSS_LEGENDRE_POINTS",
    "AfterDefaultPoint",
    "b2_integral",
    "log_kp",
    "log_weight",
    "strategy_after",
    "value_after",
    "value_after_from_log",
    "after_default_point",
]
