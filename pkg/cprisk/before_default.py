"""
cprisk.before_default

Before-default value function and optimal strategy.

Responsibilities:
- Constrained Merton benchmark (no default risk, proportion capped at 1/gamma).
- Pointwise maximisation of the driver F(pi) by bisection on its strictly
  decreasing derivative, bracketed by the analytic strategy bounds.
- Howard policy iteration: evaluate the linear ODE for a fixed policy with
  classical RK4 (backward from Y(T) = G(T)), improve at every node, repeat
  until the sup-norm policy change drops below tolerance.
- Closed-form log-utility solution (Y = G, pi from a quadratic).

For power utility the before-default value is U(x) * Y(t) with

    Y'(t) = -[ p (mu pi - (1-p)/2 pi^2 sigma^2) Y + K(t) (1 - pi gamma)^p ],
    K(t)  = k(t)^p from cprisk.after_default.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid, trapezoid

from cprisk.after_default import b2_integral
from cprisk.after_default import log_kp as after_log_kp
from cprisk.errors import ModelValidationError, SolverError
from cprisk.model import ArrayLike, DefaultLaw, MarketSpec, Utility, _out, validate

logger = logging.getLogger(__name__)

# Relative distance kept from the 1/gamma admissibility boundary.
BOUNDARY_EPS = 1e-14


# ---------------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    """
    Numerical settings of the Howard solver.

    value_tol: optional second stopping rule on |Y_k(0) - Y_{k-1}(0)|; the run
    stops as soon as either rule is met.
    """

    n_steps: int = 1000
    howard_tol: float = 1e-10
    max_howard_iters: int = 50
    root_tol: float = 1e-13
    value_tol: Optional[float] = None
    max_halvings: int = 200

    def check(self) -> None:
        errors: List[str] = []
        if self.n_steps < 2:
            errors.append("n_steps: must be >= 2")
        if not self.howard_tol > 0:
            errors.append("howard_tol: must be > 0")
        if self.max_howard_iters < 1:
            errors.append("max_howard_iters: must be >= 1")
        if not self.root_tol > 0:
            errors.append("root_tol: must be > 0")
        if self.value_tol is not None and not self.value_tol > 0:
            errors.append("value_tol: must be > 0 when set")
        if self.max_halvings < 1:
            errors.append("max_halvings: must be >= 1")
        if errors:
            raise ModelValidationError(errors)


@dataclass(frozen=True)
class MertonBenchmark:
    pi: float
    rate: float
    y: Any


@dataclass
class ValuePolicySolution:
    """Per-node solution on the uniform grid t_i = i*T/N."""

    grid: np.ndarray
    Y: np.ndarray
    pi: np.ndarray
    pi_lower: np.ndarray
    pi_upper: np.ndarray
    Y_merton: np.ndarray
    pi_merton: np.ndarray
    log_kp: np.ndarray
    utility: Utility
    iterations: int = 0
    residual: float = 0.0
    value_history: List[float] = field(default_factory=list)
    # Log utility only: V(t, x) = Y(t) ln x + value_offset(t).
    value_offset: Optional[np.ndarray] = None

    @property
    def T(self) -> float:
        return float(self.grid[-1])

    def value(self, x: ArrayLike, t_index: int = 0) -> Any:
        """Before-default value at wealth x and grid node t_index."""
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("wealth x must be > 0")
        y = float(self.Y[t_index])
        if self.utility.is_log:
            offset = 0.0 if self.value_offset is None else float(self.value_offset[t_index])
            return _out(y * np.log(x) + offset)
        return _out(np.asarray(self.utility.evaluate(x)) * y)

    def strategy_at(self, t: ArrayLike) -> Any:
        """Policy linearly interpolated between nodes."""
        return _out(np.interp(t, self.grid, self.pi))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.grid,
                "Y": self.Y,
                "pi_hat": self.pi,
                "pi_lower": self.pi_lower,
                "pi_upper": self.pi_upper,
                "Y_merton": self.Y_merton,
                "pi_merton": self.pi_merton,
                "log_kp": self.log_kp,
            }
        )


# ---------------------------------------------------------------------------
# Merton benchmark
# ---------------------------------------------------------------------------


def _merton_pi(mu: float, sigma: float, gamma: float, p: float) -> float:
    unconstrained = mu / ((1.0 - p) * sigma * sigma)
    return min(unconstrained, 1.0 / gamma) if gamma > 0 else unconstrained


def merton_constrained(spec: MarketSpec, u: Utility, t: ArrayLike = 0.0) -> MertonBenchmark:
    """
    Constrained Merton proportion, growth rate c and Y^M(t) = exp(p c (T - t)).

    For log utility Y^M is identically 1 (the value is ln x + c (T - t)).
    """
    p = u.risk_p
    pi_m = _merton_pi(spec.mu_F, spec.sigma_F, spec.gamma, p)
    rate = spec.mu_F * pi_m - 0.5 * (1.0 - p) * spec.sigma_F**2 * pi_m**2
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > spec.T * (1.0 + 1e-12)):
        raise ValueError(f"t must lie in [0, T={spec.T:g}]")
    if u.is_log:
        y = np.ones_like(t)
    else:
        y = np.exp(p * rate * (spec.T - t))
    return MertonBenchmark(pi=pi_m, rate=rate, y=_out(y))


def merton_value(spec: MarketSpec, u: Utility, t: float, x: ArrayLike) -> Any:
    """Value of the constrained Merton problem without default."""
    bench = merton_constrained(spec, u, t)
    x = np.asarray(x, dtype=float)
    if u.is_log:
        return _out(np.log(x) + bench.rate * (spec.T - t))
    return _out(np.asarray(u.evaluate(x)) * bench.y)


# ---------------------------------------------------------------------------
# Driver kernels (vectorised over nodes)
# ---------------------------------------------------------------------------


def _jump_term(pi: np.ndarray, gamma: float, p: float, kp: np.ndarray, power: float) -> np.ndarray:
    """kp * (1 - pi*gamma)^power, zero where kp == 0."""
    base = np.where(kp > 0, 1.0 - pi * gamma, 1.0)
    return np.where(kp > 0, kp * base**power, 0.0)


def driver_objective(
    pi: ArrayLike,
    mu: float,
    sigma: float,
    gamma: float,
    p: float,
    y: ArrayLike,
    kp: ArrayLike,
) -> np.ndarray:
    """F(pi) = (mu pi - (1-p)/2 pi^2 sigma^2) y + K (1 - pi gamma)^p / p."""
    pi = np.asarray(pi, dtype=float)
    kp = np.asarray(kp, dtype=float)
    growth = (mu * pi - 0.5 * (1.0 - p) * sigma * sigma * pi * pi) * np.asarray(y, dtype=float)
    return growth + _jump_term(pi, gamma, p, kp, p) / p


def driver_derivative(
    pi: ArrayLike,
    mu: float,
    sigma: float,
    gamma: float,
    p: float,
    y: ArrayLike,
    kp: ArrayLike,
) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    kp = np.asarray(kp, dtype=float)
    slope = (mu - (1.0 - p) * sigma * sigma * pi) * np.asarray(y, dtype=float)
    return slope - gamma * _jump_term(pi, gamma, p, kp, p - 1.0)


def driver_bounds(
    mu: float,
    sigma: float,
    gamma: float,
    p: float,
    y: ArrayLike,
    kp: ArrayLike,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Analytic bracket [lower, upper] for the driver maximiser.

    upper is the constrained Merton proportion; lower subtracts
    (gamma^p K / ((1-p) y sigma^2))^(1/(2-p)). Both coincide when gamma = 0 or K = 0.
    """
    y, kp = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(kp, dtype=float))
    pi_m = _merton_pi(mu, sigma, gamma, p)
    upper = np.full(y.shape, pi_m)
    if gamma == 0:
        return upper.copy(), upper
    spread = (gamma**p * kp / ((1.0 - p) * y * sigma * sigma)) ** (1.0 / (2.0 - p))
    return upper - spread, upper


def maximize_driver_kernel(
    mu: float,
    sigma: float,
    gamma: float,
    p: float,
    y: ArrayLike,
    kp: ArrayLike,
    root_tol: float = 1e-13,
    max_halvings: int = 200,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Maximise F at every node; returns (pi*, F(pi*)).

    F' is strictly decreasing on (-inf, 1/gamma), so its root is found by
    bisection inside the analytic bracket.
    """
    y, kp = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(kp, dtype=float))
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise ValueError("Y must be finite and > 0 at every node")
    if np.any(~np.isfinite(kp)) or np.any(kp < 0):
        raise ValueError("k^p must be finite and >= 0 at every node")

    lower, upper = driver_bounds(mu, sigma, gamma, p, y, kp)
    if gamma == 0 or not np.any(kp > 0):
        pi = upper.copy()
    else:
        cap = (1.0 - BOUNDARY_EPS) / gamma
        hi = np.minimum(upper, cap)
        lo = np.minimum(lower - 1e-12 * (1.0 + np.abs(lower)), hi)
        for _ in range(max_halvings):
            mid = 0.5 * (lo + hi)
            rising = driver_derivative(mid, mu, sigma, gamma, p, y, kp) > 0
            lo = np.where(rising, mid, lo)
            hi = np.where(rising, hi, mid)
            if np.all(hi - lo <= root_tol * (1.0 + np.abs(mid))):
                break
        pi = np.where(kp > 0, 0.5 * (lo + hi), upper)
    return pi, driver_objective(pi, mu, sigma, gamma, p, y, kp)


def _kp_at(spec: MarketSpec, law: DefaultLaw, u: Utility, t: ArrayLike) -> np.ndarray:
    kp = np.exp(np.asarray(after_log_kp(spec, law, u, t), dtype=float))
    if np.any(~np.isfinite(kp)):
        raise SolverError("k(t)^p overflowed; after-default coefficients out of range")
    return kp


def maximize_driver(
    spec: MarketSpec,
    law: DefaultLaw,
    u: Utility,
    t: ArrayLike,
    y: ArrayLike,
    cfg: Optional[SolverConfig] = None,
) -> Tuple[Any, Any]:
    """Optimal proportion and driver value f = p * F(pi*) at (t, Y(t) = y)."""
    if u.is_log:
        raise ValueError("maximize_driver needs power utility; log utility is solved in closed form")
    cfg = cfg or SolverConfig()
    kp = _kp_at(spec, law, u, t)
    pi, objective = maximize_driver_kernel(
        spec.mu_F, spec.sigma_F, spec.gamma, u.p, y, kp, cfg.root_tol, cfg.max_halvings
    )
    return _out(pi), _out(u.p * objective)


def strategy_bounds(
    spec: MarketSpec,
    law: DefaultLaw,
    u: Utility,
    t: ArrayLike,
    y: ArrayLike,
) -> Tuple[Any, Any]:
    if u.is_log:
        g = np.asarray(y, dtype=float)
        alpha = np.asarray(law.density(t), dtype=float)
        return _log_bounds(spec, g, alpha)
    kp = _kp_at(spec, law, u, t)
    lower, upper = driver_bounds(spec.mu_F, spec.sigma_F, spec.gamma, u.p, y, kp)
    return _out(lower), _out(upper)


# ---------------------------------------------------------------------------
# Power utility: Howard policy iteration
# ---------------------------------------------------------------------------


def _evaluate_policy(
    pi: np.ndarray,
    h: float,
    mu: float,
    sigma: float,
    gamma: float,
    p: float,
    kp_nodes: np.ndarray,
    kp_mid: np.ndarray,
    terminal: float,
) -> np.ndarray:
    """
    Integrate Y' = a(t) Y + b(t) backward from Y(T) with RK4.

    Midpoint coefficients use the policy averaged over the two adjacent nodes.
    """
    pi_mid = 0.5 * (pi[:-1] + pi[1:])
    half_var = 0.5 * (1.0 - p) * sigma * sigma
    a_nodes = (-p * (mu * pi - half_var * pi * pi)).tolist()
    b_nodes = (-_jump_term(pi, gamma, p, kp_nodes, p)).tolist()
    a_mid = (-p * (mu * pi_mid - half_var * pi_mid * pi_mid)).tolist()
    b_mid = (-_jump_term(pi_mid, gamma, p, kp_mid, p)).tolist()

    n = len(a_nodes) - 1
    values = [0.0] * (n + 1)
    y = terminal
    values[n] = y
    half_h = 0.5 * h
    for i in range(n, 0, -1):
        k1 = a_nodes[i] * y + b_nodes[i]
        k2 = a_mid[i - 1] * (y - half_h * k1) + b_mid[i - 1]
        k3 = a_mid[i - 1] * (y - half_h * k2) + b_mid[i - 1]
        k4 = a_nodes[i - 1] * (y - h * k3) + b_nodes[i - 1]
        y = y - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        values[i - 1] = y
    return np.asarray(values)


def solve_howard(
    spec: MarketSpec,
    law: DefaultLaw,
    u: Utility,
    cfg: Optional[SolverConfig] = None,
) -> ValuePolicySolution:
    """
    Solve the before-default problem for power utility.

    Raises:
      ModelValidationError if the inputs are inadmissible.
      SolverError if the iteration cap is reached or Y loses positivity.
    """
    validate(spec, law, u)
    if u.is_log:
        raise ValueError("solve_howard needs power utility; use solve_log")
    cfg = cfg or SolverConfig()
    cfg.check()

    start = time.time()
    n = cfg.n_steps
    h = spec.T / n
    grid = np.linspace(0.0, spec.T, n + 1)
    mid = grid[:-1] + 0.5 * h
    lkp_nodes = np.asarray(after_log_kp(spec, law, u, grid), dtype=float)
    kp_nodes = _kp_at(spec, law, u, grid)
    kp_mid = _kp_at(spec, law, u, mid)
    terminal = float(law.survival(spec.T))

    mu, sigma, gamma, p = spec.mu_F, spec.sigma_F, spec.gamma, u.p
    bench = merton_constrained(spec, u, grid)
    pi = np.full(n + 1, bench.pi)
    if gamma > 0:
        # The capped Merton proportion sits on 1/gamma, where (1 - pi gamma)^p blows up for p < 0.
        pi = np.minimum(pi, (1.0 - BOUNDARY_EPS) / gamma)
    history: List[float] = []
    residual = float("inf")

    logger.info(
        "Howard solve: %s gamma=%g N=%d tol=%g (G(T)=%.6f)", u.label, gamma, n, cfg.howard_tol, terminal
    )
    for iteration in range(1, cfg.max_howard_iters + 1):
        Y = _evaluate_policy(pi, h, mu, sigma, gamma, p, kp_nodes, kp_mid, terminal)
        if np.any(~np.isfinite(Y)) or np.any(Y <= 0):
            raise SolverError(
                "Y lost positivity during policy evaluation", residual=residual, iterations=iteration
            )
        history.append(float(Y[0]))
        improved, _ = maximize_driver_kernel(mu, sigma, gamma, p, Y, kp_nodes, cfg.root_tol, cfg.max_halvings)
        residual = float(np.max(np.abs(improved - pi)))
        pi = improved
        value_change = abs(history[-1] - history[-2]) if len(history) > 1 else float("inf")
        logger.debug("iteration %d: sup|dpi|=%.3e Y(0)=%.12g", iteration, residual, history[-1])
        if residual < cfg.howard_tol or (cfg.value_tol is not None and value_change < cfg.value_tol):
            break
    else:
        logger.error("Howard iteration hit the cap of %d iterations (sup|dpi|=%.3e)", cfg.max_howard_iters, residual)
        raise SolverError(
            f"Howard iteration did not converge in {cfg.max_howard_iters} iterations "
            f"(sup|dpi|={residual:.3e})",
            residual=residual,
            iterations=cfg.max_howard_iters,
        )

    Y = _evaluate_policy(pi, h, mu, sigma, gamma, p, kp_nodes, kp_mid, terminal)
    if np.any(~np.isfinite(Y)) or np.any(Y <= 0):
        raise SolverError("Y lost positivity for the final policy", residual=residual, iterations=iteration)
    history.append(float(Y[0]))
    lower, upper = driver_bounds(mu, sigma, gamma, p, Y, kp_nodes)

    logger.info(
        "Howard converged: %d iterations, sup|dpi|=%.3e, Y(0)=%.10g (%.2fs)",
        iteration,
        residual,
        Y[0],
        time.time() - start,
    )
    return ValuePolicySolution(
        grid=grid,
        Y=Y,
        pi=pi,
        pi_lower=lower,
        pi_upper=upper,
        Y_merton=np.asarray(bench.y, dtype=float),
        pi_merton=np.full(n + 1, bench.pi),
        log_kp=lkp_nodes,
        utility=u,
        iterations=iteration,
        residual=residual,
        value_history=history,
    )


# ---------------------------------------------------------------------------
# Log utility: closed form
# ---------------------------------------------------------------------------


def _log_bounds(spec: MarketSpec, g: np.ndarray, alpha: np.ndarray) -> Tuple[Any, Any]:
    g, alpha = np.broadcast_arrays(g, alpha)
    pi_m = _merton_pi(spec.mu_F, spec.sigma_F, spec.gamma, 0.0)
    upper = np.full(g.shape, pi_m)
    if spec.gamma == 0:
        return _out(upper), _out(upper)
    return _out(upper - np.sqrt(alpha / (spec.sigma_F**2 * g))), _out(upper)


def log_strategy(spec: MarketSpec, g: ArrayLike, alpha: ArrayLike) -> Any:
    """
    Smaller root of sigma^2 gamma pi^2 - (mu gamma + sigma^2) pi + (mu - gamma alpha/G) = 0.

    Written as 2c / (b + sqrt(b^2 - 4ac)) so the alpha = 0 case gives min(mu/sigma^2, 1/gamma).
    """
    mu, sig2, gamma = spec.mu_F, spec.sigma_F**2, spec.gamma
    g = np.asarray(g, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if gamma == 0:
        return _out(np.full(np.broadcast(g, alpha).shape, mu / sig2))
    a = sig2 * gamma
    b = mu * gamma + sig2
    c = mu - gamma * alpha / g
    disc = b * b - 4.0 * a * c
    if np.any(disc < 0):
        raise SolverError("log-utility quadratic has no real root")
    pi = 2.0 * c / (b + np.sqrt(disc))
    return _out(np.minimum(pi, 1.0 / gamma))


def solve_log(
    spec: MarketSpec,
    law: DefaultLaw,
    cfg: Optional[SolverConfig] = None,
) -> ValuePolicySolution:
    """Log utility: Y(t) = G(t) and the strategy is explicit at every node."""
    u = Utility.log()
    validate(spec, law, u)
    cfg = cfg or SolverConfig()
    cfg.check()

    grid = np.linspace(0.0, spec.T, cfg.n_steps + 1)
    g = np.asarray(law.survival(grid), dtype=float)
    alpha = np.asarray(law.density(grid), dtype=float)
    pi = np.asarray(log_strategy(spec, g, alpha), dtype=float)
    lower, upper = _log_bounds(spec, g, alpha)
    bench = merton_constrained(spec, u, grid)
    with np.errstate(divide="ignore"):
        lkp = np.log(alpha)

    # Running integral of G*(mu pi - sigma^2 pi^2/2) + alpha*(ln(1 - pi gamma) + b2/2) from t to T.
    growth = g * (spec.mu_F * pi - 0.5 * spec.sigma_F**2 * pi * pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        jump = np.where(alpha > 0, np.log(np.clip(1.0 - pi * spec.gamma, 0.0, None)), 0.0)
    after = np.where(alpha > 0, alpha * jump, 0.0) + 0.5 * alpha * np.asarray(b2_integral(spec, grid))
    running = cumulative_trapezoid((growth + after)[::-1], -grid[::-1], initial=0.0)[::-1]

    logger.info("Log-utility closed form: gamma=%g N=%d G(T)=%.6f", spec.gamma, cfg.n_steps, g[-1])
    return ValuePolicySolution(
        grid=grid,
        Y=g,
        pi=pi,
        pi_lower=np.asarray(lower, dtype=float),
        pi_upper=np.asarray(upper, dtype=float),
        Y_merton=np.asarray(bench.y, dtype=float),
        pi_merton=np.full(grid.size, bench.pi),
        log_kp=lkp,
        utility=u,
        value_offset=np.asarray(running, dtype=float),
    )


def solve(
    spec: MarketSpec,
    law: DefaultLaw,
    u: Utility,
    cfg: Optional[SolverConfig] = None,
) -> ValuePolicySolution:
    """Dispatch to the closed form (log) or Howard iteration (power)."""
    if u.is_log:
        return solve_log(spec, law, cfg)
    return solve_howard(spec, law, u, cfg)


def time_average_strategy(sol: ValuePolicySolution) -> float:
    """(1/T) * integral of pi over [0, T] by the trapezoidal rule."""
    return float(trapezoid(sol.pi, sol.grid) / sol.T)


__all__ = [
    "SolverConfig",
    "MertonBenchmark",
    "ValuePolicySolution",
    "merton_constrained",
    "merton_value",
    "driver_objective",
    "driver_derivative",
    "driver_bounds",
    "maximize_driver_kernel",
    "maximize_driver",
    "strategy_bounds",
    "solve_howard",
    "log_strategy",
    "solve_log",
    "solve",
    "time_average_strategy",
]
