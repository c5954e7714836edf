"""
cprisk.montecarlo

Monte Carlo checks of the optimal strategy.

Responsibilities:
- simulate_wealth()        : direct estimate of E[U(X_T)] under a before/after
                             default strategy pair, with the default time drawn
                             from the density and the wealth jump applied at tau.
- decomposition_estimate() : the same quantity through the default-free wealth
                             X^F, E[U(X_T^F) G(T) + int alpha-weighted V^d dtheta].
- perturbation_test()      : shift the before-default strategy by constants
                             and re-estimate with common random numbers.
- optimal_strategies()     : callables for the solved strategy pair.

Wealth is simulated in logs with exact lognormal increments for a strategy
held constant over each grid step. The step containing tau is split with a
Brownian bridge. Reductions use math.fsum in block order so the result
depends only on (seed, n_paths, n_time_steps, antithetic).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson
from tqdm import tqdm

from cprisk.after_default import strategy_after, value_after_from_log
from cprisk.before_default import ValuePolicySolution
from cprisk.errors import InadmissibleStrategyError, ModelValidationError
from cprisk.model import DefaultLaw, MarketSpec, Utility, validate
from cprisk.rng import BLOCK_PATHS, SEED_LIMIT, BlockDraws, SubstreamRNG

logger = logging.getLogger(__name__)

BeforeStrategy = Callable[[np.ndarray], Any]
AfterStrategy = Callable[[np.ndarray, np.ndarray], Any]


# ---------------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    n_time_steps: int = 100
    seed: int = 20240601
    antithetic: bool = False
    progress: bool = False
    block_paths: int = BLOCK_PATHS

    def check(self) -> None:
        errors: List[str] = []
        if self.n_paths < 1:
            errors.append("n_paths: must be >= 1")
        if self.n_time_steps < 1:
            errors.append("n_time_steps: must be >= 1")
        if not 0 <= self.seed < SEED_LIMIT:
            errors.append("seed: must be in [0, 2^64)")
        if self.antithetic and self.n_paths % 2:
            errors.append("n_paths: antithetic sampling needs an even number of paths")
        if self.block_paths < 2 or self.block_paths % 2:
            errors.append("block_paths: must be an even number >= 2")
        if errors:
            raise ModelValidationError(errors)


@dataclass(frozen=True)
class SimReport:
    estimate: float
    std_error: float
    n_paths: int
    decomposition_estimate: float
    default_fraction: float
    seed: int
    decomposition_std_error: float = 0.0

    def to_json_dict(self) -> Dict[str, Any]:
        """Keys in a fixed order for byte-stable JSON output."""
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "decomposition_estimate": self.decomposition_estimate,
            "default_fraction": self.default_fraction,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class PerturbationRow:
    delta: float
    estimate: float
    std_error: float
    skipped: bool = False
    note: str = ""


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _strategy_values(fn: Callable[..., Any], *args: np.ndarray) -> np.ndarray:
    shape = np.broadcast(*args).shape
    return np.array(np.broadcast_to(np.asarray(fn(*args), dtype=float), shape), dtype=float)


def _utility_from_log(u: Utility, log_x: np.ndarray) -> np.ndarray:
    if u.is_log:
        return log_x
    return np.exp(u.p * log_x) / u.p


def _shifted_mean(values: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean accumulated around the first value; identical values give that value back exactly."""
    ref = float(values[0])
    shifted = values - ref
    return ref + math.fsum(shifted.tolist()) / values.size, shifted


def _mean_and_error(values: np.ndarray) -> Tuple[float, float]:
    n = values.size
    mean, shifted = _shifted_mean(values)
    if n < 2:
        return mean, 0.0
    centred = shifted - math.fsum(shifted.tolist()) / n
    var = math.fsum((centred**2).tolist()) / (n - 1)
    return mean, math.sqrt(var / n)


def _pair_means(values: np.ndarray, sizes: Sequence[int]) -> np.ndarray:
    """Average each path with its antithetic mirror (second half of its block)."""
    out = []
    offset = 0
    for size in sizes:
        block = values[offset : offset + size]
        half = size // 2
        out.append(0.5 * (block[:half] + block[half:]))
        offset += size
    return np.concatenate(out)


class _PathEngine:
    """Shared grid, strategy values and substreams for one simulation run."""

    def __init__(
        self,
        spec: MarketSpec,
        law: DefaultLaw,
        u: Utility,
        strategy_before: BeforeStrategy,
        cfg: SimConfig,
    ):
        self.spec, self.law, self.u, self.cfg = spec, law, u, cfg
        self.strategy_before = strategy_before
        n = cfg.n_time_steps
        self.h = spec.T / n
        self.sqrt_h = math.sqrt(self.h)
        self.grid = np.linspace(0.0, spec.T, n + 1)
        self.pi_nodes = _strategy_values(strategy_before, self.grid)
        if not np.all(np.isfinite(self.pi_nodes)):
            raise InadmissibleStrategyError("before-default strategy is not finite on the grid")
        self.jump_nodes = 1.0 - self.pi_nodes * spec.gamma
        if np.any(self.jump_nodes <= 0):
            bad = float(self.grid[np.argmax(self.jump_nodes <= 0)])
            raise InadmissibleStrategyError(f"strategy violates pi*gamma < 1 at t={bad:.6g}")
        pi = self.pi_nodes[:-1]
        self.step_drift = (spec.mu_F * pi - 0.5 * spec.sigma_F**2 * pi * pi) * self.h
        self.step_vol = spec.sigma_F * pi * self.sqrt_h
        self.rng = SubstreamRNG(cfg.seed, cfg.block_paths)

    def block_draws(self, index: int, size: int) -> BlockDraws:
        if self.cfg.antithetic:
            return self.rng.draws(index, size // 2, self.cfg.n_time_steps).mirrored()
        return self.rng.draws(index, size, self.cfg.n_time_steps)

    def default_free_log_wealth(self, draws: BlockDraws) -> np.ndarray:
        """ln X^F at every grid node, shape (paths, n_time_steps + 1)."""
        increments = self.step_drift + self.step_vol * draws.normals
        log_x = np.empty((draws.size, self.grid.size))
        log_x[:, 0] = np.log(self.spec.X0)
        log_x[:, 1:] = np.log(self.spec.X0) + np.cumsum(increments, axis=1)
        return log_x

    def terminal_log_wealth(
        self,
        draws: BlockDraws,
        log_free: np.ndarray,
        strategy_after_fn: AfterStrategy,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """ln X_T on every path and the default indicator tau <= T."""
        spec, grid, h = self.spec, self.grid, self.h
        tau = self.law.sample(draws.uniforms)
        defaulted = tau <= spec.T
        log_x = log_free[:, -1].copy()
        if not np.any(defaulted):
            return log_x, defaulted

        rows = np.flatnonzero(defaulted)
        td = tau[rows]
        n = self.cfg.n_time_steps
        step = np.clip(np.floor(td / h).astype(int), 0, n - 1)
        elapsed = np.clip(td - grid[step], 0.0, h)
        frac = elapsed / h
        z_step = draws.normals[rows, step]
        w_pre = self.sqrt_h * (frac * z_step + np.sqrt(frac * (1.0 - frac)) * draws.bridge[rows])
        w_post = self.sqrt_h * z_step - w_pre

        pi_pre = self.pi_nodes[step]
        log_pre = (
            log_free[rows, step]
            + (spec.mu_F * pi_pre - 0.5 * spec.sigma_F**2 * pi_pre * pi_pre) * elapsed
            + spec.sigma_F * pi_pre * w_pre
        )
        jump = 1.0 - _strategy_values(self.strategy_before, td) * spec.gamma
        if np.any(jump <= 0):
            raise InadmissibleStrategyError("wealth jump 1 - pi(tau)*gamma is not positive")

        columns = np.arange(n)[None, :]
        step_start = np.maximum(grid[None, :-1], td[:, None])
        dt = np.clip(grid[None, 1:] - step_start, 0.0, None)
        dw = np.where(
            columns > step[:, None],
            self.sqrt_h * draws.normals[rows],
            np.where(columns == step[:, None], w_post[:, None], 0.0),
        )
        theta = np.broadcast_to(td[:, None], dt.shape)
        pi_after = _strategy_values(strategy_after_fn, theta, step_start)
        mu_after = np.broadcast_to(np.asarray(spec.after_drift(theta, step_start), dtype=float), dt.shape)
        vol_after = np.broadcast_to(np.asarray(spec.after_vol(theta, step_start), dtype=float), dt.shape)
        growth = (mu_after * pi_after - 0.5 * vol_after**2 * pi_after**2) * dt + vol_after * pi_after * dw

        log_x[rows] = log_pre + np.log(jump) + growth.sum(axis=1)
        return log_x, defaulted

    def decomposition_values(self, log_free: np.ndarray) -> np.ndarray:
        """U(X_T^F) G(T) + int_0^T V^d_theta(X_theta^F (1 - pi(theta) gamma)) dtheta per path."""
        terminal = _utility_from_log(self.u, log_free[:, -1]) * float(self.law.survival(self.spec.T))
        log_post = log_free + np.log(self.jump_nodes)[None, :]
        after_values = np.asarray(
            value_after_from_log(self.spec, self.law, self.u, self.grid[None, :], log_post), dtype=float
        )
        return terminal + simpson(after_values, x=self.grid, axis=1)

    def progress(self, desc: str):
        n_blocks = self.rng.n_blocks(self.cfg.n_paths)
        return tqdm(
            self.rng.blocks(self.cfg.n_paths),
            total=n_blocks,
            desc=desc,
            unit="block",
            disable=not self.cfg.progress,
        )


def _reduce(engine: _PathEngine, values: np.ndarray, sizes: Sequence[int]) -> Tuple[float, float]:
    if engine.cfg.antithetic:
        pairs = _pair_means(values, sizes)
        mean, _ = _shifted_mean(values)
        _, error = _mean_and_error(pairs)
        return mean, error
    return _mean_and_error(values)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def simulate_wealth(
    spec: MarketSpec,
    law: DefaultLaw,
    u: Utility,
    strategy_before: BeforeStrategy,
    strategy_after_fn: AfterStrategy,
    cfg: Optional[SimConfig] = None,
) -> SimReport:
    """
    Estimate E[U(X_T)] for the given strategy pair.

    strategy_before(t) is sampled at the left end of each step; the jump at
    tau uses strategy_before(tau). strategy_after_fn(theta, t) is evaluated at
    the start of each post-default step.

    Raises InadmissibleStrategyError if a wealth jump factor is not positive.
    """
    validate(spec, law, u)
    cfg = cfg or SimConfig()
    cfg.check()
    engine = _PathEngine(spec, law, u, strategy_before, cfg)

    start = time.time()
    utilities: List[np.ndarray] = []
    decomposition: List[np.ndarray] = []
    sizes: List[int] = []
    n_defaults = 0
    for index, size in engine.progress("simulate"):
        draws = engine.block_draws(index, size)
        log_free = engine.default_free_log_wealth(draws)
        log_x, defaulted = engine.terminal_log_wealth(draws, log_free, strategy_after_fn)
        utilities.append(_utility_from_log(u, log_x))
        decomposition.append(engine.decomposition_values(log_free))
        sizes.append(size)
        n_defaults += int(np.count_nonzero(defaulted))

    estimate, std_error = _reduce(engine, np.concatenate(utilities), sizes)
    decomp, decomp_error = _reduce(engine, np.concatenate(decomposition), sizes)
    report = SimReport(
        estimate=estimate,
        std_error=std_error,
        n_paths=cfg.n_paths,
        decomposition_estimate=decomp,
        default_fraction=n_defaults / cfg.n_paths,
        seed=cfg.seed,
        decomposition_std_error=decomp_error,
    )
    logger.info(
        "Simulated %d paths (%d steps, seed=%d): E[U]=%.8g +/- %.2g, decomposition=%.8g, defaults=%.4f (%.2fs)",
        cfg.n_paths,
        cfg.n_time_steps,
        cfg.seed,
        estimate,
        std_error,
        decomp,
        report.default_fraction,
        time.time() - start,
    )
    return report


def decomposition_estimate(
    spec: MarketSpec,
    law: DefaultLaw,
    u: Utility,
    strategy_before: BeforeStrategy,
    cfg: Optional[SimConfig] = None,
) -> float:
    """Decomposition side alone; uses the same draws as simulate_wealth."""
    validate(spec, law, u)
    cfg = cfg or SimConfig()
    cfg.check()
    engine = _PathEngine(spec, law, u, strategy_before, cfg)
    values: List[np.ndarray] = []
    sizes: List[int] = []
    for index, size in engine.progress("decomposition"):
        draws = engine.block_draws(index, size)
        values.append(engine.decomposition_values(engine.default_free_log_wealth(draws)))
        sizes.append(size)
    estimate, _ = _reduce(engine, np.concatenate(values), sizes)
    return estimate


def optimal_strategies(
    spec: MarketSpec,
    u: Utility,
    sol: ValuePolicySolution,
) -> Tuple[BeforeStrategy, AfterStrategy]:
    """Solved before-default policy (interpolated) and the closed-form after-default policy."""

    def before(t: np.ndarray) -> Any:
        return sol.strategy_at(t)

    def after(theta: np.ndarray, t: np.ndarray) -> Any:
        return strategy_after(spec, u, theta, t if spec.time_dependent else None)

    return before, after


def perturbation_test(
    spec: MarketSpec,
    law: DefaultLaw,
    u: Utility,
    sol: ValuePolicySolution,
    deltas: Sequence[float],
    cfg: Optional[SimConfig] = None,
) -> List[PerturbationRow]:
    """
    Re-estimate E[U(X_T)] with the before-default strategy shifted by each delta.

    All runs share the seed (common random numbers). Shifts that push
    pi*gamma to 1 or beyond are skipped and logged.
    """
    cfg = cfg or SimConfig()
    _, after = optimal_strategies(spec, u, sol)
    rows: List[PerturbationRow] = []
    for delta in deltas:
        shifted = sol.pi + float(delta)
        if spec.gamma > 0 and np.any(shifted * spec.gamma >= 1.0):
            note = f"pi + {delta:g} violates pi*gamma < 1"
            logger.warning("Skipping perturbation delta=%g: %s", delta, note)
            rows.append(PerturbationRow(delta=float(delta), estimate=math.nan, std_error=math.nan, skipped=True, note=note))
            continue

        def before(t: np.ndarray, shifted: np.ndarray = shifted) -> np.ndarray:
            return np.interp(t, sol.grid, shifted)

        report = simulate_wealth(spec, law, u, before, after, cfg)
        rows.append(PerturbationRow(delta=float(delta), estimate=report.estimate, std_error=report.std_error))
    return rows


__all__ = [
    "SimConfig",
    "SimReport",
    "PerturbationRow",
    "simulate_wealth",
    "decomposition_estimate",
    "optimal_strategies",
    "perturbation_test",
]
