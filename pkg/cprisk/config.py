"""
cprisk.config

JSON run configuration.

Responsibilities:
- Pydantic models for the market, the default law, the utility and the
  solver / simulation settings (unknown keys are rejected).
- load_run_config(path): parse a JSON file and build a validated ModelBundle.
- Environment knobs: CPRISK_LOG_LEVEL, CPRISK_PROGRESS.

Example:

    {
      "market": {"mu_F": 0.03, "sigma_F": 0.1, "gamma": 0.1},
      "law": {"kind": "exponential", "lam": 0.01},
      "utility": 0.2
    }
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from cprisk.before_default import SolverConfig
from cprisk.errors import ModelValidationError
from cprisk.model import (
    ConstantSchedule,
    DefaultLaw,
    LinearSchedule,
    MarketSpec,
    ModelBundle,
    Utility,
    load_density_csv,
    validate,
)
from cprisk.montecarlo import SimConfig

logger = logging.getLogger(__name__)

ENV_LOG_LEVEL = "CPRISK_LOG_LEVEL"
ENV_PROGRESS = "CPRISK_PROGRESS"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScheduleConfig(_Strict):
    """After-default coefficients: reference (linear in theta), constant, or linear."""

    kind: Literal["reference", "constant", "linear"] = "reference"
    mu: Optional[float] = None
    sigma: Optional[float] = None
    mu0: Optional[float] = None
    mu1: Optional[float] = None
    sigma0: Optional[float] = None
    sigma1: Optional[float] = None

    @model_validator(mode="after")
    def _required_fields(self) -> "ScheduleConfig":
        if self.kind == "constant" and (self.mu is None or self.sigma is None):
            raise ValueError("constant schedule needs 'mu' and 'sigma'")
        if self.kind == "linear" and None in (self.mu0, self.mu1, self.sigma0, self.sigma1):
            raise ValueError("linear schedule needs 'mu0', 'mu1', 'sigma0' and 'sigma1'")
        return self


class MarketConfig(_Strict):
    mu_F: float
    sigma_F: float
    gamma: float
    T: float = 1.0
    X0: float = 1.0
    after_default: ScheduleConfig = Field(default_factory=ScheduleConfig)

    def to_spec(self) -> MarketSpec:
        sched = self.after_default
        if sched.kind == "reference":
            return MarketSpec.reference(mu_F=self.mu_F, sigma_F=self.sigma_F, gamma=self.gamma, T=self.T, X0=self.X0)
        if sched.kind == "constant":
            return MarketSpec.constant_after(
                self.mu_F, self.sigma_F, self.gamma, sched.mu, sched.sigma, T=self.T, X0=self.X0
            )
        return MarketSpec(
            mu_F=self.mu_F,
            sigma_F=self.sigma_F,
            gamma=self.gamma,
            mu_d=LinearSchedule(sched.mu0, sched.mu1, self.T),
            sigma_d=LinearSchedule(sched.sigma0, sched.sigma1, self.T),
            T=self.T,
            X0=self.X0,
        )


class LawConfig(_Strict):
    kind: Literal["exponential", "tabulated"] = "exponential"
    lam: Optional[float] = None
    path: Optional[str] = None
    theta: Optional[List[float]] = None
    alpha: Optional[List[float]] = None

    @model_validator(mode="after")
    def _required_fields(self) -> "LawConfig":
        if self.kind == "exponential" and self.lam is None:
            raise ValueError("exponential law needs 'lam'")
        if self.kind == "tabulated":
            inline = self.theta is not None or self.alpha is not None
            if self.path is None and not inline:
                raise ValueError("tabulated law needs 'path' or inline 'theta'/'alpha'")
            if self.path is not None and inline:
                raise ValueError("tabulated law takes either 'path' or inline 'theta'/'alpha', not both")
            if inline and (self.theta is None or self.alpha is None):
                raise ValueError("inline tabulated law needs both 'theta' and 'alpha'")
        return self

    def to_law(self, base_dir: Optional[Path] = None) -> DefaultLaw:
        if self.kind == "exponential":
            return DefaultLaw.exponential(self.lam)
        if self.path is not None:
            path = Path(self.path)
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            return load_density_csv(path)
        return DefaultLaw.tabulated(self.theta, self.alpha)


class SolverSettings(_Strict):
    n_steps: int = 1000
    howard_tol: float = 1e-10
    max_howard_iters: int = 50
    root_tol: float = 1e-13
    value_tol: Optional[float] = None

    def to_config(self) -> SolverConfig:
        return SolverConfig(**self.model_dump())


class SimSettings(_Strict):
    n_paths: int = 100_000
    n_time_steps: int = 100
    seed: int = 20240601
    antithetic: bool = False

    def to_config(self, progress: Optional[bool] = None) -> SimConfig:
        return SimConfig(progress=progress_enabled() if progress is None else progress, **self.model_dump())


class RunConfig(_Strict):
    market: MarketConfig
    law: LawConfig
    utility: Union[float, Literal["log"]]
    solver: SolverSettings = Field(default_factory=SolverSettings)
    sim: SimSettings = Field(default_factory=SimSettings)
    output_path: Optional[str] = None

    def to_utility(self) -> Utility:
        if self.utility == "log":
            return Utility.log()
        return Utility.power(float(self.utility))

    def build(self, base_dir: Optional[Path] = None) -> ModelBundle:
        """Domain objects, checked by model.validate."""
        return validate(self.market.to_spec(), self.law.to_law(base_dir), self.to_utility())


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def format_validation_error(exc: ValidationError) -> List[str]:
    messages = []
    for err in exc.errors():
        loc = ".".join(str(part) for part in err.get("loc", ()))
        messages.append(f"{loc}: {err.get('msg', 'invalid value')}" if loc else err.get("msg", "invalid value"))
    return messages


def parse_run_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ModelValidationError(format_validation_error(exc)) from exc


def load_run_config(path: Union[str, Path]) -> Tuple[RunConfig, ModelBundle]:
    """
    Read a JSON run config and build its validated ModelBundle.

    Raises:
      FileNotFoundError if the file is missing.
      ModelValidationError for malformed JSON, schema errors and inadmissible models.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelValidationError([f"config: invalid JSON ({exc.msg} at line {exc.lineno})"]) from exc
    if not isinstance(data, dict):
        raise ModelValidationError(["config: top-level JSON value must be an object"])
    run = parse_run_config(data)
    bundle = run.build(path.resolve().parent)
    logger.info("Loaded run config %s (%s, gamma=%g)", path, bundle.utility.label, bundle.spec.gamma)
    return run, bundle


def progress_enabled() -> bool:
    return os.getenv(ENV_PROGRESS, "0").strip().lower() in ("1", "true", "yes", "on")


__all__ = [
    "ENV_LOG_LEVEL",
    "ENV_PROGRESS",
    "ScheduleConfig",
    "MarketConfig",
    "LawConfig",
    "SolverSettings",
    "SimSettings",
    "RunConfig",
    "format_validation_error",
    "parse_run_config",
    "load_run_config",
    "progress_enabled",
]
