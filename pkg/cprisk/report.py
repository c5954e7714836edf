"""
cprisk.report

Command implementations behind cprisk_cli.py.

Responsibilities:
- cmd_solve     : config -> per-node solution CSV.
- cmd_tables    : reproduce the embedded tables, print a comparison.
- cmd_figures   : value-function curves (Y vs Merton) for the gamma or lambda sweep.
- cmd_simulate  : Monte Carlo report as deterministic JSON.

Every command returns a process exit code:
  0 success, 1 tolerance failure, 2 input error, 3 solver failure.
"""

from __future__ import annotations

import io
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, TextIO, Union

import pandas as pd
from rich.console import Console
from rich.table import Table

from cprisk.before_default import SolverConfig, ValuePolicySolution, solve
from cprisk.config import load_run_config, progress_enabled
from cprisk.errors import InadmissibleStrategyError, ModelValidationError, SolverError
from cprisk.model import DefaultLaw, MarketSpec, Utility
from cprisk.montecarlo import SimReport, optimal_strategies, simulate_wealth
from cprisk.tables import run_table_check

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_INPUT = 2
EXIT_SOLVER = 3

SOLUTION_COLUMNS = ["t", "Y", "pi_hat", "pi_lower", "pi_upper", "Y_merton", "pi_merton", "log_kp"]
CURVE_COLUMNS = ["t", "label", "Y", "Y_merton"]
FLOAT_FORMAT = "%.12g"


@dataclass(frozen=True)
class FigureSet:
    """One sweep of value-function curves at fixed p."""

    sweep: str  # "gamma" | "lambda"
    p: float
    gamma: float
    lam: float
    values: Sequence[float]


FIGURE_SETS: Dict[str, FigureSet] = {
    "gamma": FigureSet(sweep="gamma", p=0.1, gamma=0.1, lam=0.01, values=(0.01, 0.1, 0.2, 0.3)),
    "lambda": FigureSet(sweep="lambda", p=0.1, gamma=0.1, lam=0.01, values=(0.01, 0.05, 0.1, 0.3)),
}


def _error(message: str) -> None:
    print(f"[ERROR] {message}", file=sys.stderr)


def _run_guarded(action: Callable[[], int]) -> int:
    """Map library exceptions to exit codes, one diagnostic line per problem."""
    try:
        return action()
    except ModelValidationError as exc:
        for msg in exc.errors:
            _error(msg)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        _error(str(exc))
        return EXIT_INPUT
    except (SolverError, InadmissibleStrategyError) as exc:
        _error(f"solver failure: {exc}")
        return EXIT_SOLVER


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------


def _write_text(target: Path, text: str) -> None:
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_frame(frame: pd.DataFrame, out: Union[str, Path, TextIO]) -> None:
    frame.to_csv(out, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def solution_csv_text(sol: ValuePolicySolution) -> str:
    buffer = io.StringIO()
    write_frame(sol.to_frame()[SOLUTION_COLUMNS], buffer)
    return buffer.getvalue()


def read_solution_csv(path: Union[str, Path]) -> pd.DataFrame:
    frame = pd.read_csv(path)
    if list(frame.columns) != SOLUTION_COLUMNS:
        raise ModelValidationError([f"{path}: expected header {','.join(SOLUTION_COLUMNS)}"])
    return frame


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_solve(config_path: Union[str, Path], out_path: Optional[Union[str, Path]] = None) -> int:
    """Solve the config's model and write the per-node CSV (to stdout without a path)."""

    def action() -> int:
        run, bundle = load_run_config(config_path)
        sol = solve(bundle.spec, bundle.law, bundle.utility, run.solver.to_config())
        target = out_path or run.output_path
        text = solution_csv_text(sol)
        if target is None:
            sys.stdout.write(text)
            return EXIT_OK
        target = Path(target)
        _write_text(target, text)
        print(f"[OK] Wrote {len(sol.grid)} nodes to {target}")
        return EXIT_OK

    return _run_guarded(action)


def _print_table_report(result: Dict[str, Any], console: Console) -> None:
    table = Table(title="Strategy tables: computed vs printed")
    for name in ("Table", "Cell", "Printed", "Computed", "|diff|", "Tol", "Status"):
        table.add_column(name, justify="left" if name in ("Table", "Cell") else "right")
    for row in result["cells"]:
        status = "[green]PASS[/green]" if row["passed"] else "[red]FAIL[/red]"
        table.add_row(
            row["table"],
            row["cell"],
            f"{row['expected']:.2f}",
            f"{row['computed']:.4f}",
            f"{row['diff']:.4f}",
            f"{row['tolerance']:g}",
            status,
        )
    console.print(table)
    passed = len(result["cells"]) - result["failures"]
    console.print(f"{passed}/{len(result['cells'])} cells within tolerance ({result['time_elapsed_sec']}s)")


def cmd_tables(as_json: bool = False, solver_cfg: Optional[SolverConfig] = None) -> int:
    """Compare every embedded cell; exit 1 lists the failing cells."""

    def action() -> int:
        result = run_table_check(solver_cfg=solver_cfg, progress=progress_enabled())
        if as_json:
            print(json.dumps(result, indent=2))
        else:
            _print_table_report(result, Console())
        for row in result["cells"]:
            if not row["passed"]:
                _error(f"{row['table']} {row['cell']}: computed {row['computed']:.4f}, printed {row['expected']:.2f}")
        return EXIT_OK if result["status"] == "PASS" else EXIT_TOLERANCE

    return _run_guarded(action)


def figure_curves(
    which: str,
    p: Optional[float] = None,
    values: Optional[Sequence[float]] = None,
    n_steps: int = 1000,
) -> pd.DataFrame:
    """Long-format curves `t,label,Y,Y_merton`, one block of rows per swept value."""
    if which not in FIGURE_SETS:
        raise ModelValidationError([f"which: expected one of {sorted(FIGURE_SETS)}, got {which!r}"])
    fig = FIGURE_SETS[which]
    p = fig.p if p is None else p
    values = fig.values if values is None else values
    u = Utility.power(p)
    cfg = SolverConfig(n_steps=n_steps)

    frames: List[pd.DataFrame] = []
    for value in values:
        gamma = value if fig.sweep == "gamma" else fig.gamma
        lam = value if fig.sweep == "lambda" else fig.lam
        sol = solve(MarketSpec.reference(gamma=gamma), DefaultLaw.exponential(lam), u, cfg)
        frames.append(
            pd.DataFrame(
                {
                    "t": sol.grid,
                    "label": f"{fig.sweep}={value:g}",
                    "Y": sol.Y,
                    "Y_merton": sol.Y_merton,
                }
            )
        )
        logger.info("Curve %s=%g: Y(0)=%.8f Y_M(0)=%.8f", fig.sweep, value, sol.Y[0], sol.Y_merton[0])
    return pd.concat(frames, ignore_index=True)[CURVE_COLUMNS]


def cmd_figures(
    which: str,
    out_path: Union[str, Path],
    p: Optional[float] = None,
    values: Optional[Sequence[float]] = None,
    n_steps: int = 1000,
) -> int:
    def action() -> int:
        frame = figure_curves(which, p=p, values=values, n_steps=n_steps)
        target = Path(out_path)
        target.parent.mkdir(parents=True, exist_ok=True)
        write_frame(frame, target)
        print(f"[OK] Wrote {frame['label'].nunique()} curves to {target}")
        return EXIT_OK

    return _run_guarded(action)


def simulate_config(
    config_path: Union[str, Path],
    paths: Optional[int] = None,
    seed: Optional[int] = None,
) -> SimReport:
    """Solve the config's model, then simulate its optimal strategy pair."""
    run, bundle = load_run_config(config_path)
    overrides: Dict[str, Any] = {}
    if paths is not None:
        overrides["n_paths"] = paths
    if seed is not None:
        overrides["seed"] = seed
    sim = run.sim.model_copy(update=overrides)
    sol = solve(bundle.spec, bundle.law, bundle.utility, run.solver.to_config())
    before, after = optimal_strategies(bundle.spec, bundle.utility, sol)
    return simulate_wealth(bundle.spec, bundle.law, bundle.utility, before, after, sim.to_config())


def report_json(report: SimReport) -> str:
    return json.dumps(report.to_json_dict(), indent=2) + "\n"


def cmd_simulate(
    config_path: Union[str, Path],
    paths: Optional[int] = None,
    seed: Optional[int] = None,
    out_path: Optional[Union[str, Path]] = None,
) -> int:
    def action() -> int:
        text = report_json(simulate_config(config_path, paths=paths, seed=seed))
        if out_path is None:
            sys.stdout.write(text)
        else:
            target = Path(out_path)
            _write_text(target, text)
            print(f"[OK] Wrote simulation report to {target}")
        return EXIT_OK

    return _run_guarded(action)


__all__ = [
    "EXIT_OK",
    "EXIT_TOLERANCE",
    "EXIT_INPUT",
    "EXIT_SOLVER",
    "SOLUTION_COLUMNS",
    "CURVE_COLUMNS",
    "FIGURE_SETS",
    "FigureSet",
    "solution_csv_text",
    "read_solution_csv",
    "figure_curves",
    "simulate_config",
    "report_json",
    "cmd_solve",
    "cmd_tables",
    "cmd_figures",
    "cmd_simulate",
]
