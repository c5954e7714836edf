"""
cprisk

Optimal investment for a CRRA investor holding a stock exposed to
counterparty default risk.

Modules:
- model          : market, default law, utility, validation
- after_default  : closed-form after-default value and strategy
- before_default : Howard policy iteration / log closed form, Merton benchmark
- montecarlo     : simulation checks of the optimal strategy
- config         : JSON run configuration
- tables         : embedded reference tables
- report         : command implementations used by cprisk_cli.py
"""

from cprisk.errors import CpriskError, InadmissibleStrategyError, ModelValidationError, SolverError
from cprisk.model import DefaultLaw, MarketSpec, Utility, validate

__version__ = "0.1.0"

__all__ = [
    "CpriskError",
    "InadmissibleStrategyError",
    "ModelValidationError",
    "SolverError",
    "DefaultLaw",
    "MarketSpec",
    "Utility",
    "validate",
    "__version__",
]
