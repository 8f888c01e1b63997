"""Fixed-width modular arithmetic with lazy Montgomery reduction, truncated
products and an ECM stage-1 engine."""

from .errors import ConfigError, ContractError, InvalidModulusError, WidthError
from .mpnat import FixedNat, MulCounter
from .modred import Bound, LazyResidue, MontCtx, mont_mul, mont_setup
from .ecm import stage1, factor

__all__ = [
    "Bound", "ConfigError", "ContractError", "FixedNat", "InvalidModulusError",
    "LazyResidue", "MontCtx", "MulCounter", "WidthError", "factor", "mont_mul",
    "mont_setup", "stage1",
]
