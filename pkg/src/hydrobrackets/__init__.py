"""Tools for first-order quasilinear systems and their Poisson structures.

Modules cover a small symbolic expression language (`expr`), pointwise
differential-geometric tensors of a declared system (`tensor`), structural
verification of bracket classes and flat-coordinate construction (`verify`),
discretized field brackets on a periodic grid (`fieldbracket`), and the
generalized hodograph method for diagonal systems (`hodograph`).
"""

__version__ = "0.1.0"

from hydrobrackets.expr import Expr, differentiate, evaluate, free_names, parse
from hydrobrackets.system import Box, SystemDef, sample_box
from hydrobrackets.config import load_config, parse_document
from hydrobrackets.errors import HydroBracketsError
from hydrobrackets import (
    errors, fieldbracket, hodograph, library, tensor, verify,
)

__all__ = [
    "Box", "Expr", "HydroBracketsError", "SystemDef", "__version__",
    "differentiate", "errors", "evaluate", "fieldbracket", "free_names",
    "hodograph", "library", "load_config", "parse", "parse_document",
    "sample_box", "tensor", "verify",
]
