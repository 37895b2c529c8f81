"""Symbolic-numeric toolkit for noncommutative Painleve II structures:
quasideterminants, Lax pairs and zero-curvature residuals, Darboux
transformations, Riccati forms, Toda seed solutions, and the hbar-deformed
derivation with its classical limit."""

__version__ = "0.1.0"

from .algebra import (
    GaussRat,
    NCExpr,
    RewriteSystem,
    checked_inv,
    derive,
    inv_system,
    nc_mul,
    normal_form,
    qp1_system,
    realize,
    reduce_modulo,
    sym,
    zf_system,
)
from .config import SessionConfig, load_config
from .grids import GridFunction, ResidualReport
from .parsing import ParseError, parse_expression, print_expr

__all__ = [
    "GaussRat",
    "GridFunction",
    "NCExpr",
    "ParseError",
    "ResidualReport",
    "RewriteSystem",
    "SessionConfig",
    "__version__",
    "checked_inv",
    "derive",
    "inv_system",
    "load_config",
    "nc_mul",
    "normal_form",
    "parse_expression",
    "print_expr",
    "qp1_system",
    "realize",
    "reduce_modulo",
    "sym",
    "zf_system",
]
