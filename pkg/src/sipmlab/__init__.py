"""Numerical toolkit for the linear instability of SIPM-type interface flows.

Modules
-------
multiplier  symbols, weights ``p_n`` and their validation
contfrac    characteristic continued fraction, root ``lambda_*``, coefficients
spectral    eigenfunctions, linear evolution, the ``beta = 2`` pair, scaling
patch       contour dynamics of a graph interface (``0 < beta < 1``)
analysis    Sobolev norms, dissipation, energy estimates, power-law fits
verify      invariance and limit checks shared by the CLI and tests
cli         command-line driver
"""

from .multiplier import (DomainError, MultiplierSymbol, PnSequence, SequenceError,
                         SipmParams, ValidationReport, check_solver_ready, pn_from_symbol,
                         sipm_pn, sipm_symbol, validate_symbol)
from .contfrac import (CoefficientTable, ConvergenceError, DegeneracyError, LambdaStarResult,
                       RootError, ScanTable, coefficients, f2, f2_truncated, g_n, scan_f2,
                       refine_crossing, solve_lambda_star, truncated_matrix_oracle)

__version__ = "0.1.0"
