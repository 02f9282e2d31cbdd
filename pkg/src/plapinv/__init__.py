"""Higher Dirichlet eigenpairs of the p-Laplacian by balanced inverse iteration."""

from .balance import (BalanceResult, BetaMap, Bracket, NoSignChange, NotSignChanging, PhiMap,
                      RootConfig, balance_residual, find_balanced_alpha, fixed_point, phi)
from .driver import (RunAborted, RunConfig, RunTrace, convergence_diagnostics, initial_guess,
                     run_algorithm_a, validate_u0)
from .femspace import (FeFunction, grad_lp_norm, lp_norm, negative_part, normalize_lp,
                       positive_part, rayleigh)
from .mesh import DegenerateMesh, Mesh, build_interval_mesh, build_rect_mesh
from .oracle import EigenOracle1D, counterexample_sequence, lambda_k_1d, shoot_1d, square_eigs_p2
from .ppoisson import NonConvergence, PPoissonConfig, solve_ppoisson, solve_signed_power_rhs

__all__ = [
    "BalanceResult", "BetaMap", "Bracket", "NoSignChange", "NotSignChanging", "PhiMap",
    "RootConfig", "balance_residual", "find_balanced_alpha", "fixed_point", "phi",
    "RunAborted", "RunConfig", "RunTrace", "convergence_diagnostics", "initial_guess",
    "run_algorithm_a", "validate_u0",
    "FeFunction", "grad_lp_norm", "lp_norm", "negative_part", "normalize_lp", "positive_part",
    "rayleigh",
    "DegenerateMesh", "Mesh", "build_interval_mesh", "build_rect_mesh",
    "EigenOracle1D", "counterexample_sequence", "lambda_k_1d", "shoot_1d", "square_eigs_p2",
    "NonConvergence", "PPoissonConfig", "solve_ppoisson", "solve_signed_power_rhs",
]
