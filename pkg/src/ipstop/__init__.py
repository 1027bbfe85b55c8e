"""Interior point solvers whose inner Krylov iterations can stop early on
stagnation of the outer convergence indicators."""

from . import errors, ipkrylov, ipm, kernels, krylov, linop, problems, theory
from .ipkrylov import (CorrectorShifts, EarlyStopConfig, InnerContext,
                       InnerResult, TrackedDirection, corrector_residual_terms,
                       ipcg_solve, ipcg_qp_solve, ipminres_solve, var_window,
                       write_trace_csv)
from .ipm import (FixTol, IndicatorStop, IpmConfig, IpmResult, ProblemInstance,
                  VarTol, compute_residuals, initial_iterate, ipm_solve,
                  vartol_tolerance)
from .kernels import HAVE_COMPILED_KERNELS
from .krylov import KrylovResult, StopReason, minres, pcg
from .state import BarrierTerms, Bounds, Iterate, Residuals
from .theory import (TheoryConfig, alpha_tilde, in_neighborhood, ipm_solve_theory,
                     lemma1_check, lemma1_inequalities, neighborhood_check,
                     theoretical_accept)

__version__ = "0.1.0"

__all__ = [
    "errors", "ipkrylov", "ipm", "kernels", "krylov", "linop", "problems",
    "theory",
    "CorrectorShifts", "EarlyStopConfig", "InnerContext", "InnerResult",
    "TrackedDirection", "corrector_residual_terms", "ipcg_solve",
    "ipcg_qp_solve", "ipminres_solve", "var_window", "write_trace_csv",
    "FixTol", "IndicatorStop", "IpmConfig", "IpmResult", "ProblemInstance",
    "VarTol", "compute_residuals", "initial_iterate", "ipm_solve",
    "vartol_tolerance",
    "HAVE_COMPILED_KERNELS",
    "KrylovResult", "StopReason", "minres", "pcg",
    "BarrierTerms", "Bounds", "Iterate", "Residuals",
    "TheoryConfig", "alpha_tilde", "in_neighborhood", "ipm_solve_theory",
    "lemma1_check", "lemma1_inequalities", "neighborhood_check",
    "theoretical_accept",
    "__version__",
]
