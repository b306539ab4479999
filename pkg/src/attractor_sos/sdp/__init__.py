"""Semidefinite programs: data model, embedded solver, SDPA interchange."""

from .problem import (SdpProblem, SdpSolution, SdpStatus, SolverSettings,
                      residuals, solution_residuals)
from .solver import solve
from .sdpa import export_sdpa, import_sdpa

__all__ = ["SdpProblem", "SdpSolution", "SdpStatus", "SolverSettings", "residuals",
           "solution_residuals", "solve", "export_sdpa", "import_sdpa"]
