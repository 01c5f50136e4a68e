"""Low-rank Krylov solvers for multiterm linear matrix equations.

Solves ``sum_i A_i X B_i^T + C1 C2^T = 0`` with GMRES/FOM (``krylov.solve``)
or conjugate gradients (``shortrec.cg_solve``) run entirely in factored
low-rank arithmetic, with compression schedules that preserve convergence and
basis orthonormality.
"""

from .errors import (
    ContractViolationError,
    FactorizationError,
    LowRankKrylovError,
    NumericError,
    ParseError,
    ResourceLimitError,
    SpdViolationError,
    SylvesterSingularityError,
    ValidationError,
)
from .kronop import (
    MultitermOperator,
    SpectralEstimates,
    estimate_extremes,
    materialize_kron,
    unvec,
    vec,
)
from .krylov import (
    ArnoldiState,
    SolveReport,
    SolverConfig,
    eps_a_schedule,
    eps_orth_value,
    givens_update,
    recover_solution,
    residual_bound,
    solve,
    true_relative_residual,
)
from .lowrank import (
    LowRankMatrix,
    TruncationResult,
    compress,
    concat_scaled,
    fro_norm,
    inner,
    materialize,
    scale,
    trunc,
    truncate_dense,
)
from .precond import (
    InnerKrylovSpec,
    MeanBasedSpec,
    OneTermSpec,
    Preconditioner,
    SylvesterSpec,
    UllmannSpec,
    build,
    convdiff_mean_precond,
    ullmann_gbar,
)
from .problems import (
    ConvDiffProblem,
    StochasticDiffusionProblem,
    gen_convdiff,
    gen_stochastic,
    read_mm,
    read_problem,
    write_mm,
    write_problem,
)
from .shortrec import cg_solve, cg_threshold

__version__ = "0.1.0"

__all__ = [
    "ArnoldiState",
    "ContractViolationError",
    "ConvDiffProblem",
    "FactorizationError",
    "InnerKrylovSpec",
    "LowRankKrylovError",
    "LowRankMatrix",
    "MeanBasedSpec",
    "MultitermOperator",
    "NumericError",
    "OneTermSpec",
    "ParseError",
    "Preconditioner",
    "ResourceLimitError",
    "SolveReport",
    "SolverConfig",
    "SpdViolationError",
    "SpectralEstimates",
    "StochasticDiffusionProblem",
    "SylvesterSingularityError",
    "SylvesterSpec",
    "TruncationResult",
    "UllmannSpec",
    "ValidationError",
    "build",
    "cg_solve",
    "cg_threshold",
    "compress",
    "concat_scaled",
    "convdiff_mean_precond",
    "eps_a_schedule",
    "eps_orth_value",
    "estimate_extremes",
    "fro_norm",
    "gen_convdiff",
    "gen_stochastic",
    "givens_update",
    "inner",
    "materialize",
    "materialize_kron",
    "read_mm",
    "read_problem",
    "recover_solution",
    "residual_bound",
    "scale",
    "solve",
    "true_relative_residual",
    "trunc",
    "truncate_dense",
    "ullmann_gbar",
    "unvec",
    "vec",
    "write_mm",
    "write_problem",
]
