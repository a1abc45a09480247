"""Law-of-the-iterated-logarithm diagnostics for SDE schemes on decreasing grids.

The package simulates ergodic stochastic differential equations with
backward-Euler-type schemes on decreasing time grids, and provides the
statistical machinery to observe the almost-sure fluctuation envelope of the
time-average error: martingale/remainder decompositions, quadratic-variation
diagnostics, iterated-logarithm statistics, and checkable sufficient
conditions on moments, mixing and step decay.

Modules
-------
grid        decreasing-step grids and their integer-clock subsequence
models      SDE / spectral SPDE model declarations and test functions
integrate   one-step schemes (backward Euler, exponential Euler, exact OU)
assume      assumption audits: exponent constraints, step conditions, scans
lilstat     time-average accumulators and iterated-logarithm statistics
martingale  decomposition ledgers, increments, quadratic variation
mc          counter-based random streams
ensemble    the deterministic many-path simulation engine
cli         configuration parsing and the ``lilstep`` command line tool
"""

from __future__ import annotations

__version__ = "0.1.0"

from .assume import (
    ConditionEntry,
    ConditionReport,
    ExponentParams,
    check_exponent_constraints,
    check_step_conditions,
    contraction_fit,
    moment_scan,
    strong_order_fit,
)
from .ensemble import (
    EnsembleConfig,
    EnsembleSummary,
    PathError,
    PathRecord,
    config_fingerprint,
    merge_summaries,
    run_ensemble,
)
from .errors import (
    BudgetError,
    ConfigurationError,
    DomainError,
    HorizonError,
    LilstepError,
    StepSolveError,
    UsageError,
)
from .grid import (
    QuasiUniformIndex,
    StepSpec,
    TimeGrid,
    build_grid,
    quasi_uniform_index,
    tilde_of,
)
from .integrate import SchemeSpec, simulate_path, step_state
from .lilstat import (
    LilAccumulator,
    LilCheckpoint,
    VEstimate,
    lil_statistic,
    v_batch_means,
    v_ensemble,
    v_exact_linear,
)
from .martingale import (
    MartingaleLedger,
    decomposition,
    decomposition_table,
    qv_average,
    record_linear_bem_path,
    strassen_functional,
    tail_weighted_mean_linear,
)
from .mc import PathStream, block_normals, derive_seed
from .models import (
    Nonlinearity,
    SodeModel,
    SpectralSpdeModel,
    TestFunction,
    capped_sqnorm_function,
    coordinate_function,
    cubic_model,
    ou_model,
    spde_model,
    tanh_function,
)

__all__ = [
    "BudgetError",
    "ConfigurationError",
    "DomainError",
    "HorizonError",
    "LilstepError",
    "StepSolveError",
    "UsageError",
    "QuasiUniformIndex",
    "StepSpec",
    "TimeGrid",
    "build_grid",
    "quasi_uniform_index",
    "tilde_of",
    "Nonlinearity",
    "SodeModel",
    "SpectralSpdeModel",
    "TestFunction",
    "capped_sqnorm_function",
    "coordinate_function",
    "cubic_model",
    "ou_model",
    "spde_model",
    "tanh_function",
    "SchemeSpec",
    "simulate_path",
    "step_state",
    "PathStream",
    "block_normals",
    "derive_seed",
    "LilAccumulator",
    "LilCheckpoint",
    "VEstimate",
    "lil_statistic",
    "v_batch_means",
    "v_ensemble",
    "v_exact_linear",
    "MartingaleLedger",
    "decomposition",
    "decomposition_table",
    "qv_average",
    "record_linear_bem_path",
    "strassen_functional",
    "tail_weighted_mean_linear",
    "ConditionEntry",
    "ConditionReport",
    "ExponentParams",
    "check_exponent_constraints",
    "check_step_conditions",
    "contraction_fit",
    "moment_scan",
    "strong_order_fit",
    "EnsembleConfig",
    "EnsembleSummary",
    "PathError",
    "PathRecord",
    "config_fingerprint",
    "merge_summaries",
    "run_ensemble",
    "__version__",
]
