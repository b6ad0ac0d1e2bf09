"""Hybrid optimal control with autonomous and controlled jumps.

Value functions of the discounted infinite-horizon and the finite-horizon
problems are computed as fixed points of a semi-Lagrangian discretization
of the quasi-variational inequality; trajectories and their costs are
simulated under extracted or explicit controls.
"""

import os as _os

# cap BLAS/OpenMP pools before numpy is imported
if _os.environ.get("HYBRIDQVI_THREADS", "").isdigit():
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["HYBRIDQVI_THREADS"])

from .finite_horizon import (  # noqa: E402
    MarchResult,
    SlicedPolicy,
    TerminalData,
    TerminalDataError,
    TimeGrid,
    backward_march,
    build_terminal_data,
    check_triangle,
    terminal_consistency_check,
)
from .grid import GridSpec, HybridGrid, ValueField, build_grid, read_value_binary, read_value_csv  # noqa: E402
from .model import (  # noqa: E402
    Constants,
    ControlGrid,
    HybridModel,
    HybridState,
    ModelError,
    load_model,
    model_from_dict,
)
from .operators import (  # noqa: E402
    Discretization,
    GrowthTransform,
    M_op,
    N_op,
    continuation_update,
    hamiltonian_stationary,
    hamiltonian_time,
)
from .regions import Ball, Box, HalfSpace, Union, outward_normal, signed_distance  # noqa: E402
from .stationary import (  # noqa: E402
    ConvergenceError,
    Policy,
    SolveConfig,
    bellman_sweep,
    qvi_residual,
    read_policy_csv,
    solve_stationary,
)
from .trajectory import (  # noqa: E402
    ExplicitControl,
    ModelConsistencyError,
    TrajectoryRecord,
    apply_autonomous_jump,
    integrate_arc,
    simulate,
)
from .validation import ValidationError, ValidationReport, validate_model  # noqa: E402
from .verification import (  # noqa: E402
    ConvergenceStudy,
    PropertyReport,
    run_assumption_audit,
    run_comparison_shadow,
    run_convergence,
    run_ode_estimates,
    run_operator_properties,
)

__version__ = "0.1.0"
