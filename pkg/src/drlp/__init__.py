"""Piecewise-linear minimization of feed-forward ReLU networks."""

from .network import (
    ZERO_TOL,
    ActivationPattern,
    HyperplanePattern,
    PairGroups,
    ReluNetwork,
    activation_bits_batch,
    activation_pattern,
    critical_indices,
    critical_kernel_dim,
    enumerate_compatible,
    evaluate,
    flip,
    gradient,
    hyperplane_pattern,
    inner_products_all,
    is_compatible,
    load_model,
    normal_matrices,
    oriented_normal,
    relu_arguments,
    save_model,
    subjective_arguments,
    subjective_value,
)
from .primitives import (
    AdvanceResult,
    Degenerate,
    DependentColumn,
    PseudoInverse,
    add_axis,
    add_pseudorow,
    advance_max,
    argument_residuals,
    project,
    remove_pseudorow,
    update_axis_new_region,
)
from .solver import (
    LOCAL_MINIMUM,
    NON_REGULAR,
    STEP_LIMIT,
    UNBOUNDED,
    QuadraticObjective,
    SolveOutcome,
    SolverOptions,
    SolverState,
    TraceRecord,
    axis_derivatives,
    certify_local_min,
    choose_axis,
    drlsimplex,
    find_vertex,
    initialize,
    parabola_step,
    position_correction,
    refresh_pseudoinverse,
    segment_parabola,
    solve_quadratic,
)
from .problems import (
    LpInstance,
    RegressionData,
    build_clad,
    build_from_lp,
    build_l1_first_layer,
    build_lasso,
    build_quantile_lasso,
    build_random,
    clad_loss,
    flatten_first_layer,
    l1_first_layer_loss,
    lasso_loss,
    load_csv,
    quantile_loss,
    set_first_layer,
)
from .bounds import count_regions_empirical, improved_bound, montufar_bound

__version__ = "0.1.0"
