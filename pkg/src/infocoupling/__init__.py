"""Local information geometry of discrete memoryless channels.

Treats nearby probability distributions as points of a Euclidean tangent
space, where divergence is quadratic and a channel acts as a single matrix.
On top of that picture the package builds whitened channel matrices and
their singular structure, exact/approximate information comparisons,
Kronecker-power (multi-letter) structure, and max-min solvers for coupling a
thin common message into several receivers at once.
"""

__version__ = "0.1.0"

from .errors import (
    BasisMismatch,
    ConvergenceFailure,
    CouplingError,
    DimensionMismatch,
    EmptyInput,
    FeasibilityFailure,
    GapDetected,
    InputError,
    InvalidEpsilon,
    InvalidK,
    NonPositiveEntry,
    NotNormalized,
    NumericalError,
    ParseError,
    SingularOutput,
    SizeCap,
    UsageError,
    ZeroPerturbation,
)
from .prob_core import (
    Channel,
    Perturbation,
    ProbDist,
    ScaledPerturbation,
    exact_mutual_information,
    kl_divergence,
    push_forward,
    scale,
    unscale,
    validate_dist,
    weighted_inner_product,
)
from .local_geom import (
    Dtm,
    LocalCapacity,
    SvdResult,
    build_dtm,
    local_capacity,
    strong_dpi_ratio,
    svd,
    verify_divergence_symmetry,
    verify_quadratic_approx,
)
from .tensorize import (
    BasisRelation,
    ProductCoeffs,
    TensorOperator,
    apply_kron_power,
    basis_relation,
    decompose,
    dense_kron,
    is_product_form,
    kron_power_dist,
    product_singular_values,
    purify,
    tensor_basis_vector,
)
from .coupling_solver import (
    CouplingEnsemble,
    DualSolution,
    KLetterResult,
    MaxMinSolution,
    QuadraticForm,
    SolverOptions,
    efficiency,
    equal_weight_directions,
    form_efficiency,
    k_letter_construction,
    maxmin_dual,
    maxmin_ensemble,
    maxmin_rank1,
    solve_broadcast2,
    solve_p2p,
    tangent_basis,
    tangent_form,
)
from .windmill import (
    WindmillInstance,
    cardinality_solution,
    make_windmill,
    multiletter_construction,
    multiletter_value,
    single_letter_value,
    ternary_channels,
)

__all__ = [name for name in dir() if not name.startswith("_")]
