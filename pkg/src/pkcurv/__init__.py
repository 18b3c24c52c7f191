"""Solvers and property suites for quotient-type prescribed curvature
equations of index-summed principal curvatures on star-shaped
hypersurfaces, in both the scaling-coercive and scale-invariant regimes.
"""

from .errors import (
    AdmissibilityError,
    ConeViolationError,
    DomainError,
    NonconvergenceError,
)
from .exterior import (
    CurvaturePoint,
    MultiIndexTable,
    build_table,
    derivation_matrix,
    hessian_quadratic_form,
    in_pk_cone,
    index_sums,
    inverse_convexity_form,
    quotient_and_gradient,
    quotient_in_kappa,
)
from .geometry import (
    EmbedData,
    GeometryData,
    RadialField,
    SphereGrid,
    codazzi_residual,
    embed,
    frame_derivatives,
    geometry_points,
    load_field_csv,
    save_field_csv,
    shape_matrix,
    support_function,
)
from .pde import (
    BoundReport,
    ConstantRhs,
    ExpHarmonicRhs,
    HarmonicRhs,
    ProblemSpec,
    Residual,
    TableRhs,
    audit_bounds,
    linearize,
    residual,
    rhs_from_json,
)
from .solver import (
    CertificateReport,
    SolveReport,
    SolverConfig,
    StepRecord,
    continuation_solve,
    convexity_certificate,
    homogeneous_solve,
    newton_solve,
)
from .symfun import (
    ConeCheck,
    in_gamma_cone,
    quotient_root,
    sigma,
    sigma_gradient,
    sigma_minor,
    sigma_minors_all,
    sigma_all,
)
from .verify import (
    PropertyReport,
    run_exterior_suite,
    run_solution_audits,
    run_symfun_suite,
)

__version__ = "0.1.0"
