"""Symbolic-numeric construction and verification of symplectic and
presymplectic connections, their cotangent lifts, and their reductions."""
from .cotangent import (
    CotangentChart,
    LinearLiftedAction,
    build_affine_symplectic_connection,
    canonical_symplectic_form,
    cotangent_chart,
    hamiltonian_residual,
    horizontal_frame,
    lift_action,
    lift_connection,
    liouville_form,
    moment_map_lift,
    scaling_translation_generators,
    standard_cotangent_chart,
)
from .expr import (
    DomainError,
    ParseError,
    UnboundVariableError,
    UnknownFunctionError,
    differentiate,
    evaluate,
    parse,
    serialize,
    simplify_basic,
)
from .geometry import (
    Chart,
    ConnectionCoeffs,
    FrameField,
    GeometryError,
    PathSpec,
    VectorFieldExpr,
    change_coordinates,
    covariant_derivative_vector,
    covariant_derivative_via_transport,
    curvature_tensor,
    frame_to_coordinate_connection,
    parallel_transport,
    sample_points,
    sampling_seed,
    symmetric_part,
    torsion_tensor,
    transpose_connection,
)
from .presymplectic import (
    PresymplecticStructure,
    SplittingS,
    assemble_D,
    bott_connection_S,
    build_presymplectic_connection,
    characteristic_kernel,
    curvature_condition_check,
    projectability_check,
    reduce_presymplectic,
    theta_tensor,
)
from .reduction import (
    AffineSubspace,
    QuotientChart,
    ScalingTranslationScene,
    noncritical_check,
    reduce_connection,
    reduction_report,
    scene_level_set,
    scene_moment_map,
    scene_quotient,
    self_parallel_check,
    transport_tangency_check,
)
from .report import CheckReport, CheckResult
from .symplectic import (
    TwoFormField,
    exterior_derivative,
    invert_on_span,
    nabla_omega,
    symplectize,
)

__version__ = "0.1.0"
