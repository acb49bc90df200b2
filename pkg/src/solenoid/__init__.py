"""Tools for divergence-free 3-D fields: flows, section return maps, and the
2-form / level-measure calculus that makes those return maps symplectic."""

from .fields import (
    CatalogEntry,
    Domain,
    KernelSpec,
    ScalarIntegral,
    VectorField3,
    VolumeForm,
    catalog,
    catalog_names,
    catalog_params,
    divergence,
    integral_defect,
)
from .flow import (
    DEFAULT_CONFIG,
    EventResult,
    FlowError,
    FlowResult,
    ImplicitSection,
    IntegratorConfig,
    NoCrossing,
    PeriodicPlane,
    StepLimitExceeded,
    StepUnderflow,
    TangentialCrossing,
    advance,
    cross_section_event,
    flow_identity_residual,
)
from .backend import active_backend
from .forms import TwoFormAtPoint, omega_form, omega_matrix, pullback, skew_contraction
from .poincare import (
    PeriodicOrbit,
    ReturnMapResult,
    Section,
    classify_multipliers,
    coordinate_plane_section,
    find_periodic_orbit,
    plane_section,
    return_map,
)
from .level_measure import liouville_check, normal_field, omega_n_eval
from .torus import (
    RotationEstimate,
    partial_quotients,
    rotation_birkhoff,
    rotation_quadrature,
    torus_from_level,
)
from .suspension import (
    HamiltonianCertificate,
    SurfaceMap,
    SuspensionModel,
    build as build_suspension,
    identity_map,
    standard_map,
)

__version__ = "0.1.0"

__all__ = [
    "CatalogEntry",
    "Domain",
    "KernelSpec",
    "ScalarIntegral",
    "VectorField3",
    "VolumeForm",
    "catalog",
    "catalog_names",
    "catalog_params",
    "divergence",
    "integral_defect",
    "DEFAULT_CONFIG",
    "EventResult",
    "FlowError",
    "FlowResult",
    "ImplicitSection",
    "IntegratorConfig",
    "NoCrossing",
    "PeriodicPlane",
    "StepLimitExceeded",
    "StepUnderflow",
    "TangentialCrossing",
    "advance",
    "cross_section_event",
    "flow_identity_residual",
    "active_backend",
    "TwoFormAtPoint",
    "omega_form",
    "omega_matrix",
    "pullback",
    "skew_contraction",
    "PeriodicOrbit",
    "ReturnMapResult",
    "Section",
    "classify_multipliers",
    "coordinate_plane_section",
    "find_periodic_orbit",
    "plane_section",
    "return_map",
    "liouville_check",
    "normal_field",
    "omega_n_eval",
    "RotationEstimate",
    "partial_quotients",
    "rotation_birkhoff",
    "rotation_quadrature",
    "torus_from_level",
    "HamiltonianCertificate",
    "SurfaceMap",
    "SuspensionModel",
    "build_suspension",
    "identity_map",
    "standard_map",
    "__version__",
]
