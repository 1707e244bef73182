"""Desk-scale numerical laboratory for coisotropic path spaces of bivector fields."""

from .config import DEFAULT_TOLS, Tolerances
from .fields import (
    BivectorField,
    ConnectionField,
    LevelSetSubmanifold,
    PolyScalarField,
    covariant_derivative_pi,
    covariant_jacobi_residual,
    is_coisotropic_at,
    jacobiator,
    sharp_matrix,
)
from .symplin import (
    FormSpace,
    LinSubspace,
    annihilator_lemma_check,
    is_coisotropic,
    orthogonal,
    quotient_form,
    reduction_in_stages_check,
)
from .paths import (
    DiscretePair,
    GaugeParameter,
    TimeDependentOneForm,
    TransportResult,
    constraint_residual,
    gauge_step,
    make_gauge_parameter,
    momentum,
    p_drift,
    solve_compatible,
    transport,
)
from .harness import (
    AmbientDiscretization,
    TangentModel,
    Verdict,
    build_ambient,
    build_tangent,
    characteristic_match,
    coisotropy_verdict,
    orthogonal_space,
    twist,
)
from .dualpair import (
    EndpointDifferentials,
    dual_pair_check,
    endpoint_differentials,
    reduce,
)
from .scenario import Scenario, catalog, get_scenario, load_scenario, parse_scenario

__version__ = "0.1.0"
