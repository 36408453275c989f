"""Topological shooting and periodic orbits for an inverted pendulum whose
pivot moves along a horizontal line."""

from pivotpend.errors import (
    AperiodicPivot,
    BracketViolation,
    ConvergedOutsideU,
    FixedPointOnBoundary,
    IntegrationFailure,
    NoConvergence,
    NonConvergentRefinement,
    NumericalFailure,
    PendulumError,
    ValidationError,
)
from pivotpend.pivot_profiles import (
    ANY_PERIOD,
    ConstantAcceleration,
    HarmonicSum,
    HarmonicTerm,
    PivotProfile,
    PivotSample,
    Polynomial,
    Zero,
    eval_pivot,
    period_of,
    profile_from_dict,
    sup_jerk,
)
from pivotpend.dynamics import (
    IntegrationResult,
    IntegratorConfig,
    PendulumParams,
    PendulumState,
    Trajectory,
    integrate,
    rhs,
    time_T_map,
    variational_rhs,
)
from pivotpend.shooting import (
    BoundaryClass,
    Exited,
    Side,
    Survived,
    SurvivalCertificate,
    classify_boundary,
    escape_map,
    find_nonfalling,
)
from pivotpend.periodic import (
    IndexConfig,
    IndexResult,
    NewtonConfig,
    PeriodicOrbit,
    PeriodicSegment,
    SegmentReport,
    build_segment,
    equilibrium_angle,
    euler_characteristic_index,
    find_periodic_orbit,
    fixed_point_index,
    validate_segment,
)

__version__ = "0.1.0"
