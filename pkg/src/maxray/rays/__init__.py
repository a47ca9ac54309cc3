from .core import RayState as RayState, Trajectory as Trajectory
from .model import (
    BandInterpolant as BandInterpolant,
    DispersionModel as DispersionModel,
    PeriodicSpline as PeriodicSpline,
)
from .flows import (
    FLOWS as FLOWS,
    Flow as Flow,
    LeadingFlow as LeadingFlow,
    NonScalarFlow as NonScalarFlow,
    ScalarFlow as ScalarFlow,
    make_flow as make_flow,
    vector_field_nonscalar as vector_field_nonscalar,
    vector_field_scalar as vector_field_scalar,
)
from .integrate import (
    Ensemble as Ensemble,
    Tolerances as Tolerances,
    integrate as integrate,
    push_ensemble as push_ensemble,
)
from .tracer import RayTracer as RayTracer
