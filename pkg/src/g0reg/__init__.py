"""G0 regression for SAR intensity data."""
from .errors import (
    DegenerateTheta,
    DomainError,
    G0Error,
    LeverageAtOne,
    MomentDiverges,
    NonFinite,
    NotConverged,
    SingularInformation,
    VarianceUndefined,
)
from .g0dist import G0Params
from .model import Link, RegressionSpec, Theta
from .fit import Family, FitOptions, FitResult, Optimizer, fit_baseline, fit_mle

__version__ = "0.1.0"
