"""Numerical geodesic blocking ("security") toolkit for two-tori of revolution.

The library integrates geodesics of metrics ds^2 = f(y)^2 dx^2 + dy^2 on
T^2 = (R/Z)^2, solves two-point joining problems per homotopy class, finds
minimal periodic geodesics, estimates Busemann functions, verifies explicit
blocking sets, and assembles numerical insecurity certificates.

Hot kernels are numba-compiled; set GEOBLOCK_DISABLE_NUMBA=1 to force the
pure-numpy fallback and GEOBLOCK_THREADS=N to cap numba's thread pool.
"""

import os

__version__ = "0.1.0"

from ._kernels import NUMBA_ENABLED

if NUMBA_ENABLED:
    _threads = os.environ.get("GEOBLOCK_THREADS", "").strip()
    if _threads.isdigit() and int(_threads) > 0:
        import numba

        numba.set_num_threads(min(int(_threads), numba.config.NUMBA_NUM_THREADS))

from .errors import (
    GeoblockError,
    HorizonExceeded,
    HypothesisViolated,
    MissingGeodesic,
    NoConvergence,
    NotPeriodic,
    NotPrime,
    ProfileError,
    StepFailure,
    TangencyDetected,
    ZeroDisplacement,
)
from .profiles import (
    CoverPoint,
    MetricProfile,
    TorusPoint,
    dist_to_latitude,
    eval_f,
    gaussian_curvature,
    latitude_length,
    load_profile,
    save_profile,
)
from .flow import (
    GeodesicTrace,
    JacobiSolution,
    PhaseState,
    clairaut,
    geodesic_rhs,
    has_conjugate_points,
    integrate,
    jacobi,
    monodromy,
)
