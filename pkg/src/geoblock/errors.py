"""Exception types raised by the geoblock library."""


class GeoblockError(Exception):
    """Base class for all geoblock errors."""


class ProfileError(GeoblockError):
    """A metric profile is invalid (non-positive, malformed coefficients, ...)."""


class StepFailure(GeoblockError):
    """The adaptive integrator could not meet its local tolerance."""


class NotPeriodic(GeoblockError):
    """A trace handed to a periodic-orbit operation does not close up."""


class NoConvergence(GeoblockError):
    """An iterative solve (shooting, polishing) did not converge."""


class NotPrime(GeoblockError):
    """A homology class with gcd(|m|, |n|) > 1 was passed where a prime class is required."""


class HorizonExceeded(GeoblockError):
    """A Busemann evaluation was requested beyond the ray's integrated horizon."""


class MissingGeodesic(GeoblockError):
    """A required joining geodesic could not be produced."""


class ZeroDisplacement(GeoblockError):
    """A trace has too small a lift displacement to define a homological direction."""


class HypothesisViolated(GeoblockError):
    """A profile fails the symmetry / unique-minimum hypotheses of the involution construction."""


class TangencyDetected(GeoblockError):
    """Two traces cross at an angle too shallow for a reliable intersection count."""
