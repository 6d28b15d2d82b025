"""Exception types shared across the toolkit."""


class ReflectKitError(Exception):
    """Base class for all toolkit errors."""

    code = "E_NUMERIC"


class InvalidProfileError(ReflectKitError):
    """A physical line profile violates its positivity/uniformity assumptions."""

    code = "E_PROFILE"


class ParameterError(ReflectKitError):
    """An argument is outside its documented domain."""

    code = "E_PARAM"


class SingularTrajectoryError(ReflectKitError):
    """|1 + R| collapsed during Riccati integration."""


class DegenerateFrequencyError(ReflectKitError):
    """Scattering-solution extrapolation failed at a resonant frequency."""


class TraceTooCoarseError(ReflectKitError):
    """Too many trace samples masked near resonances."""


class AmbiguousMultiplicityError(ReflectKitError):
    """Pole-peeling multiplicity limit is not close to an integer."""


class WindowTooSmallError(ReflectKitError):
    """No pole found but the peeling residual is still above tolerance."""


class GeometryMismatchError(ReflectKitError):
    """Resonance assignment rejects the supplied geometry."""


class InsufficientDataError(ReflectKitError):
    """Not enough resonances assigned to a branch for integral estimation."""


class NonConvergenceError(ReflectKitError):
    """Potential fit stagnated; carries the best iterate found."""

    def __init__(self, message, best_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate
