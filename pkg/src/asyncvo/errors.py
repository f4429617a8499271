"""Exception hierarchy shared by every module of the package."""


class VOError(Exception):
    """Base class for all odometry errors."""


class GeometryError(VOError, ValueError):
    pass


class NonPositiveDepth(GeometryError):
    """Point lies behind (or on) the camera plane."""


class InsufficientParallax(GeometryError):
    pass


class NegativeDepth(GeometryError):
    """Triangulated point fails the cheirality test."""


class DegenerateConfiguration(GeometryError):
    pass


class NoValidSolution(GeometryError):
    pass


class StateError(VOError):
    pass


class DimensionMismatch(StateError, ValueError):
    pass


class DuplicateFeature(StateError, KeyError):
    pass


class UnknownClone(StateError, KeyError):
    pass


class UnknownEntity(StateError, KeyError):
    pass


class UnknownLandmark(StateError, KeyError):
    pass


class NegativeDt(VOError, ValueError):
    pass


class SingularInnovation(VOError, ArithmeticError):
    pass


class SingularCovariance(VOError, ArithmeticError):
    pass


class NoOverlap(VOError, ValueError):
    pass


class InvalidConfig(VOError, ValueError):
    pass


class FilterDivergence(VOError, ArithmeticError):
    """Non-finite values appeared in the filter state or covariance."""


class TrackFormatError(VOError, ValueError):
    pass
