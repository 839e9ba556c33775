"""Exception types raised across the package."""


class BiasObsError(Exception):
    """Base class for all package errors."""


class SingularChart(BiasObsError):
    pass


class GridMismatch(BiasObsError, ValueError):
    pass


class OriginOutside(BiasObsError, ValueError):
    """The camera origin is not strictly inside the scene surface."""


class BadConfig(BiasObsError, ValueError):
    pass


class NonConvexProfile(BiasObsError, ValueError):
    pass


class NotAxisymmetric(BiasObsError, ValueError):
    pass


class EnvelopeExit(BiasObsError):
    """The optical center left the configured compact envelope."""


class OutOfRange(BiasObsError, ValueError):
    pass


class InsufficientFrames(BiasObsError, ValueError):
    pass


class LeftDomain(BiasObsError):
    """A characteristic path left the region where depth is available."""


class NonfiniteField(BiasObsError, FloatingPointError):
    """NaN or Inf appeared in an observer state (usually a CFL violation)."""


class BadGains(BiasObsError, ValueError):
    pass


class BadMargins(BiasObsError, ValueError):
    pass


class MissingCSV(BiasObsError, FileNotFoundError):
    pass
