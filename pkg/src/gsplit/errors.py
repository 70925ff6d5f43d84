"""Exception types raised across the package."""


class GsplitError(Exception):
    """Base class for all package errors."""


class NonSymmetric(GsplitError, ValueError):
    pass


class SingularCovariance(GsplitError, ValueError):
    pass


class DegenerateChild(GsplitError, ArithmeticError):
    pass


class ZeroMass(GsplitError, ValueError):
    pass


class EmptyInput(GsplitError, ValueError):
    pass


class FormatError(GsplitError, ValueError):
    """Raised for malformed or unsupported splat PLY files."""


class DegeneratePrism(GsplitError, ValueError):
    pass


class ProjectionDiverged(GsplitError, ArithmeticError):
    pass


class RoundsExhausted(GsplitError, RuntimeError):
    """A densification pass hit ``max_rounds`` before reaching its fixpoint."""


class IoError(GsplitError, OSError):
    """A model or point cloud could not be read from or written to disk."""
