"""Exception types raised across the package."""


class RoughIntError(Exception):
    """Base class for all package errors."""


class NotClosed(RoughIntError):
    """A 3-increment handed to the discrete sewing inverse is not closed."""


class DelayNotOnGrid(RoughIntError):
    """A delay is not an integer multiple of the grid step."""


class OutOfRange(RoughIntError):
    """A shifted index falls outside the sampled (extended) grid."""


class InadmissiblePair(RoughIntError):
    """A delay pair (v1, v2) violates v1 + v2 >= 0."""


class DimensionMismatch(RoughIntError, ValueError):
    """Shapes of paths, coefficients or vector fields are inconsistent."""


class NumericalFailure(RoughIntError):
    """Base class for failures mapped to exit code 3 by the CLI."""


class EmbeddingFailed(NumericalFailure):
    """Neither circulant embedding nor Cholesky could factor a covariance."""


class NonFinite(NumericalFailure):
    """The state of an explicit march left the floating point range."""


class NoConvergence(NumericalFailure):
    """Picard iteration did not reach the requested tolerance."""

    def __init__(self, max_iter, distance, message=None):
        self.max_iter = max_iter
        self.distance = distance
        super().__init__(
            message
            or f"no convergence after {max_iter} iterations (last distance {distance:.3e})"
        )


class HistoryGap(RoughIntError):
    """A delayed time needed by the solver precedes the initial segment."""


class MissingLiftFamily(RoughIntError):
    """A delayed area or volume family is absent from a delayed lift."""

    def __init__(self, v1, v2=None):
        self.v1 = v1
        self.v2 = v2
        label = f"area v={v1}" if v2 is None else f"volume (v1={v1}, v2={v2})"
        super().__init__(f"delayed lift has no {label} family")


class ConfigError(RoughIntError, ValueError):
    """Invalid run configuration (CLI exit code 2)."""
