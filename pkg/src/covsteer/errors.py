"""Exception types shared across the library."""


class CovsteerError(Exception):
    """Base class for all covsteer-specific errors."""


class InvalidInputError(CovsteerError, ValueError):
    """An input array contains non-finite entries or has a malformed shape."""


class DimMismatchError(CovsteerError, ValueError):
    """Two objects that must share dimensions do not."""


class NotPsdError(CovsteerError):
    """A matrix required to be positive semidefinite has a genuinely negative eigenvalue."""


class NotPositiveDefiniteError(NotPsdError):
    """A matrix required to be strictly positive definite is singular or indefinite."""


class ConsistencyError(CovsteerError):
    """A computed quantity violated an internal sanity bound (beyond floating-point noise)."""


class StructureViolationError(CovsteerError, ValueError):
    """A gain matrix has nonzero entries outside the causal sparsity pattern."""


class InnerSolveFailedError(CovsteerError, RuntimeError):
    """The inner conjugate-gradient solve stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class LineSearchFailedError(CovsteerError, RuntimeError):
    """The line search could not produce any decrease along the search direction."""


class InsufficientSamplesError(CovsteerError, ValueError):
    """A sample-statistics routine received too few samples."""


class ConfigError(CovsteerError, ValueError):
    """A scenario config failed validation.

    Messages start with the dotted path of the offending entry where one
    exists (for example ``goal.cov: ...``); ``field`` carries that path
    when the raiser supplies it separately.
    """

    def __init__(self, message: str, field: "str | None" = None):
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field
