"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration-class errors exit 2,
numerical errors exit 3, hypothesis violations exit 4.
"""


class MagspecError(Exception):
    """Base class for all package errors."""


class ConfigError(MagspecError):
    """Invalid configuration, file format, or input data description."""


class ShapeError(MagspecError):
    """Array or grid shape mismatch."""


class DataError(MagspecError):
    """Field values violating a structural contract (non-finite, antisymmetry, ...)."""


class ModelError(MagspecError):
    """Model-level precondition violated (support, density, degenerate choice, ...)."""


class PreconditionError(MagspecError):
    """An operation's stated precondition does not hold for the given inputs."""


class CapacityError(MagspecError):
    """Problem size exceeds the configured capacity for the requested mode."""


class ConvergenceError(MagspecError):
    """Iterative solver failed to converge; carries the best residual seen."""

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class HypothesisError(MagspecError):
    """A spectral hypothesis (gap, simplicity, nondegeneracy) fails where required."""


class ReductionInvalidError(MagspecError):
    """Feshbach reduction outside its validity region (near-singular 1 + Γ̃₊)."""

    def __init__(self, message, smallest_singular_value=None):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value
