"""Exception types shared across the package."""


class DgreedyError(Exception):
    """Base class for all package errors."""


class NotSpd(DgreedyError):
    """Matrix is not symmetric positive definite within tolerance."""


class NumericalError(DgreedyError):
    """An iterative numerical kernel failed to converge."""


class ShapeError(DgreedyError):
    """Operands have incompatible dimensions."""


class LinearlyDependent(DgreedyError):
    """Rejection signal: a candidate vector lies in the span of the basis."""


class SingularError(DgreedyError):
    """A factorization or solve hit a (numerically) singular matrix."""


class AssemblyError(DgreedyError):
    """Unsupported space/component combination in finite element assembly."""


class DataError(DgreedyError):
    """Problem data (source, boundary values) outside the supported class."""


class ConfigError(DgreedyError):
    """Invalid configuration value; carries the offending field name."""

    def __init__(self, field, message=""):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)


class DomainError(DgreedyError):
    """Parameter outside the configured parameter domain."""


class StateError(DgreedyError):
    """Operation requires cached offline data that is not present."""


class UnstableError(DgreedyError):
    """Reduced saddle system is singular; the inner greedy must run."""


class UnsupportedError(DgreedyError):
    """Operation not available for this problem variant."""


class StabilizationStalled(DgreedyError):
    """Enrichment budget exhausted before the stability target was met."""

    def __init__(self, message, worst_mu=None, worst_value=None):
        super().__init__(message)
        self.worst_mu = worst_mu
        self.worst_value = worst_value


class SnapshotDependent(DgreedyError):
    """Selected snapshot is linearly dependent on the current trial basis."""
