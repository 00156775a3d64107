"""Exception hierarchy shared across the package."""


class MbFuseError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(MbFuseError):
    """Operands have incompatible state/measurement dimensions."""


class NumericalError(MbFuseError):
    """A matrix factorization or normalization failed."""


class IncompatiblePairError(NumericalError):
    """Fused pair mass underflowed; the pair should have been gated out."""


class IntractableFusionError(MbFuseError):
    """Exhaustive hypothesis enumeration would exceed the configured cap."""

    def __init__(self, message, count=None, cap=None):
        super().__init__(message)
        self.count = count
        self.cap = cap


class ConfigError(MbFuseError):
    """Invalid experiment or scenario configuration."""
