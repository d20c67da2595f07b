"""Exception types raised across the package."""


class CohpropError(Exception):
    """Base class for all package errors."""


class ValidationError(CohpropError, ValueError):
    """Invalid input: wrong shapes, non-Hermitian generators, bad parameters."""


class DimensionError(ValidationError):
    """Mode counts or vector lengths do not agree."""


class EmptyStateError(CohpropError):
    """A truncation step removed every branch."""

    def __init__(self, msg, layer=None):
        super().__init__(msg if layer is None else f"{msg} (layer {layer})")
        self.layer = layer


class ConditioningError(CohpropError, FloatingPointError):
    """A Gaussian form lost positive definiteness or produced non-finite values."""


class CutoffError(CohpropError):
    """Fock truncation is too small for the requested accuracy."""


class OracleRefusal(CohpropError):
    """The dense Fock oracle would exceed its memory budget."""
