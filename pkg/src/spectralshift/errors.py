"""Exception hierarchy shared by all modules.

Every error carries a short machine-readable ``kind`` so the CLI can map it
onto an exit code.
"""


class SpectralShiftError(Exception):
    kind = "error"


class InvalidDimensionError(SpectralShiftError, ValueError):
    kind = "invalid-dimension"


class InvalidIndexError(SpectralShiftError, IndexError):
    kind = "invalid-index"


class InvalidDirectionError(SpectralShiftError, ValueError):
    kind = "invalid-direction"


class ShapeError(SpectralShiftError, ValueError):
    kind = "shape"


class CapabilityError(SpectralShiftError, ValueError):
    kind = "capability"


class UnsupportedOrderError(SpectralShiftError, ValueError):
    kind = "unsupported-order"


class DomainError(SpectralShiftError, ValueError):
    kind = "domain"


class ContractViolation(SpectralShiftError, ValueError):
    kind = "contract"


class HypothesisNotMetError(SpectralShiftError, ValueError):
    kind = "hypothesis-not-met"


class NoLimitError(SpectralShiftError, ArithmeticError):
    """Raised when an extrapolated limit fails its convergence test.

    The partial sequence is attached as ``diagnostics``.
    """

    kind = "no-limit"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ResourceError(SpectralShiftError, MemoryError):
    kind = "resource"


class NumericError(SpectralShiftError, ArithmeticError):
    kind = "numeric"


class EvaluationError(NumericError):
    kind = "evaluation"
