"""Exception hierarchy.

Every error carries a ``category`` string used by the command line to print a
one-line categorized failure message.
"""


class MtlError(Exception):
    category = "error"


class ZeroVarianceError(MtlError):
    category = "zero-variance"


class SingularSystemError(MtlError):
    category = "singular-system"


class SingularMatrixError(MtlError):
    category = "singular-matrix"


class NoConvergenceError(MtlError):
    category = "no-convergence"


class NonPositiveError(MtlError):
    category = "non-positive"


class ModelMismatchError(MtlError):
    category = "model-mismatch"


class DenseLimitExceededError(MtlError):
    category = "dense-limit"


class CriticalRegimeError(MtlError):
    category = "critical-regime"


class InsufficientSamplesError(MtlError):
    category = "insufficient-samples"


class DegenerateShiftError(MtlError):
    category = "degenerate-shift"


class NonPSDError(MtlError):
    category = "non-psd"


class DimensionMismatchError(MtlError, ValueError):
    category = "dimension-mismatch"


class BadSpecError(MtlError, ValueError):
    category = "bad-spec"


class ParseError(MtlError):
    category = "parse"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(MtlError):
    category = "schema"

    def __init__(self, message, column=None):
        self.column = column
        if column is not None:
            message = f"column {column!r}: {message}"
        super().__init__(message)
