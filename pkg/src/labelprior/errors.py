"""Exception types shared across the package."""


class LabelPriorError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(LabelPriorError, ValueError):
    """Operands have incompatible or invalid dimensions."""


class ParameterError(LabelPriorError, ValueError):
    """A hyperparameter or argument is outside its legal range."""


class DegenerateVectorError(LabelPriorError, ValueError):
    """A vector that must have positive norm is (numerically) zero."""


class DegenerateRowError(LabelPriorError, ValueError):
    """A matrix row that must contain a nonzero entry is all zero."""


class NumericError(LabelPriorError, ArithmeticError):
    """A computation produced non-finite values."""


class ProbeError(NumericError):
    """A finite-difference probe hit a non-finite objective value."""


class ParseError(LabelPriorError, ValueError):
    """A data file is malformed. Carries the offending 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(LabelPriorError, ValueError):
    """Parsed or constructed data violates a semantic constraint."""


class MaskingError(LabelPriorError, ValueError):
    """A label-masking operation received unusable ground truth."""


class CalibrationError(LabelPriorError, ValueError):
    """The calibration matrix is not row-stochastic."""


class EvaluationError(LabelPriorError, ValueError):
    """A ranking metric is undefined for the given ground truth."""
