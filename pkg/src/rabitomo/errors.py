"""Exception hierarchy shared by all stages of the tomography pipeline."""


class RabiTomoError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(RabiTomoError, ValueError):
    """An input violates the invariants of its type."""


class NormViolationError(ValidationError):
    pass


class PlanningError(ValidationError):
    """The envelope cannot hold even one pulse sequence."""


class ConfigurationError(ValidationError):
    pass


class TraceFormatError(ValidationError):
    """A trace file does not follow the CSV schema.

    ``line`` and ``column`` are 1-based and point at the offending cell when known.
    """

    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


class NumericalError(RabiTomoError, ArithmeticError):
    pass


class DegenerateFitError(NumericalError):
    """The phase of the trace is not identifiable (zero amplitude or singular normal matrix)."""


class FlatTraceError(DegenerateFitError):
    pass


class ReconstructionError(NumericalError):
    pass


class CalibrationError(NumericalError):
    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket
