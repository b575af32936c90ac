"""Exception hierarchy.

Every error carries a stable ``code`` string; the CLI prints it and maps it
to a nonzero exit status.
"""


class KdeintError(Exception):
    code = "ERROR"
    exit_status = 1


class ParameterError(KdeintError, ValueError):
    code = "INVALID_ARGUMENT"
    exit_status = 2


class SampleSizeError(ParameterError):
    code = "SAMPLE_TOO_SMALL"


class DegenerateSampleError(ParameterError):
    code = "DEGENERATE_SAMPLE"


class MissingResponsesError(ParameterError):
    code = "MISSING_RESPONSES"


class WindowError(ParameterError):
    """Bandwidth exponent outside the admissible window of a limit theorem."""

    code = "BANDWIDTH_WINDOW"


class UnsupportedKernelError(KdeintError):
    code = "UNSUPPORTED_KERNEL"
    exit_status = 2


class DegenerateDensityError(KdeintError, ArithmeticError):
    """A leave-one-out density at a contributing point is below the floor."""

    code = "DEGENERATE_DENSITY"
    exit_status = 4

    def __init__(self, index, value, floor):
        self.index = int(index)
        self.value = float(value)
        self.floor = float(floor)
        super().__init__(
            f"leave-one-out density at index {self.index} is {self.value:.6g} "
            f"(floor {self.floor:g}); consider a trimmed estimator"
        )


class EmptySumError(KdeintError, ArithmeticError):
    code = "EMPTY_SUM"
    exit_status = 5


class NoValidBandwidthError(KdeintError):
    code = "NO_VALID_BANDWIDTH"
    exit_status = 6


class ToleranceError(KdeintError, ArithmeticError):
    """A numerical constant could not be computed to the requested tolerance."""

    code = "TOLERANCE_NOT_REACHED"
    exit_status = 7

    def __init__(self, message, achieved):
        self.achieved = float(achieved)
        super().__init__(f"{message} (achieved error bound {self.achieved:.3g})")


class ParseError(KdeintError, ValueError):
    code = "PARSE_ERROR"
    exit_status = 3

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InputError(KdeintError, OSError):
    code = "IO_ERROR"
    exit_status = 3
