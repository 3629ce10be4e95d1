"""Exception hierarchy shared by all couplersim modules."""


class CouplerSimError(Exception):
    """Base class for every error raised by couplersim."""


class ValidationError(CouplerSimError, ValueError):
    """Input data failed validation (bad file, bad parameter)."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class NumericalError(CouplerSimError, RuntimeError):
    """A numerical procedure could not produce a trustworthy answer."""


class OutOfArcRange(ValidationError):
    def __init__(self, message, index=None, **kw):
        self.index = index
        if index is not None:
            message = f"{message} (sample {index})"
        super().__init__(message, **kw)


class DimensionCap(ValidationError):
    pass


class OutOfRange(ValidationError):
    pass


class LabelMismatch(ValidationError):
    pass


class SingularMatrix(NumericalError):
    pass


class Unreachable(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class AmbiguousLabeling(NumericalError):
    pass


class NoCrossingInWindow(NumericalError):
    pass


class UnstableInverse(NumericalError):
    pass


class NonConvergedStep(NumericalError):
    pass


class NoBracket(NumericalError):
    pass


class FitFailure(NumericalError):
    pass
