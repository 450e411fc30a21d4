"""Exception hierarchy shared by every component.

InputError subclasses map to CLI exit code 2, NumericalFailure subclasses to 3.
"""


class OrgUtilityError(Exception):
    exit_code = 1


# --- INPUT ERRORS (exit 2) ---
class InputError(OrgUtilityError, ValueError):
    exit_code = 2


class DimensionMismatch(InputError):
    def __init__(self, needed, got):
        super().__init__(f"outcome vector has {got} component(s), expression needs {needed}")
        self.needed = needed
        self.got = got


class BadDomain(InputError):
    pass


class NotAffine(InputError):
    pass


class EmptyInput(InputError):
    pass


class DomainExceeded(InputError):
    pass


class QuantityOutOfBounds(InputError):
    pass


class InvalidOutcome(InputError):
    pass


class InvalidStructure(InputError):
    pass


class InvalidLottery(InputError):
    pass


class UnknownFigure(InputError):
    pass


class ParseError(InputError):
    def __init__(self, path, message, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{path}{where}: {message}")
        self.path = path
        self.line = line
        self.column = column


# --- NUMERICAL FAILURES (exit 3) ---
class NumericalFailure(OrgUtilityError, ArithmeticError):
    exit_code = 3


class DegenerateProbability(NumericalFailure):
    def __init__(self, message, x=None):
        super().__init__(message if x is None else f"{message} at x={x}")
        self.x = x


class NonMonotonicUtility(NumericalFailure):
    pass


class RangeExceeded(NumericalFailure):
    pass


class DegenerateBet(NumericalFailure):
    NEVER_ACCEPTS = "never_accepts"
    ALWAYS_ACCEPTS = "always_accepts"

    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


class NonUnimodalObjective(NumericalFailure):
    def __init__(self, message, peaks=()):
        super().__init__(message)
        self.peaks = tuple(peaks)


class NoConvergence(NumericalFailure):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NoInteriorSolution(NumericalFailure):
    def __init__(self, message, boundary_effort):
        super().__init__(message)
        self.boundary_effort = boundary_effort


class Infeasible(NumericalFailure):
    pass


class BoundHitWarning(UserWarning):
    """A solver answer sits on its search bound."""
