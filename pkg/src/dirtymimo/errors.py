"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
failures to stable process exit statuses without a lookup table.
"""


class DirtyMimoError(Exception):
    exit_code = 1


class ParseError(DirtyMimoError):
    exit_code = 2


class ValidationError(DirtyMimoError):
    exit_code = 3


class NumericalError(DirtyMimoError):
    exit_code = 4


class RankDeficient(ValidationError):
    pass


class NotProper(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class TooFewBlocks(ValidationError):
    pass


class DiagProductNotUnit(ValidationError):
    pass


class NotDiagonal(ValidationError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class PowerViolation(NumericalError):
    pass


class VerificationFailed(DirtyMimoError):
    exit_code = 5
