"""Exception hierarchy shared by every module.

Exit codes for the CLI are attached to the classes: validation problems map to
1, runtime/numeric failures to 2.
"""


class AttopError(Exception):
    exit_code = 2


class ValidationError(AttopError, ValueError):
    """Bad input: shapes, parameters, files that do not parse."""

    exit_code = 1

    def __init__(self, message, **context):
        self.context = context
        if context:
            detail = ", ".join(f"{k}={v!r}" for k, v in context.items())
            message = f"{message} ({detail})"
        super().__init__(message)


class DimensionError(ValidationError):
    pass


class EmptyScopeError(ValidationError):
    pass


class DataFormatError(ValidationError):
    pass


class NumericError(AttopError, ArithmeticError):
    exit_code = 2

    def __init__(self, message, **context):
        self.context = context
        if context:
            detail = ", ".join(f"{k}={v!r}" for k, v in context.items())
            message = f"{message} ({detail})"
        super().__init__(message)


class ConvergenceError(NumericError):
    pass
