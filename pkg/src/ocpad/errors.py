"""Exception hierarchy shared by every ocpad module."""


class OcpadError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(OcpadError, ValueError):
    pass


class ContractError(OcpadError, ValueError):
    """A documented precondition was violated by the caller."""


class ConfigError(OcpadError, ValueError):
    pass


class TrainingError(OcpadError, RuntimeError):
    pass


class FitError(OcpadError, RuntimeError):
    pass


class EvaluationError(OcpadError, ValueError):
    pass


class SplitError(OcpadError, ValueError):
    pass


class ParseError(OcpadError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
