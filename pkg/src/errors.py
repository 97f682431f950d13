from typing import Optional


class AttribEncodeError(Exception):
    """Base exception for every failure raised by the pipeline."""

    pass


class ConfigurationError(AttribEncodeError):
    """Invalid configuration values or dimensions."""

    pass


class InputError(AttribEncodeError):
    """Caller supplied data that violates an operation's preconditions."""

    pass


class NumericalError(AttribEncodeError):
    """A non-finite value appeared inside an iterative computation."""

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class TrainingError(NumericalError):
    """Training produced a non-finite loss."""

    pass


class ParseError(AttribEncodeError):
    """A text file line could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataValidationError(ParseError):
    """Parsed data is well-formed but violates an ordering or range rule."""

    pass
