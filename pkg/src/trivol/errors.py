"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


class ParameterError(ValueError):
    """A parameter value is outside its allowed range."""


class ContractError(RuntimeError):
    """An API was used in a way its contract forbids (e.g. reusing a spent tape)."""


class NumericError(ArithmeticError):
    """Non-finite values were produced or supplied where finite data is required."""


class ParseError(ValueError):
    """A file could not be parsed; carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(ValueError):
    """Loaded or computed data violates a domain invariant."""


class ConfigurationError(ValueError):
    """A configuration object is internally inconsistent."""
