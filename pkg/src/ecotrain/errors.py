"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are inconsistent; message names the offending axis."""


class ConfigError(ValueError):
    """A configuration value is out of its legal range or malformed."""


class DataFormatError(ValueError):
    """An input file does not follow its declared binary/text layout."""


class NumericError(ArithmeticError):
    """Non-finite values where finite reals are required."""


class StateError(RuntimeError):
    """An operation was called before the state it needs exists."""
