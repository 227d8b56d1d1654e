"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


class ParameterError(ValueError):
    """An argument is outside its documented domain."""


class ConfigError(ValueError):
    """Run configuration is internally inconsistent."""


class StateError(RuntimeError):
    """Required intermediate state is missing or stale."""


class DataError(RuntimeError):
    """An input file or byte stream is malformed."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""
