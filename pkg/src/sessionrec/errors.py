"""Exception hierarchy shared across the engine. CLI maps these to exit codes."""


class EngineError(Exception):
    """Base class for all engine-raised errors."""


class ConfigError(EngineError):
    """Invalid configuration or invalid command usage (exit code 2)."""


class DataValidationError(EngineError):
    """Malformed or contract-violating data records (exit code 3)."""


class NumericError(EngineError):
    """Non-finite values or other numeric failures during computation (exit code 4)."""


class ShapeError(EngineError):
    """Tensor operation called with incompatible shapes."""
