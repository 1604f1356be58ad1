"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Array shapes disagree with the architecture they are used with."""


class ConfigError(ValueError):
    """Invalid configuration value. CLI maps this to exit code 2."""


class DiagnosticError(RuntimeError):
    """A run completed but is statistically unusable (e.g. an HMC chain
    that rejected every proposal). CLI maps this to exit code 3."""


class NumericsError(ArithmeticError):
    """A computation produced NaN or Inf where finite values are required."""


class IdxFormatError(ValueError):
    """Malformed IDX container; message carries the byte offset involved."""
