"""Exception hierarchy shared by all flame_surrogate modules."""


class FlameSurrogateError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(FlameSurrogateError, ValueError):
    """A function argument violates a documented invariant."""


class DataError(FlameSurrogateError, ValueError):
    """Input data is malformed (non-finite, too short, misaligned)."""


class ShapeError(FlameSurrogateError, ValueError):
    """Tensor/array shapes do not conform for the requested operation."""


class ConfigError(FlameSurrogateError, ValueError):
    """A model or run configuration is internally inconsistent."""


class NumericError(FlameSurrogateError, ArithmeticError):
    """A numeric failure (NaN/Inf) aborted an operation."""


class SettleError(FlameSurrogateError, RuntimeError):
    """A simulated response failed to settle within the allotted time."""


class MetricError(FlameSurrogateError, ValueError):
    """A metric is undefined for the given inputs (e.g. all-zero reference)."""


class DeterminismError(FlameSurrogateError, RuntimeError):
    """A function expected to be deterministic returned differing values."""


class CheckpointError(FlameSurrogateError, RuntimeError):
    """A checkpoint or dataset file failed to load (version, CRC, truncation)."""
