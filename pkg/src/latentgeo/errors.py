"""Exception types raised across the package."""


class LatentGeoError(Exception):
    """Base class for all package errors."""


class DimensionError(LatentGeoError, ValueError):
    """Operand shapes do not conform for an operation."""

    def __init__(self, kind, *shapes, message=None):
        self.kind = kind
        self.shapes = shapes
        shown = ", ".join(str(tuple(s)) for s in shapes)
        super().__init__(message or f"{kind}: incompatible shapes {shown}")


class NumericError(LatentGeoError, ArithmeticError):
    """A value that must be finite is NaN or infinite."""


class ContractError(LatentGeoError, ValueError):
    """A precondition of an operation was violated."""


class FormatError(LatentGeoError, ValueError):
    """A file does not follow the expected binary or text format."""


class ConsistencyError(LatentGeoError, ValueError):
    """Two inputs that must agree (e.g. image and label counts) do not."""


class EmptyDatasetError(LatentGeoError, ValueError):
    pass


class BoundsError(LatentGeoError, ValueError):
    pass


class TrainingError(LatentGeoError, RuntimeError):
    """Training produced a non-finite objective."""

    def __init__(self, message, epoch=None, batch=None):
        self.epoch = epoch
        self.batch = batch
        super().__init__(message)


class OptimizationError(LatentGeoError, RuntimeError):
    def __init__(self, message, iteration=None):
        self.iteration = iteration
        super().__init__(message)


class CapabilityError(LatentGeoError, ValueError):
    """The requested operation is not supported by the given model."""


class UndefinedCVError(LatentGeoError, ValueError):
    pass


class DegenerateTestError(LatentGeoError, ValueError):
    pass


class ConfigError(LatentGeoError, ValueError):
    """Config validation failed; ``violations`` holds (json_pointer, message) pairs."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = [f"{path or '/'}: {msg}" for path, msg in self.violations]
        super().__init__("invalid config:\n  " + "\n  ".join(lines))


class TrialError(LatentGeoError, RuntimeError):
    """A trial of the retraining experiment failed."""

    def __init__(self, message, seed=None, pair=None):
        self.seed = seed
        self.pair = pair
        super().__init__(message)
