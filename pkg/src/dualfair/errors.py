"""Exception hierarchy shared by every module."""


class DualFairError(Exception):
    """Base class for all library errors."""


class ParseError(DualFairError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class SchemaError(DualFairError, ValueError):
    pass


class RangeError(DualFairError, IndexError):
    pass


class SelfLoopError(DualFairError, ValueError):
    pass


class UnsupportedError(DualFairError, ValueError):
    pass


class ShapeError(DualFairError, ValueError):
    pass


class UndefinedMetricError(DualFairError, ValueError):
    pass


class EmptyLineGraphError(DualFairError, ValueError):
    pass


class SpecError(DualFairError, ValueError):
    """Invalid synthetic graph specification."""


class GenerationError(DualFairError, RuntimeError):
    pass


class ConfigError(DualFairError, ValueError):
    pass


class TrainingError(DualFairError, RuntimeError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message if epoch is None else f"epoch {epoch}: {message}")


class NumericalError(DualFairError, RuntimeError):
    pass


class DegenerateError(DualFairError, ValueError):
    pass


class InputError(DualFairError, ValueError):
    pass


class SplitError(DualFairError, ValueError):
    pass


class StageError(DualFairError, RuntimeError):
    """Wraps a failure inside one pipeline stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
