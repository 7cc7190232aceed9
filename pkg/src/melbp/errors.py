"""Exception types shared across the package."""


class MelbpError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(MelbpError, ValueError):
    """Invalid parameter value or parameter combination."""


class BorderViolationError(MelbpError, ValueError):
    """A sampling neighborhood would leave the slice or volume."""


class IngestionError(MelbpError, ValueError):
    """Manifest entries or frame files could not be loaded."""


class PreprocessingError(MelbpError, ValueError):
    """A clip cannot be preprocessed (too short, degenerate, ...)."""


class ProtocolError(MelbpError, ValueError):
    """An evaluation-protocol precondition is violated."""


class DegenerateDataError(MelbpError, ValueError):
    """Training data carries no usable variance."""


class ShapeError(MelbpError, ValueError):
    """Array dimensions are incompatible with the model or operation."""
