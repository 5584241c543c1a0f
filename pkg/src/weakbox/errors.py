"""Exception hierarchy shared across the pipeline."""


class WeakboxError(Exception):
    """Base class for all pipeline errors."""


class ShapeError(WeakboxError):
    """Array dimensions do not match what an operation requires."""


class DataError(WeakboxError):
    """Input values violate a contract (non-finite, out of range, ...)."""


class DegenerateDataError(DataError):
    """Input has no usable spread; a mixture fit cannot proceed."""


class CrossoverMissError(WeakboxError):
    """No density crossover exists strictly between the component means."""


class FormatError(WeakboxError):
    """A serialized bundle is malformed.

    Carries the byte offset at which parsing failed when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
