"""Exception types raised by the sketch library."""


class SketchError(Exception):
    """Base class for all library errors."""


class ParameterError(SketchError, ValueError):
    """Accuracy/failure-probability parameters outside their domain."""


class IncompatibleParametersError(SketchError, ValueError):
    """Two compactors or sketches that cannot be merged."""


class InvalidKeyError(SketchError, ValueError):
    """Key that cannot be ingested (NaN, out of range, wrong kind)."""


class EmptySketchError(SketchError, ValueError):
    """Quantile query against an empty summary."""


class ContractError(SketchError, RuntimeError):
    """An internal precondition was violated by the caller."""


class MarkingError(SketchError, RuntimeError):
    """The canonical marking does not exist for a compactor state."""


class FormatError(SketchError, ValueError):
    """Malformed serialized sketch."""


class TruncationError(FormatError):
    """Serialized sketch ended before all declared fields were read."""


class InvariantViolationError(SketchError):
    """A loaded or merged sketch failed the invariant check."""

    def __init__(self, report):
        self.report = report
        super().__init__(report.summary())


class StreamParseError(SketchError, ValueError):
    def __init__(self, message, line=None, offset=None):
        self.line = line
        self.offset = offset
        where = f"line {line}" if line is not None else f"offset {offset}"
        super().__init__(f"{where}: {message}")
