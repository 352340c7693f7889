"""Mergeable relative-error quantile sketch built from adaptive compactors."""

from .compactor import AdaptiveCompactor, Marker, canonical_marking, initial_params, merge_compactors
from .errors import (EmptySketchError, FormatError, IncompatibleParametersError, InvalidKeyError,
                     InvariantViolationError, MarkingError, ParameterError, SketchError,
                     StreamParseError, TruncationError)
from .keys import KeyKind
from .oracle import ExactOracle, measure_error
from .sketch import QuerySnapshot, Sketch, SketchParams, merge_sketches, new_sketch

__all__ = [
    "AdaptiveCompactor", "Marker", "canonical_marking", "initial_params", "merge_compactors",
    "EmptySketchError", "FormatError", "IncompatibleParametersError", "InvalidKeyError",
    "InvariantViolationError", "MarkingError", "ParameterError", "SketchError",
    "StreamParseError", "TruncationError", "KeyKind", "ExactOracle", "measure_error",
    "QuerySnapshot", "Sketch", "SketchParams", "merge_sketches", "new_sketch",
]
__version__ = "0.1.0"
