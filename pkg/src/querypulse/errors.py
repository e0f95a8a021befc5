"""Exception types shared across the pipeline.

Every error raised on purpose by this package derives from QuerypulseError
so the CLI can map failures to exit codes: OSError/missing files -> 2,
QuerypulseError validation failures -> 3, anything else -> 4.
"""


class QuerypulseError(Exception):
    """Base class for all pipeline validation errors."""


class InvalidQueryError(QuerypulseError):
    """Query text is empty after normalization."""


class CorruptLogError(QuerypulseError):
    """More than half the lines of an event log failed to parse or validate."""


class InvalidValueError(QuerypulseError):
    """NaN or otherwise unusable numeric input."""


class EmptyAggregateError(QuerypulseError):
    """aggregate_query called with no instances."""


class EmptyCorpusError(QuerypulseError):
    """Language model training requires a non-empty corpus."""


class InvalidRatingError(QuerypulseError):
    """Editorial rating outside the 1..5 scale."""


class StratificationError(QuerypulseError):
    """A class is too small for the requested stratified split or folds."""


class DegenerateTrainingError(QuerypulseError):
    """Training data contains a single class."""


class ShapeError(QuerypulseError):
    """Row width does not match the model's feature space."""


class UndefinedAucError(QuerypulseError):
    """AUC needs at least one positive and one negative."""


class PrecisionUnattainableError(QuerypulseError):
    """No threshold reaches the requested precision.

    Carries the best precision any threshold achieved so callers can report
    how far off the target was.
    """

    def __init__(self, max_precision: float):
        self.max_precision = max_precision
        super().__init__(
            f"no threshold reaches the precision target; best achievable is "
            f"{max_precision:.4f}"
        )


class ConfigError(QuerypulseError):
    """Invalid or incomplete pipeline/generator configuration."""


class TrendError(QuerypulseError):
    """A generated corpus violates one of its configured behavioral trends."""
