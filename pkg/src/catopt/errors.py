"""Exception hierarchy shared across the package."""


class CatoptError(Exception):
    """Base class for all catopt errors."""


class ValidationError(CatoptError):
    """Invalid user input (bad space, candidate, config, ...)."""


class MixedSpace(ValidationError):
    """Operation requires a purely categorical space."""


class InvalidIndex(ValidationError):
    """Option index or continuous value outside the declared domain."""


class BoundaryPoint(ValidationError):
    """Simplex point sits on the boundary where the density diverges."""


class NoObservations(ValidationError):
    """At least one observation is required."""


class AllConstant(ValidationError):
    """Every descriptor column is constant."""


class ShapeMismatch(ValidationError):
    """Array shapes disagree."""


class DegenerateScale(ValidationError):
    """All descriptor rows coincide; no metric scale can be derived."""


class ConstantSequence(ValidationError):
    """Pearson correlation of a constant sequence is undefined."""


class DegenerateObjectives(ValidationError):
    """Objective values are all identical."""


class TooFewObservations(ValidationError):
    """Not enough observations to train a descriptor transform."""


class NoDescriptors(ValidationError):
    """Variable has no descriptors but the strategy requires them."""


class ZeroWeights(ValidationError):
    """All transform weights are zero; relevance is undefined."""


class SpaceExhausted(CatoptError):
    """Every realizable candidate has already been evaluated."""


class TooLarge(ValidationError):
    """Candidate space too large for an exhaustive scan."""


class CalibrationFailed(CatoptError):
    """Iterative calibration did not reach its target tolerance."""


class RankingUnavailable(ValidationError):
    """Task does not provide an exhaustive candidate ranking."""


class TooFewSamples(ValidationError):
    """Statistical comparison needs more samples per group."""


class NonPositive(ValidationError):
    """Log-scale fit requires strictly positive values."""


class MissingCombination(ValidationError):
    """Lookup table does not cover the full product space."""


class UnknownOptionLabel(ValidationError):
    """Label in one file has no counterpart in another."""


class DuplicateRow(ValidationError):
    """Conflicting duplicate rows in a lookup table."""


class ConfigError(ValidationError):
    """Malformed task/strategy configuration."""


class TaskIOError(CatoptError):
    """Task files missing or unreadable."""
