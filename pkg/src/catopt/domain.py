"""Parameter-space data model: variables, candidates, observations, one-hot geometry.

Objectives are minimized everywhere in this package; maximization tasks must be
ingested with a sign flip at the boundary. Option identity is positional (index
into the declared option list); labels are display metadata only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import InvalidIndex, MixedSpace, ValidationError

SIMPLEX_SUM_TOL = 1e-9

#: Default corner smoothing for density queries; keeps the concrete pdf finite
#: while preserving option affiliation.
DEFAULT_QUERY_SMOOTHING = 1e-3


@dataclass(frozen=True)
class CategoricalVariable:
    """A categorical variable with K options and optional K x D descriptors."""

    name: str
    options: tuple[str, ...]
    descriptors: np.ndarray | None = None

    def __init__(self, name, options, descriptors=None):
        options = tuple(str(o) for o in options)
        if len(options) < 2:
            raise ValidationError(f"variable {name!r} needs at least 2 options")
        if len(set(options)) != len(options):
            raise ValidationError(f"variable {name!r} has duplicate option labels")
        if descriptors is not None:
            descriptors = np.asarray(descriptors, dtype=float)
            if descriptors.ndim != 2 or descriptors.shape[0] != len(options):
                raise ValidationError(
                    f"descriptor matrix of {name!r} must have one row per option"
                )
            if descriptors.shape[1] < 1:
                raise ValidationError(f"descriptor matrix of {name!r} needs D >= 1")
            if not np.all(np.isfinite(descriptors)):
                raise ValidationError(f"descriptors of {name!r} must be finite")
            if len({tuple(row) for row in descriptors}) != len(options):
                raise ValidationError(
                    f"descriptor rows of {name!r} must be unique per option"
                )
            descriptors.setflags(write=False)
        object.__setattr__(self, "name", str(name))
        object.__setattr__(self, "options", options)
        object.__setattr__(self, "descriptors", descriptors)

    @property
    def num_options(self) -> int:
        return len(self.options)

    def index_of(self, label: str) -> int:
        try:
            return self.options.index(label)
        except ValueError:
            raise InvalidIndex(f"{label!r} is not an option of {self.name!r}") from None


@dataclass(frozen=True)
class ContinuousVariable:
    """A bounded continuous variable."""

    name: str
    low: float
    high: float

    def __post_init__(self):
        object.__setattr__(self, "low", float(self.low))
        object.__setattr__(self, "high", float(self.high))
        if not (np.isfinite(self.low) and np.isfinite(self.high)):
            raise ValidationError(f"bounds of {self.name!r} must be finite")
        if not self.high > self.low:
            raise ValidationError(f"variable {self.name!r} needs low < high")

    @property
    def width(self) -> float:
        return self.high - self.low


Variable = Union[CategoricalVariable, ContinuousVariable]


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered collection of categorical and continuous variables."""

    variables: tuple[Variable, ...]

    def __init__(self, variables: Sequence[Variable]):
        variables = tuple(variables)
        if not variables:
            raise ValidationError("parameter space needs at least one variable")
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise ValidationError("variable names must be unique")
        object.__setattr__(self, "variables", variables)

    @property
    def categorical(self) -> tuple[CategoricalVariable, ...]:
        return tuple(v for v in self.variables if isinstance(v, CategoricalVariable))

    @property
    def continuous(self) -> tuple[ContinuousVariable, ...]:
        return tuple(v for v in self.variables if isinstance(v, ContinuousVariable))

    @property
    def is_categorical_only(self) -> bool:
        return not self.continuous

    def cardinality(self) -> int:
        """Number of realizable candidates; defined for categorical spaces only."""
        return cardinality(self)

    def validate_candidate(self, candidate: "Candidate") -> None:
        if len(candidate.values) != len(self.variables):
            raise InvalidIndex("candidate length does not match the space")
        for value, var in zip(candidate.values, self.variables):
            if isinstance(var, CategoricalVariable):
                if not isinstance(value, (int, np.integer)):
                    raise InvalidIndex(
                        f"categorical {var.name!r} expects an option index"
                    )
                if not 0 <= value < var.num_options:
                    raise InvalidIndex(
                        f"option index {value} out of range for {var.name!r}"
                    )
            else:
                value = float(value)
                if not np.isfinite(value) or not var.low <= value <= var.high:
                    raise InvalidIndex(
                        f"value {value} outside bounds of {var.name!r}"
                    )


@dataclass(frozen=True)
class Candidate:
    """One assignment per variable: option indices and/or continuous values."""

    values: tuple

    def __init__(self, values: Sequence):
        vals = tuple(
            int(v) if isinstance(v, (int, np.integer)) else float(v) for v in values
        )
        object.__setattr__(self, "values", vals)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class Observation:
    """A measured candidate: objective is always to be minimized."""

    candidate: Candidate
    objective: float
    iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "objective", float(self.objective))
        if not np.isfinite(self.objective):
            raise ValidationError("objective must be finite")
        if self.iteration < 0:
            raise ValidationError("iteration must be >= 0")


def validate_simplex(point, size: int | None = None) -> np.ndarray:
    """Check the simplex invariants and return the point as an ndarray."""
    z = np.asarray(point, dtype=float)
    if z.ndim != 1 or z.size < 2:
        raise ValidationError("simplex point must be a vector of length >= 2")
    if size is not None and z.size != size:
        raise ValidationError(f"expected a length-{size} simplex point")
    if np.any(z < 0.0) or np.any(z > 1.0):
        raise ValidationError("simplex coordinates must lie in [0, 1]")
    if abs(z.sum() - 1.0) > SIMPLEX_SUM_TOL:
        raise ValidationError("simplex coordinates must sum to 1")
    return z


def cardinality(space: ParameterSpace) -> int:
    """Product of option counts over all (categorical) variables."""
    if not space.is_categorical_only:
        raise MixedSpace("cardinality is defined for categorical spaces only")
    n = 1
    for var in space.categorical:
        n *= var.num_options
    return n


def one_hot(index: int, size: int) -> np.ndarray:
    if not 0 <= index < size:
        raise InvalidIndex(f"index {index} out of range for {size} options")
    z = np.zeros(size)
    z[index] = 1.0
    return z


def encode_one_hot(candidate: Candidate, space: ParameterSpace) -> list[np.ndarray]:
    """One simplex corner per categorical variable of the candidate."""
    space.validate_candidate(candidate)
    corners = []
    for value, var in zip(candidate.values, space.variables):
        if isinstance(var, CategoricalVariable):
            corners.append(one_hot(int(value), var.num_options))
    return corners


def smooth_corner(point, epsilon: float) -> np.ndarray:
    """Pull a simplex point towards the barycenter: (1-eps)*z + eps/K.

    Keeps the concrete pdf finite at one-hot corners; preserves the argmax
    for eps < (K-1)/K.
    """
    z = validate_simplex(point)
    if not 0.0 < epsilon < 1.0:
        raise ValidationError("epsilon must lie in (0, 1)")
    return (1.0 - epsilon) * z + epsilon / z.size


def log_smoothed_corner(index: int, size: int, epsilon: float) -> np.ndarray:
    """log coordinates of smooth_corner(one_hot(index)), computed stably."""
    if not 0.0 < epsilon < 1.0:
        raise ValidationError("epsilon must lie in (0, 1)")
    logs = np.full(size, np.log(epsilon / size))
    logs[index] = np.log1p(-epsilon * (size - 1) / size)
    return logs
