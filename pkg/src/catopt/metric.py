"""Descriptor-guided re-metrization of the simplex.

Distances between a simplex point and option corners are measured through the
descriptors: the squared path length is the number-of-options-squared times
the squared Euclidean gap between the target option's descriptor row and the
descriptor average weighted by the point's coordinates. The reshape map turns
those distances into a new simplex point through softmin weights, so options
with similar descriptors end up sharing kernel mass. Distances are normalized
by the mean pairwise squared descriptor distance, which makes the map
invariant to uniform descriptor rescaling and to duplicated descriptor
columns.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .domain import validate_simplex
from .errors import AllConstant, DegenerateScale, ShapeMismatch, ValidationError


@dataclass(frozen=True)
class NormalizedDescriptors:
    """K x D descriptor matrix with every column min-max scaled to [0, 1]."""

    matrix: np.ndarray
    column_ranges: tuple[tuple[float, float], ...]

    @property
    def num_options(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_descriptors(self) -> int:
        return self.matrix.shape[1]


def normalize_descriptors(raw) -> NormalizedDescriptors:
    """Column-wise (v - min) / (max - min); constant columns are dropped."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 2:
        raise ValidationError("descriptor matrix must be K x D with K >= 2")
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    keep = hi > lo
    if not np.any(keep):
        raise AllConstant("every descriptor column is constant")
    if not np.all(keep):
        warnings.warn(
            f"dropping {int((~keep).sum())} constant descriptor column(s)",
            stacklevel=2,
        )
    matrix = (raw[:, keep] - lo[keep]) / (hi[keep] - lo[keep])
    matrix.setflags(write=False)
    ranges = tuple((float(a), float(b)) for a, b in zip(lo[keep], hi[keep]))
    return NormalizedDescriptors(matrix=matrix, column_ranges=ranges)


def embed(z, desc: NormalizedDescriptors) -> np.ndarray:
    """Descriptor-space image of a simplex point: coordinate-weighted row average."""
    z = validate_simplex(z)
    if z.size != desc.num_options:
        raise ShapeMismatch("simplex point length does not match descriptor rows")
    return z @ desc.matrix


def delta_s2(z, target: int, desc: NormalizedDescriptors) -> float:
    """Squared descriptor-metric distance from z to the corner of option ``target``."""
    if not 0 <= target < desc.num_options:
        raise ShapeMismatch("target option out of range")
    diff = desc.matrix[target] - embed(z, desc)
    k = desc.num_options
    return float(k * k * np.dot(diff, diff))


@dataclass(frozen=True)
class ReshapeMap:
    """Softmin map from descriptor distances to transformed simplex points.

    ``scale`` is the mean pairwise squared descriptor distance between
    options (including the number-of-options-squared prefactor shared with
    ``delta_s2``), which makes the map invariant to uniform rescaling and to
    duplicated columns of the descriptor matrix.
    """

    matrix: np.ndarray  # (K, D)
    scale: float

    @classmethod
    def from_descriptors(cls, desc: NormalizedDescriptors) -> "ReshapeMap":
        return cls.from_matrix(desc.matrix)

    @classmethod
    def from_matrix(cls, matrix) -> "ReshapeMap":
        x = np.asarray(matrix, dtype=float)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ShapeMismatch("descriptor matrix must be K x D with K >= 2")
        k = x.shape[0]
        sq = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=-1)
        mean_pairwise = sq.sum() / (k * (k - 1))
        scale = k * k * mean_pairwise
        if scale <= 0.0:
            raise DegenerateScale("all descriptor rows are identical")
        return cls(matrix=x, scale=float(scale))

    @property
    def num_options(self) -> int:
        return self.matrix.shape[0]

    def apply(self, z) -> np.ndarray:
        z = validate_simplex(z, size=self.num_options)
        return self.apply_to_points(z[None, :])[0]

    def apply_to_points(self, points: np.ndarray) -> np.ndarray:
        """Vectorized reshape of (..., K) simplex points; rows need not be validated."""
        x = self.matrix
        k = self.num_options
        embedded = points @ x  # (..., D)
        diff = x - embedded[..., None, :]  # (..., K, D)
        d2 = (k * k) * np.einsum("...jd,...jd->...j", diff, diff)
        w = np.exp(-d2 / self.scale)
        return w / w.sum(axis=-1, keepdims=True)


def reshape(z, mapping: ReshapeMap) -> np.ndarray:
    """Transformed simplex point; strictly interior for non-degenerate descriptors."""
    return mapping.apply(z)
