"""Optimization tasks: benchmark surfaces and user-supplied lookup tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import (
    Candidate,
    CategoricalVariable,
    ParameterSpace,
)
from .errors import (
    DuplicateRow,
    MissingCombination,
    RankingUnavailable,
    TaskIOError,
    UnknownOptionLabel,
    ValidationError,
)
from .surfaces import (
    OptimumSet,
    ShuffledSurface,
    SurfaceSpec,
    correlated_descriptors,
    evaluate_all,
    global_optima,
    reference_descriptors,
)


def _competition_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties sharing the smallest rank of their group."""
    ordered = np.sort(values)
    return np.searchsorted(ordered, values, side="left") + 1


@dataclass(frozen=True)
class SurfaceTask:
    """A benchmark surface exposed as an optimization task.

    Values are tabulated once in C index order; optima use exact equality.
    """

    name: str
    space: ParameterSpace
    values: np.ndarray
    optima: OptimumSet

    @classmethod
    def from_spec(
        cls,
        spec: SurfaceSpec | ShuffledSurface,
        descriptors: str = "none",
        *,
        descriptor_repeats: int = 1,
        correlation: float | None = None,
        descriptor_rng: np.random.Generator | None = None,
    ) -> "SurfaceTask":
        """Build the task, optionally attaching per-dimension descriptors.

        ``descriptors`` is one of "none", "reference" (the linear ramp encoding
        the reference ordering, repeated ``descriptor_repeats`` times), or
        "correlated" (random columns at Pearson correlation ``correlation``
        with the option index, drawn from ``descriptor_rng``).
        """
        if isinstance(spec, ShuffledSurface):
            base, values, optima = spec.base, spec.evaluate_all(), spec.global_optima()
            name = f"{base.canonical_string()}(shuffled)"
        else:
            base, values, optima = spec, evaluate_all(spec), global_optima(spec)
            name = spec.canonical_string()
        matrices: list[np.ndarray | None]
        if descriptors == "none":
            matrices = [None] * base.dims
        elif descriptors == "reference":
            matrices = [
                reference_descriptors(k, descriptor_repeats) for k in base.options
            ]
        elif descriptors == "correlated":
            if correlation is None or descriptor_rng is None:
                raise ValidationError(
                    "correlated descriptors need a target and an rng"
                )
            matrices = correlated_descriptors(base, correlation, descriptor_rng)
        else:
            raise ValidationError(f"unknown descriptor mode {descriptors!r}")
        variables = [
            CategoricalVariable(
                name=f"x{d}",
                options=[str(j) for j in range(k)],
                descriptors=matrices[d],
            )
            for d, k in enumerate(base.options)
        ]
        return cls(
            name=name,
            space=ParameterSpace(variables),
            values=values,
            optima=optima,
        )

    @property
    def cardinality(self) -> int:
        return self.space.cardinality()

    def flat_index(self, candidate) -> int:
        flat = 0
        for var, value in zip(self.space.categorical, candidate):
            flat = flat * var.num_options + int(value)
        return flat

    def evaluate(self, candidate: Candidate) -> float:
        self.space.validate_candidate(candidate)
        return float(self.values[self.flat_index(candidate.values)])

    def ranking(self) -> np.ndarray:
        """Competition rank of every candidate in flat order (1 = best)."""
        return _competition_ranks(self.values)

    @property
    def blocked(self) -> frozenset:
        return frozenset()


@dataclass(frozen=True)
class LookupTask:
    """A finite task backed by a lookup table of measured objectives."""

    name: str
    space: ParameterSpace
    table: dict[tuple, float]
    complete: bool

    @property
    def cardinality(self) -> int:
        return len(self.table)

    def evaluate(self, candidate: Candidate) -> float:
        self.space.validate_candidate(candidate)
        key = tuple(int(v) for v in candidate.values)
        if key not in self.table:
            raise MissingCombination(f"no measurement for candidate {key}")
        return self.table[key]

    @property
    def optima(self) -> OptimumSet:
        best = min(self.table.values())
        return OptimumSet(
            candidates=tuple(k for k, v in self.table.items() if v == best),
            value=best,
        )

    def ranking(self) -> np.ndarray:
        """Competition ranks aligned with the full categorical grid (0 where absent)."""
        if not self.space.is_categorical_only:
            raise RankingUnavailable("ranking needs a categorical lookup task")
        n = self.space.cardinality()
        values = np.array([self.table[k] for k in sorted(self.table)])
        ranks_present = _competition_ranks(values)
        out = np.zeros(n, dtype=int)
        for key, rank in zip(sorted(self.table), ranks_present):
            out[self._flat(key)] = rank
        return out

    def _flat(self, values) -> int:
        flat = 0
        for var, value in zip(self.space.categorical, values):
            flat = flat * var.num_options + int(value)
        return flat

    @property
    def blocked(self) -> frozenset:
        """Product-space combinations with no measurement (sparse tables)."""
        if self.complete:
            return frozenset()
        grids = np.meshgrid(
            *[np.arange(v.num_options) for v in self.space.categorical], indexing="ij"
        )
        all_combos = {
            tuple(int(g.ravel()[i]) for g in grids)
            for i in range(grids[0].size)
        }
        return frozenset(all_combos - set(self.table))


def ingest_lookup(
    candidates_path,
    descriptor_paths: dict[str, str] | None = None,
    *,
    allow_sparse: bool = False,
    name: str | None = None,
) -> LookupTask:
    """Read a candidates CSV (label columns plus a final "objective" column)
    and optional per-variable descriptor CSVs matched to options by label."""
    candidates_path = Path(candidates_path)
    if not candidates_path.exists():
        raise TaskIOError(f"no such file: {candidates_path}")
    with open(candidates_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError("empty candidates file") from None
        if len(header) < 2 or header[-1] != "objective":
            raise ValidationError(
                'candidates file needs variable columns and a final "objective" column'
            )
        var_names = header[:-1]
        labels: dict[str, list[str]] = {v: [] for v in var_names}
        rows: list[tuple[tuple[str, ...], float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(f"line {line_no}: wrong number of columns")
            try:
                objective = float(row[-1])
            except ValueError:
                raise ValidationError(f"line {line_no}: bad objective value") from None
            if not np.isfinite(objective):
                raise ValidationError(f"line {line_no}: objective must be finite")
            combo = tuple(cell.strip() for cell in row[:-1])
            for v, cell in zip(var_names, combo):
                if cell not in labels[v]:
                    labels[v].append(cell)
            rows.append((combo, objective))

    seen: dict[tuple[str, ...], float] = {}
    for combo, objective in rows:
        if combo in seen and seen[combo] != objective:
            raise DuplicateRow(f"conflicting objectives for candidate {combo}")
        seen[combo] = objective

    descriptor_paths = descriptor_paths or {}
    for v in descriptor_paths:
        if v not in var_names:
            raise UnknownOptionLabel(f"descriptor file for unknown variable {v!r}")
    matrices: dict[str, np.ndarray] = {}
    for v, path in descriptor_paths.items():
        path = Path(path)
        if not path.exists():
            raise TaskIOError(f"no such file: {path}")
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0] != "option":
                raise ValidationError(
                    f'descriptor file for {v!r} needs a leading "option" column'
                )
            per_label: dict[str, list[float]] = {}
            for row in reader:
                if not row:
                    continue
                label = row[0].strip()
                if label in per_label:
                    raise DuplicateRow(f"duplicate descriptor row for {label!r}")
                per_label[label] = [float(cell) for cell in row[1:]]
        extra = set(per_label) - set(labels[v])
        if extra:
            raise UnknownOptionLabel(
                f"descriptor rows for unknown option(s) of {v!r}: {sorted(extra)}"
            )
        missing = set(labels[v]) - set(per_label)
        if missing:
            raise UnknownOptionLabel(
                f"options of {v!r} without descriptors: {sorted(missing)}"
            )
        matrices[v] = np.array([per_label[lbl] for lbl in labels[v]])

    variables = [
        CategoricalVariable(name=v, options=labels[v], descriptors=matrices.get(v))
        for v in var_names
    ]
    space = ParameterSpace(variables)
    table = {
        tuple(variables[i].index_of(lbl) for i, lbl in enumerate(combo)): objective
        for combo, objective in seen.items()
    }
    complete = len(table) == space.cardinality()
    if not complete and not allow_sparse:
        raise MissingCombination(
            f"{space.cardinality() - len(table)} combination(s) missing; "
            "pass allow_sparse=True for sparse tables"
        )
    return LookupTask(
        name=name or candidates_path.stem,
        space=space,
        table=table,
        complete=complete,
    )
