"""Categorical benchmark surfaces with reproducible seeding.

Continuous-inspired surfaces map option index i to the grid point
center + (i - (K-1)/2) * step on the canonical domain of the parent function;
centering the grid makes odd-K symmetry exact in floating point, so the
odd/even optimum-degeneracy structure of the parent functions carries over.

All stochastic surface content is derived from a 64-bit FNV-1a hash of the
canonical spec string "name:dims:K,K,..." run through splitmix64 per
candidate. No ambient RNG is consulted, so evaluation is bit-identical across
processes and platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationFailed, InvalidIndex, TooLarge, ValidationError

SURFACE_NAMES = ("ackley", "camel", "dejong", "michalewicz", "slope", "noise", "random")

_NOISE_TARGET = 0.5
_NOISE_TOL = 0.02
_EXHAUSTIVE_LIMIT = 10**7

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = (x + np.uint64(_GOLDEN)).astype(np.uint64)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


def _candidate_uniforms(seed: int, index_grid: np.ndarray, stream: int) -> np.ndarray:
    """Deterministic uniforms in [0, 1) for an (N, dims) array of option indices."""
    h = np.full(index_grid.shape[0], seed, dtype=np.uint64)
    h = _splitmix64(h ^ np.uint64(stream))
    for d in range(index_grid.shape[1]):
        h = _splitmix64(h ^ index_grid[:, d].astype(np.uint64))
    return h.astype(np.float64) / float(1 << 64)


@dataclass(frozen=True)
class SurfaceSpec:
    """Identity of a benchmark surface; the seed is derived from the shape."""

    name: str
    dims: int
    options: tuple[int, ...]
    seed: int

    def __init__(self, name: str, dims: int, options):
        name = str(name)
        if name not in SURFACE_NAMES:
            raise ValidationError(f"unknown surface {name!r}")
        dims = int(dims)
        if dims < 1:
            raise ValidationError("dims must be >= 1")
        if isinstance(options, int):
            options = (options,) * dims
        options = tuple(int(k) for k in options)
        if len(options) != dims:
            raise ValidationError("one option count per dimension required")
        if any(k < 2 for k in options):
            raise ValidationError("every dimension needs at least 2 options")
        if name == "camel" and dims != 2:
            raise ValidationError("the camel surface is two-dimensional")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "options", options)
        object.__setattr__(self, "seed", fnv1a64(self.canonical_string().encode()))

    def canonical_string(self) -> str:
        return f"{self.name}:{self.dims}:{','.join(str(k) for k in self.options)}"

    @property
    def cardinality(self) -> int:
        n = 1
        for k in self.options:
            n *= k
        return n


def parse_surface_spec(text: str) -> SurfaceSpec:
    """Parse the documented "name:dims:K[,K...]" spec string."""
    parts = text.strip().split(":")
    if len(parts) != 3:
        raise ValidationError(f"bad surface spec {text!r}; expected name:dims:K[,K...]")
    name, dims_s, opts_s = parts
    try:
        dims = int(dims_s)
        options = tuple(int(tok) for tok in opts_s.split(","))
    except ValueError:
        raise ValidationError(f"bad surface spec {text!r}") from None
    if len(options) == 1:
        options = options * dims
    return SurfaceSpec(name, dims, options)


@dataclass(frozen=True)
class OptimumSet:
    """All candidates attaining the exact global minimum."""

    candidates: tuple[tuple[int, ...], ...]
    value: float

    def __contains__(self, indices) -> bool:
        return tuple(int(i) for i in indices) in set(self.candidates)


def _grid(low: float, high: float, k: int) -> np.ndarray:
    center = (low + high) / 2.0
    step = (high - low) / (k - 1)
    return center + (np.arange(k) - (k - 1) / 2.0) * step


_DOMAINS = {
    "ackley": (-32.768, 32.768),
    "dejong": (-5.12, 5.12),
    "michalewicz": (0.0, math.pi),
}


def _index_grid(spec: SurfaceSpec) -> np.ndarray:
    """All candidates as an (N, dims) index array in C order."""
    grids = np.meshgrid(*[np.arange(k) for k in spec.options], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _evaluate_indices(spec: SurfaceSpec, idx: np.ndarray) -> np.ndarray:
    """Vectorized evaluation of an (N, dims) index array."""
    name = spec.name
    if name in _DOMAINS:
        low, high = _DOMAINS[name]
        coords = np.stack(
            [_grid(low, high, k)[idx[:, d]] for d, k in enumerate(spec.options)],
            axis=1,
        )
        if name == "dejong":
            return (coords**2).sum(axis=1)
        if name == "ackley":
            a, b, c = 20.0, 0.2, 2.0 * math.pi
            d = spec.dims
            return (
                -a * np.exp(-b * np.sqrt((coords**2).sum(axis=1) / d))
                - np.exp(np.cos(c * coords).sum(axis=1) / d)
                + a
                + math.e
            )
        # michalewicz, steepness m = 10
        m = 10
        i = np.arange(1, spec.dims + 1)
        return -(
            np.sin(coords) * np.sin(i * coords**2 / math.pi) ** (2 * m)
        ).sum(axis=1)
    if name == "camel":
        x = _grid(-3.0, 3.0, spec.options[0])[idx[:, 0]]
        y = _grid(-2.0, 2.0, spec.options[1])[idx[:, 1]]
        return (
            (4.0 - 2.1 * x**2 + x**4 / 3.0) * x**2
            + x * y
            + (-4.0 + 4.0 * y**2) * y**2
        )
    slope = np.zeros(idx.shape[0])
    for d, k in enumerate(spec.options):
        slope += idx[:, d] / (k - 1)
    if name == "slope":
        return slope
    if name == "random":
        return _candidate_uniforms(spec.seed, idx, stream=2)
    # noise: slope plus uniform perturbations calibrated to a 0.5 correlation
    amplitude = calibrate_noise(spec)
    return slope + amplitude * _candidate_uniforms(spec.seed, idx, stream=1)


def evaluate(spec: SurfaceSpec, candidate) -> float:
    """Deterministic surface value of one candidate (sequence of option indices)."""
    idx = np.asarray([int(v) for v in candidate], dtype=np.int64)
    if idx.size != spec.dims:
        raise InvalidIndex("candidate has the wrong number of dimensions")
    for d, k in enumerate(spec.options):
        if not 0 <= idx[d] < k:
            raise InvalidIndex(f"index {idx[d]} out of range in dimension {d}")
    return float(_evaluate_indices(spec, idx[None, :])[0])


_TABLE_CACHE: dict[tuple, np.ndarray] = {}


def evaluate_all(spec: SurfaceSpec) -> np.ndarray:
    """Flat value table over all candidates in C index order (cached)."""
    key = (spec.name, spec.dims, spec.options)
    if key not in _TABLE_CACHE:
        if spec.cardinality > _EXHAUSTIVE_LIMIT:
            raise TooLarge("candidate space too large to tabulate")
        _TABLE_CACHE[key] = _evaluate_indices(spec, _index_grid(spec))
    return _TABLE_CACHE[key]


def global_optima(spec: SurfaceSpec) -> OptimumSet:
    """Exhaustive scan for the exact-minimum candidates."""
    values = evaluate_all(spec)
    best = values.min()
    where = np.nonzero(values == best)[0]
    idx = _index_grid(spec)[where]
    return OptimumSet(
        candidates=tuple(tuple(int(i) for i in row) for row in idx),
        value=float(best),
    )


_NOISE_CACHE: dict[tuple, float] = {}


def calibrate_noise(spec: SurfaceSpec) -> float:
    """Bisect the noise amplitude until corr(slope, slope + a*u) hits 0.5 +/- 0.02."""
    if spec.name != "noise":
        raise ValidationError("calibration applies to the noise surface only")
    key = (spec.dims, spec.options)
    if key in _NOISE_CACHE:
        return _NOISE_CACHE[key]
    if spec.cardinality > _EXHAUSTIVE_LIMIT:
        raise TooLarge("noise calibration requires tabulating the surface")
    idx = _index_grid(spec)
    slope = np.zeros(idx.shape[0])
    for d, k in enumerate(spec.options):
        slope += idx[:, d] / (k - 1)
    u = _candidate_uniforms(spec.seed, idx, stream=1)

    def corr(a: float) -> float:
        return float(np.corrcoef(slope, slope + a * u)[0, 1])

    lo, hi = 0.0, 1.0
    for _ in range(60):
        if corr(hi) < _NOISE_TARGET:
            break
        hi *= 2.0
    else:
        raise CalibrationFailed("could not bracket the noise amplitude")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        c = corr(mid)
        if abs(c - _NOISE_TARGET) <= _NOISE_TOL:
            _NOISE_CACHE[key] = mid
            return mid
        if c > _NOISE_TARGET:
            lo = mid
        else:
            hi = mid
    raise CalibrationFailed("noise amplitude bisection did not converge")


@dataclass(frozen=True)
class ShuffledSurface:
    """A surface observed through per-dimension permutations of its options.

    ``permutations[d][j]`` is the reference-order index of shuffled option j;
    the value multiset is unchanged.
    """

    base: SurfaceSpec
    permutations: tuple[tuple[int, ...], ...]

    def to_reference(self, candidate) -> tuple[int, ...]:
        return tuple(
            int(self.permutations[d][int(i)]) for d, i in enumerate(candidate)
        )

    def evaluate(self, candidate) -> float:
        return evaluate(self.base, self.to_reference(candidate))

    def evaluate_all(self) -> np.ndarray:
        idx = _index_grid(self.base)
        mapped = np.stack(
            [np.asarray(self.permutations[d])[idx[:, d]] for d in range(self.base.dims)],
            axis=1,
        )
        return _evaluate_indices(self.base, mapped)

    def global_optima(self) -> OptimumSet:
        ref = global_optima(self.base)
        inverse = [np.argsort(np.asarray(p)) for p in self.permutations]
        mapped = tuple(
            tuple(int(inverse[d][i]) for d, i in enumerate(cand))
            for cand in ref.candidates
        )
        return OptimumSet(candidates=mapped, value=ref.value)


def shuffle(spec: SurfaceSpec, permutation_seed: int) -> ShuffledSurface:
    """Apply seeded per-dimension permutations to the option ordering."""
    rng = np.random.default_rng(permutation_seed)
    perms = tuple(
        tuple(int(i) for i in rng.permutation(k)) for k in spec.options
    )
    return ShuffledSurface(base=spec, permutations=perms)


def reference_descriptors(k: int, repeats: int) -> np.ndarray:
    """K x repeats matrix whose identical columns encode the reference ordering."""
    if k < 2 or repeats < 1:
        raise ValidationError("need K >= 2 and repeats >= 1")
    ramp = np.arange(k) / (k - 1)
    return np.tile(ramp[:, None], (1, repeats))


def correlated_descriptors(
    spec: SurfaceSpec, target: float, rng: np.random.Generator
) -> list[np.ndarray]:
    """One single-column descriptor matrix per dimension with a targeted
    Pearson correlation between descriptor and option index."""
    if not 0.0 <= target <= 1.0:
        raise ValidationError("target correlation must lie in [0, 1]")
    out = []
    for k in spec.options:
        idx = np.arange(k, dtype=float)
        z = (idx - idx.mean()) / idx.std()
        if target == 1.0:
            column = z.copy()
        else:
            column = None
            for _ in range(50):
                noise = rng.normal(size=k)
                noise = noise - noise.mean()
                noise = noise - (noise @ z) / (z @ z) * z
                sd = noise.std()
                if sd < 1e-9:
                    continue
                noise = noise / sd
                cand = target * z + math.sqrt(1.0 - target**2) * noise
                achieved = float(np.corrcoef(cand, idx)[0, 1])
                if abs(achieved - target) <= 0.01:
                    column = cand
                    break
            if column is None:
                raise CalibrationFailed(
                    f"could not reach correlation {target} for K={k}"
                )
        out.append(column[:, None])
    return out
