"""Acquisition function, batch lambda schedule, proposal search, pseudo-boosting.

The acquisition value of a candidate is a density-weighted mixture of the
normalized observed objectives and a lambda-weighted uniform reference:

    alpha = (sum_k f_k p_k + lambda * p_u) / (sum_k p_k + p_u)

so alpha is always a convex combination of the observed (normalized)
objectives and lambda. Proposals minimize alpha. Every density is measured at
the same smoothed (and, in descriptor-guided modes, reshaped) query point as
the uniform reference, so only density *ratios* r_k = p_k / p_u enter; those
are handled in log space end to end. Candidates are ranked by the
scale-invariant gain (alpha - lambda), which stays well defined even when all
kernel ratios underflow; exact float ties are broken by a seeded choice.

Pseudo-boosting estimates each kernel density from a small sample subset
first and recomputes with every sample only where the coarse estimate reaches
a fixed fraction of the uniform density. Per-generation density tables double
as the kernel-density cache: they are keyed by the surrogate's generation
counter and thrown away when the ensemble is rebuilt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    CategoricalVariable,
    Candidate,
    ContinuousVariable,
    Observation,
    ParameterSpace,
    log_smoothed_corner,
    one_hot,
    smooth_corner,
)
from .errors import SpaceExhausted, ValidationError
from .kernels import (
    KernelEnsemble,
    _log_gaussian,
    _log_pdf_from_logs,
    _logmeanexp,
    log_ratio_matrix_corners,
    log_ratio_matrix_points,
    log_uniform_density,
)
from .metric import ReshapeMap

_GOLDEN_RATIO = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class AcquisitionConfig:
    batch_size: int = 1
    boost_enabled: bool = True
    boost_fraction: float = 0.10
    boost_threshold: float = 0.01
    exhaustive_limit: int = 100_000
    hillclimb_starts: int = 32
    continuous_samples: int = 256
    continuous_passes: int = 3

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError("batch size must be >= 1")
        if not 0.0 < self.boost_fraction < 1.0:
            raise ValidationError("boost fraction must lie in (0, 1)")
        if not self.boost_threshold > 0.0:
            raise ValidationError("boost threshold must be positive")


def normalize_objectives(observations) -> np.ndarray:
    """Min-max scale observed objectives to [0, 1]; a lone observation maps to 0."""
    if len(observations) == 0:
        raise ValidationError("need at least one observation")
    f = np.array(
        [obs.objective if isinstance(obs, Observation) else float(obs) for obs in observations]
    )
    span = f.max() - f.min()
    if span == 0.0:
        return np.zeros_like(f)
    return (f - f.min()) / span


def lambda_schedule(batch_size: int) -> np.ndarray:
    """Exploitation-first lambda spread on [-1, 1]; a single proposal uses 0."""
    if batch_size < 1:
        raise ValidationError("batch size must be >= 1")
    if batch_size == 1:
        return np.zeros(1)
    j = np.arange(batch_size)
    return 1.0 - 2.0 * j / (batch_size - 1)


class Surrogate:
    """Frozen per-generation view of the model: kernels, normalized objectives,
    optional per-variable reshape maps, and memoized density-ratio tables."""

    def __init__(
        self,
        ensemble: KernelEnsemble,
        observations: list[Observation],
        reshape_maps: tuple[ReshapeMap | None, ...] | None = None,
        generation: int = 0,
    ):
        space = ensemble.space
        n_cat = len(space.categorical)
        if reshape_maps is None:
            reshape_maps = (None,) * n_cat
        if len(reshape_maps) != n_cat:
            raise ValidationError("one reshape map slot per categorical variable")
        self.ensemble = ensemble
        self.space = space
        self.observations = list(observations)
        self.objectives_normalized = normalize_objectives(observations)
        self.reshape_maps = tuple(reshape_maps)
        self.generation = generation
        self.log_p_uniform = log_uniform_density(
            space, ensemble.tau, ensemble.query_smoothing
        )
        self.counters = {"coarse_sample_evals": 0, "full_sample_evals": 0}
        self._full_tables: list[np.ndarray | None] = [None] * n_cat
        self._coarse_tables: list[np.ndarray | None] = [None] * n_cat
        self._per_sample: list[np.ndarray | None] = [None] * n_cat

    # -- density-ratio tables -------------------------------------------------

    def _sample_ratios(self, cat_pos: int) -> np.ndarray:
        """Per-sample log density ratios (n, S, K): sample s of kernel k queried
        at (the reshape image of) each smoothed option corner."""
        if self._per_sample[cat_pos] is None:
            var = self.space.categorical[cat_pos]
            k = var.num_options
            log_locs = self.ensemble.log_locations[cat_pos]
            mapping = self.reshape_maps[cat_pos]
            if mapping is None:
                table = log_ratio_matrix_corners(
                    log_locs, self.ensemble.tau, k, self.ensemble.query_smoothing
                )
            else:
                eps = self.ensemble.query_smoothing
                corners = np.stack(
                    [smooth_corner(one_hot(j, k), eps) for j in range(k)]
                )
                queries = mapping.apply_to_points(corners)
                locations = mapping.apply_to_points(np.exp(log_locs))
                table = log_ratio_matrix_points(locations, queries, self.ensemble.tau)
            self._per_sample[cat_pos] = table
        return self._per_sample[cat_pos]

    def full_table(self, cat_pos: int) -> np.ndarray:
        """(n_obs, K) log mean ratio over all S samples."""
        if self._full_tables[cat_pos] is None:
            per_sample = self._sample_ratios(cat_pos)
            self._full_tables[cat_pos] = _logmeanexp(per_sample, axis=1)
        return self._full_tables[cat_pos]

    def coarse_table(self, cat_pos: int) -> np.ndarray:
        """(n_obs, K) log mean ratio over the designated boost subset."""
        if self._coarse_tables[cat_pos] is None:
            per_sample = self._sample_ratios(cat_pos)
            subsets = self.ensemble.boost_subsets
            rows = np.take_along_axis(per_sample, subsets[:, :, None], axis=1)
            self._coarse_tables[cat_pos] = _logmeanexp(rows, axis=1)
        return self._coarse_tables[cat_pos]

    def charge_coarse_evals(self) -> None:
        """Count one coarse pdf evaluation per (observation, boost sample, option)."""
        n, sc = self.ensemble.boost_subsets.shape
        for var in self.space.categorical:
            self.counters["coarse_sample_evals"] += n * sc * var.num_options

    def charge_full_evals(self) -> None:
        """Count one pdf evaluation per (observation, sample, option)."""
        n = self.ensemble.num_observations
        s = self.ensemble.num_samples
        for var in self.space.categorical:
            self.counters["full_sample_evals"] += n * s * var.num_options

    # -- per-candidate evaluation ----------------------------------------------

    def log_ratios(self, candidate: Candidate, *, coarse: bool = False) -> np.ndarray:
        """log(p_k / p_u) for one candidate, per observation kernel k."""
        self.space.validate_candidate(candidate)
        n = self.ensemble.num_observations
        out = np.zeros(n)
        cat_pos = cont_pos = 0
        for value, var in zip(candidate.values, self.space.variables):
            if isinstance(var, CategoricalVariable):
                table = self.coarse_table(cat_pos) if coarse else self.full_table(cat_pos)
                out += table[:, int(value)]
                cat_pos += 1
            else:
                centers = self.ensemble.continuous_centers[cont_pos]
                width = self.ensemble.continuous_widths[cont_pos]
                out += _log_gaussian(float(value), centers, width) + math.log(var.width)
                cont_pos += 1
        return out


def alpha(candidate: Candidate, surrogate: Surrogate, lam: float) -> float:
    """Acquisition value; a convex mixture of normalized objectives and lambda."""
    log_r = surrogate.log_ratios(candidate)
    r = np.exp(np.clip(log_r, -745.0, 709.0))
    f = surrogate.objectives_normalized
    return float((f @ r + lam) / (r.sum() + 1.0))


def boosted_density(
    ensemble: KernelEnsemble, obs_index: int, query: Candidate, cfg: AcquisitionConfig
):
    """Two-stage density estimate: (value, "coarse") below threshold, else
    (value, "full") recomputed from every sample."""
    if ensemble.num_samples * cfg.boost_fraction < 1.0 - 1e-12:
        raise ValidationError("boost fraction leaves no coarse samples")
    space = ensemble.space
    space.validate_candidate(query)
    subset = ensemble.boost_subsets[obs_index]

    def density(sample_ids) -> float:
        total = 0.0
        cat_pos = cont_pos = 0
        for value, var in zip(query.values, space.variables):
            if isinstance(var, CategoricalVariable):
                k = var.num_options
                log_locs = ensemble.log_locations[cat_pos][obs_index][sample_ids]
                log_q = log_smoothed_corner(int(value), k, ensemble.query_smoothing)
                total += _logmeanexp(_log_pdf_from_logs(log_locs, log_q, ensemble.tau, k))
                cat_pos += 1
            else:
                center = ensemble.continuous_centers[cont_pos][obs_index]
                width = ensemble.continuous_widths[cont_pos]
                total += _log_gaussian(float(value), center, width)
                cont_pos += 1
        return total

    log_coarse = density(subset)
    log_pu = log_uniform_density(space, ensemble.tau, ensemble.query_smoothing)
    if log_coarse >= math.log(cfg.boost_threshold) + log_pu:
        return math.exp(density(np.arange(ensemble.num_samples))), "full"
    with np.errstate(over="ignore"):
        return math.exp(log_coarse) if log_coarse < 709 else math.inf, "coarse"


# ---------------------------------------------------------------------------
# Proposal search.


def _candidate_grid(space: ParameterSpace) -> np.ndarray:
    ks = [v.num_options for v in space.categorical]
    grids = np.meshgrid(*[np.arange(k) for k in ks], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _flat_index(space: ParameterSpace, values) -> int:
    flat = 0
    for var, value in zip(space.categorical, values):
        flat = flat * var.num_options + int(value)
    return flat


def _gain_scores(g: np.ndarray, fnorm: np.ndarray, lam: float):
    """Gain (alpha - lambda) for every column of the (n, N) log-ratio matrix,
    rescaled by the matrix maximum so orderings survive extreme underflow."""
    if g.size == 0:
        return np.zeros(g.shape[1]), 0.0
    m = float(g.max())
    if not np.isfinite(m):
        m = 0.0
    r = np.exp(g - m)
    weighted = (fnorm - lam) @ r
    total = r.sum(axis=0)
    if m > -690.0:
        return weighted / (math.exp(-m) + total), m
    # Uniform reference is unrepresentably dominant; orderings reduce to the
    # numerator (denominators agree to machine precision).
    return weighted, m


def _pick_minimum(scores: np.ndarray, allowed: np.ndarray, rng: np.random.Generator) -> int:
    masked = np.where(allowed, scores, np.inf)
    best = masked.min()
    ties = np.nonzero(masked == best)[0]
    if ties.size == 1:
        return int(ties[0])
    return int(rng.choice(ties))


def propose(state, surrogate: Surrogate, cfg: AcquisitionConfig, rng: np.random.Generator):
    """Batch of candidates minimizing alpha across the lambda schedule.

    ``state`` supplies the space and the set of already-evaluated candidates
    (categorical-only candidates are never re-proposed). Returns at most
    ``cfg.batch_size`` candidates; raises SpaceExhausted when nothing is left.
    """
    space: ParameterSpace = state.space
    if space.is_categorical_only:
        if space.cardinality() <= cfg.exhaustive_limit:
            return _propose_exhaustive(state, surrogate, cfg, rng)
        return _propose_hillclimb(state, surrogate, cfg, rng)
    return _propose_mixed(state, surrogate, cfg, rng)


def _log_ratio_columns(surrogate: Surrogate, tables, grid: np.ndarray) -> np.ndarray:
    g = tables[0][:, grid[:, 0]]
    for v in range(1, grid.shape[1]):
        g = g + tables[v][:, grid[:, v]]
    return g


def _propose_exhaustive(state, surrogate, cfg, rng):
    space = state.space
    grid = _candidate_grid(space)
    n_candidates = grid.shape[0]
    allowed = np.ones(n_candidates, dtype=bool)
    for values in state.evaluated:
        allowed[_flat_index(space, values)] = False
    if not allowed.any():
        raise SpaceExhausted("every candidate has been evaluated")

    sub = grid[allowed]
    n_cat = len(space.categorical)
    if cfg.boost_enabled:
        coarse = [surrogate.coarse_table(v) for v in range(n_cat)]
        surrogate.charge_coarse_evals()
        g = _log_ratio_columns(surrogate, coarse, sub)
        refine = g >= math.log(cfg.boost_threshold)
        if refine.any():
            full = [surrogate.full_table(v) for v in range(n_cat)]
            rows, cols = np.nonzero(refine)
            n_obs = g.shape[0]
            s_full = surrogate.ensemble.num_samples
            for v in range(n_cat):
                k = space.categorical[v].num_options
                cells = np.zeros((n_obs, k), dtype=bool)
                cells[rows, sub[cols, v]] = True
                surrogate.counters["full_sample_evals"] += int(cells.sum()) * s_full
            g_full = _log_ratio_columns(surrogate, full, sub)
            g = np.where(refine, g_full, g)
    else:
        full = [surrogate.full_table(v) for v in range(n_cat)]
        surrogate.charge_full_evals()
        g = _log_ratio_columns(surrogate, full, sub)

    fnorm = surrogate.objectives_normalized
    choice_pool = np.ones(sub.shape[0], dtype=bool)
    picked = []
    for lam in lambda_schedule(cfg.batch_size):
        if not choice_pool.any():
            break
        scores, _ = _gain_scores(g, fnorm, lam)
        idx = _pick_minimum(scores, choice_pool, rng)
        choice_pool[idx] = False
        picked.append(Candidate(tuple(int(i) for i in sub[idx])))
    return picked


def _propose_hillclimb(state, surrogate, cfg, rng):
    space = state.space
    evaluated = {tuple(v) for v in state.evaluated}
    ks = [v.num_options for v in space.categorical]
    n_cat = len(ks)
    tables = [surrogate.full_table(v) for v in range(n_cat)]
    surrogate.charge_full_evals()
    fnorm = surrogate.objectives_normalized
    # shared scale keeps scores comparable across candidates even in underflow
    m_ref = float(sum(t.max() for t in tables))

    def key(values, lam):
        g = np.zeros(len(fnorm))
        for v, value in enumerate(values):
            g += tables[v][:, int(value)]
        r = np.exp(g - m_ref)
        num = float((fnorm - lam) @ r)
        den = math.exp(-m_ref) + float(r.sum()) if m_ref > -690.0 else 1.0
        return num / den

    def random_unevaluated():
        for _ in range(10_000):
            values = tuple(int(rng.integers(k)) for k in ks)
            if values not in evaluated:
                return values
        raise SpaceExhausted("could not sample an unevaluated candidate")

    best_observed = min(state.observations, key=lambda o: o.objective)
    picked = []
    batch_taken = set()
    for lam in lambda_schedule(cfg.batch_size):
        starts = [random_unevaluated() for _ in range(cfg.hillclimb_starts)]
        starts.append(tuple(int(v) for v in best_observed.candidate.values))
        best_key, best_values = math.inf, None
        for start in starts:
            current = start
            current_key = (
                key(current, lam)
                if current not in evaluated and current not in batch_taken
                else math.inf
            )
            improved = True
            while improved:
                improved = False
                for v in range(n_cat):
                    for opt in range(ks[v]):
                        if opt == current[v]:
                            continue
                        neighbor = current[:v] + (opt,) + current[v + 1 :]
                        if neighbor in evaluated or neighbor in batch_taken:
                            continue
                        nk = key(neighbor, lam)
                        if nk < current_key:
                            current, current_key = neighbor, nk
                            improved = True
            if current_key < best_key:
                best_key, best_values = current_key, current
        if best_values is None:
            raise SpaceExhausted("hill climb found no unevaluated candidate")
        batch_taken.add(best_values)
        picked.append(Candidate(best_values))
    return picked


def _propose_mixed(state, surrogate, cfg, rng):
    space = state.space
    cat_vars = space.categorical
    cont_vars = space.continuous
    grid = _candidate_grid(space) if cat_vars else np.zeros((1, 0), dtype=int)
    n_cat = grid.shape[1]
    tables = [surrogate.full_table(v) for v in range(n_cat)]
    if n_cat:
        surrogate.charge_full_evals()
    fnorm = surrogate.objectives_normalized
    n_obs = len(fnorm)

    g_cat = (
        _log_ratio_columns(surrogate, tables, grid)
        if n_cat
        else np.zeros((n_obs, 1))
    )

    def cont_log_ratios(xs: np.ndarray) -> np.ndarray:
        """(n_obs, n_points) continuous log density ratios."""
        out = np.zeros((n_obs, xs.shape[0]))
        for c, var in enumerate(cont_vars):
            centers = surrogate.ensemble.continuous_centers[c]
            width = surrogate.ensemble.continuous_widths[c]
            out += _log_gaussian(
                xs[None, :, c], centers[:, None], width
            ) + math.log(var.width)
        return out

    picked = []
    taken = set()
    for lam in lambda_schedule(cfg.batch_size):
        xs = np.stack(
            [rng.uniform(v.low, v.high, size=cfg.continuous_samples) for v in cont_vars],
            axis=1,
        )
        g_cont = cont_log_ratios(xs)
        # total log ratios for every (categorical combo, continuous sample)
        g = g_cat[:, :, None] + g_cont[:, None, :]
        g2 = g.reshape(n_obs, -1)
        scores, m = _gain_scores(g2, fnorm, lam)
        order = np.argsort(scores, kind="stable")
        flat = None
        for idx in order:
            combo = tuple(int(i) for i in grid[idx // cfg.continuous_samples]) if n_cat else ()
            values = _interleave(space, combo, xs[idx % cfg.continuous_samples])
            if values not in taken:
                flat = idx
                break
        if flat is None:
            raise SpaceExhausted("no distinct mixed candidate available")
        combo = grid[flat // cfg.continuous_samples] if n_cat else np.zeros(0, dtype=int)
        x_best = xs[flat % cfg.continuous_samples].copy()

        def gain_at(x_vec) -> float:
            g_c = np.zeros(n_obs)
            for v in range(n_cat):
                g_c += tables[v][:, int(combo[v])]
            g_c += cont_log_ratios(x_vec[None, :])[:, 0]
            r = np.exp(g_c - m)
            den = math.exp(-m) + float(r.sum()) if m > -690.0 else 1.0
            return float((fnorm - lam) @ r) / den

        for _ in range(cfg.continuous_passes):
            for c, var in enumerate(cont_vars):
                x_best[c] = _golden_section(
                    lambda t: gain_at(_with_coord(x_best, c, t)), var.low, var.high
                )
        values = _interleave(space, tuple(int(i) for i in combo), x_best)
        taken.add(values)
        picked.append(Candidate(values))
    return picked


def _with_coord(x: np.ndarray, index: int, value: float) -> np.ndarray:
    out = x.copy()
    out[index] = value
    return out


def _interleave(space: ParameterSpace, cat_values, cont_values) -> tuple:
    values = []
    cat_pos = cont_pos = 0
    for var in space.variables:
        if isinstance(var, CategoricalVariable):
            values.append(int(cat_values[cat_pos]))
            cat_pos += 1
        else:
            values.append(float(cont_values[cont_pos]))
            cont_pos += 1
    return tuple(values)


def _golden_section(fn, low: float, high: float, iterations: int = 20) -> float:
    a, b = low, high
    c = b - _GOLDEN_RATIO * (b - a)
    d = a + _GOLDEN_RATIO * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iterations):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN_RATIO * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN_RATIO * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)
