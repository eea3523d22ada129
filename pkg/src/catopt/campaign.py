"""Closed-loop campaign execution, metrics, repeated-trial statistics, fits.

A campaign is deterministic given (task, strategy, budget, batch size, seed):
every random draw flows through named per-generation substreams derived from
the seed, so interrupted campaigns can be resumed from their evaluation log
and paired-seed strategy comparisons see identical streams.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .acquisition import AcquisitionConfig, Surrogate, propose
from .domain import (
    Candidate,
    CategoricalVariable,
    ContinuousVariable,
    Observation,
    ParameterSpace,
)
from .errors import (
    DegenerateObjectives,
    DegenerateScale,
    NoDescriptors,
    NonPositive,
    RankingUnavailable,
    SpaceExhausted,
    TooFewSamples,
    ValidationError,
)
from .kernels import TemperatureSchedule, build_ensemble
from .learning import DescriptorTransform, TrainingConfig, forward, relevance, train
from .metric import ReshapeMap, normalize_descriptors
from .surfaces import OptimumSet

STRATEGIES = ("random", "naive", "static", "dynamic")

#: Streams for the per-generation substream derivation.
_STREAM_BOOTSTRAP, _STREAM_MODEL, _STREAM_PROPOSAL, _STREAM_TRAINING, _STREAM_RANDOM = range(5)


@dataclass(frozen=True)
class StrategyParams:
    """Hyperparameters shared by the model-based strategies."""

    tau0: float = 1.0
    num_samples: int = 20
    location_smoothing: float = 1e-2
    query_smoothing: float = 1e-3
    learning_rate: float = 0.1
    nu: float = 1e-3
    patience: int = 20
    max_epochs: int = 1000
    min_observations: int = 5

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            learning_rate=self.learning_rate,
            patience=self.patience,
            max_epochs=self.max_epochs,
            nu=self.nu,
            min_observations=self.min_observations,
        )


@dataclass
class CampaignState:
    """Mutable state of one campaign run."""

    space: ParameterSpace
    strategy: str
    budget: int
    batch_size: int
    seed: int
    observations: list[Observation] = field(default_factory=list)
    evaluated: set = field(default_factory=set)
    blocked: frozenset = frozenset()
    generation: int = 0
    transforms: dict[str, DescriptorTransform] = field(default_factory=dict)

    def __post_init__(self):
        # blocked combinations are excluded from proposals like evaluated ones
        self.evaluated |= set(self.blocked)


@dataclass(frozen=True)
class LogRecord:
    iteration: int
    values: tuple
    objective: float
    best: float
    t_ms: int


@dataclass
class CampaignLog:
    task_name: str
    strategy: str
    budget: int
    batch_size: int
    seed: int
    records: list[LogRecord] = field(default_factory=list)
    status: str = "budget"
    counters: dict = field(default_factory=dict)
    relevances: dict = field(default_factory=dict)
    transforms: dict = field(default_factory=dict)

    @property
    def best(self) -> float:
        return self.records[-1].best if self.records else math.inf


def _candidate_json(space: ParameterSpace, values) -> dict:
    out = {}
    for var, value in zip(space.variables, values):
        if isinstance(var, CategoricalVariable):
            out[var.name] = var.options[int(value)]
        else:
            out[var.name] = float(value)
    return out


def _candidate_from_json(space: ParameterSpace, payload: dict) -> Candidate:
    values = []
    for var in space.variables:
        raw = payload[var.name]
        if isinstance(var, CategoricalVariable):
            values.append(var.index_of(str(raw)))
        else:
            values.append(float(raw))
    return Candidate(values)


def record_to_json(space: ParameterSpace, record: LogRecord) -> str:
    return json.dumps(
        {
            "iter": record.iteration,
            "candidate": _candidate_json(space, record.values),
            "objective": record.objective,
            "best": record.best,
            "t_ms": record.t_ms,
        }
    )


def _gen_rng(seed: int, stream: int, generation: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, generation])


def _static_maps(space: ParameterSpace) -> tuple:
    maps = []
    for var in space.categorical:
        if var.descriptors is None:
            raise NoDescriptors(
                f"strategy needs descriptors for every categorical variable "
                f"({var.name!r} has none)"
            )
        maps.append(ReshapeMap.from_descriptors(normalize_descriptors(var.descriptors)))
    return tuple(maps)


def _dynamic_maps(
    state: CampaignState, params: StrategyParams, static_maps: tuple
) -> tuple:
    """Retrain per-variable transforms and reshape with the refined descriptors.

    Falls back to the static map per variable before the activation gate or
    when objectives are still constant, and to no map at all when a trained
    transform collapses every descriptor row together.
    """
    n = len(state.observations)
    objectives = [o.objective for o in state.observations]
    if n < params.min_observations or max(objectives) == min(objectives):
        return static_maps
    cfg = params.training_config()
    rng = _gen_rng(state.seed, _STREAM_TRAINING, state.generation)
    maps = []
    cat_positions = [
        i
        for i, var in enumerate(state.space.variables)
        if isinstance(var, CategoricalVariable)
    ]
    for cat_pos, var_index in enumerate(cat_positions):
        var = state.space.variables[var_index]
        transform = train(var, state.observations, cfg, rng, var_index=var_index)
        state.transforms[var.name] = transform
        refined = forward(normalize_descriptors(var.descriptors).matrix, transform)
        try:
            maps.append(ReshapeMap.from_matrix(refined))
        except DegenerateScale:
            maps.append(None)
    return tuple(maps)


def _propose_random(state: CampaignState, count: int, rng: np.random.Generator):
    """Uniform without-replacement sampling of unevaluated candidates."""
    space = state.space
    if space.is_categorical_only:
        ks = [v.num_options for v in space.categorical]
        total = space.cardinality()
        pool = [
            values
            for values in np.ndindex(*ks)
            if values not in state.evaluated
        ]
        if not pool:
            raise SpaceExhausted("no unevaluated candidate remains")
        take = min(count, len(pool))
        chosen = rng.choice(len(pool), size=take, replace=False)
        return [Candidate(pool[i]) for i in chosen]
    picked = []
    for _ in range(count):
        values = []
        for var in space.variables:
            if isinstance(var, CategoricalVariable):
                values.append(int(rng.integers(var.num_options)))
            else:
                values.append(float(rng.uniform(var.low, var.high)))
        picked.append(Candidate(tuple(values)))
    return picked


def run_campaign(
    task,
    strategy: str,
    budget: int,
    batch_size: int = 1,
    seed: int = 0,
    *,
    params: StrategyParams = StrategyParams(),
    acquisition: AcquisitionConfig = AcquisitionConfig(),
    log_path=None,
) -> CampaignLog:
    """Run one closed-loop campaign and return its evaluation log.

    The loop per generation: normalize objectives, rebuild the kernel
    ensemble at tau = tau0/n, apply the strategy's reshape maps (static:
    provided descriptors; dynamic: retrained transforms once five
    observations exist), propose a batch, evaluate, append. The random
    strategy samples unevaluated candidates uniformly without replacement.
    Stops at the budget or when the space is exhausted.
    """
    if strategy not in STRATEGIES:
        raise ValidationError(f"unknown strategy {strategy!r}")
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    space = task.space
    state = CampaignState(
        space=space,
        strategy=strategy,
        budget=budget,
        batch_size=batch_size,
        seed=seed,
        blocked=getattr(task, "blocked", frozenset()),
    )
    static_maps = _static_maps(space) if strategy in ("static", "dynamic") else None

    log = CampaignLog(
        task_name=getattr(task, "name", "task"),
        strategy=strategy,
        budget=budget,
        batch_size=batch_size,
        seed=seed,
        counters={"coarse_sample_evals": 0, "full_sample_evals": 0},
    )
    schedule = TemperatureSchedule(tau0=params.tau0)
    start = time.monotonic()
    best = math.inf
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        while len(log.records) < budget:
            want = min(batch_size, budget - len(log.records))
            state.generation += 1
            try:
                if strategy == "random" or not state.observations:
                    stream = (
                        _STREAM_RANDOM if strategy == "random" else _STREAM_BOOTSTRAP
                    )
                    batch = _propose_random(
                        state, want, _gen_rng(seed, stream, state.generation)
                    )
                else:
                    ensemble = build_ensemble(
                        state.observations,
                        space,
                        params.num_samples,
                        schedule,
                        _gen_rng(seed, _STREAM_MODEL, state.generation),
                        location_smoothing=params.location_smoothing,
                        query_smoothing=params.query_smoothing,
                        boost_fraction=acquisition.boost_fraction,
                    )
                    if strategy == "naive":
                        maps = None
                    elif strategy == "static":
                        maps = static_maps
                    else:
                        maps = _dynamic_maps(state, params, static_maps)
                    surrogate = Surrogate(
                        ensemble,
                        state.observations,
                        maps,
                        generation=state.generation,
                    )
                    cfg = replace(acquisition, batch_size=want)
                    batch = propose(
                        state,
                        surrogate,
                        cfg,
                        _gen_rng(seed, _STREAM_PROPOSAL, state.generation),
                    )
                    for key, value in surrogate.counters.items():
                        log.counters[key] += value
            except SpaceExhausted:
                log.status = "exhausted"
                break
            if not batch:
                log.status = "exhausted"
                break
            for cand in batch:
                objective = task.evaluate(cand)
                best = min(best, objective)
                index = len(log.records)
                state.observations.append(
                    Observation(cand, objective, iteration=index)
                )
                state.evaluated.add(tuple(cand.values))
                record = LogRecord(
                    iteration=index,
                    values=tuple(cand.values),
                    objective=float(objective),
                    best=float(best),
                    t_ms=int((time.monotonic() - start) * 1000),
                )
                log.records.append(record)
                if log_file:
                    log_file.write(record_to_json(space, record) + "\n")
            if log_file:
                log_file.flush()
    finally:
        if log_file:
            log_file.close()

    if strategy == "dynamic":
        for name, transform in state.transforms.items():
            log.transforms[name] = {
                "weights": transform.weights.tolist(),
                "bias": transform.bias.tolist(),
            }
            try:
                log.relevances[name] = relevance(transform).values.tolist()
            except Exception:
                log.relevances[name] = None
    return log


def replay_log(task, log_path) -> list[Observation]:
    """Rebuild the observation list from a JSONL campaign log."""
    observations = []
    with open(log_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            payload = json.loads(line)
            cand = _candidate_from_json(task.space, payload["candidate"])
            observations.append(
                Observation(cand, payload["objective"], iteration=payload["iter"])
            )
    return observations


# ---------------------------------------------------------------------------
# Metrics.

NOT_FOUND = None


def fraction_to_optimum(log: CampaignLog, optima: OptimumSet, cardinality: int):
    """(1-based index of the first optimum evaluation) / cardinality, or None."""
    members = {tuple(c) for c in optima.candidates}
    for i, record in enumerate(log.records):
        if tuple(int(v) for v in record.values) in members:
            return (i + 1) / cardinality
    return NOT_FOUND


def rank_trace(log: CampaignLog, ranking: np.ndarray, task) -> np.ndarray:
    """Rank (1 = best) of the best candidate found so far, per evaluation."""
    if ranking is None:
        raise RankingUnavailable("task has no exhaustive ranking")
    ranks = []
    best = None
    for record in log.records:
        r = int(ranking[task.flat_index(record.values)]) if hasattr(task, "flat_index") else int(
            ranking[task._flat(record.values)]
        )
        best = r if best is None else min(best, r)
        ranks.append(best)
    return np.asarray(ranks)


@dataclass
class StudyResult:
    """Fractions of the space explored across repeats of one strategy."""

    strategy: str
    fractions: list
    found_rate: float
    mean: float
    stderr: float

    @property
    def found_fractions(self) -> np.ndarray:
        return np.array([f for f in self.fractions if f is not None])


def summarize_fractions(strategy: str, fractions: list) -> StudyResult:
    found = np.array([f for f in fractions if f is not None])
    if found.size:
        mean = float(found.mean())
        stderr = float(found.std(ddof=1) / math.sqrt(found.size)) if found.size > 1 else 0.0
    else:
        mean = math.nan
        stderr = math.nan
    return StudyResult(
        strategy=strategy,
        fractions=fractions,
        found_rate=float(found.size / len(fractions)),
        mean=mean,
        stderr=stderr,
    )


def repeat_study(
    task_factory,
    strategies,
    budget: int,
    n_repeats: int,
    base_seed: int,
    *,
    batch_size: int = 1,
    params: StrategyParams = StrategyParams(),
    acquisition: AcquisitionConfig = AcquisitionConfig(),
) -> dict[str, StudyResult]:
    """Independent repeats with seeds base_seed + repeat index, per strategy.

    ``task_factory(repeat_index)`` supplies the task; fraction-to-optimum
    samples are aggregated per strategy as found-rate plus conditional mean
    (runs that never hit the optimum are never imputed).
    """
    if n_repeats < 2:
        raise ValidationError("need at least two repeats")
    fractions = {s: [] for s in strategies}
    for i in range(n_repeats):
        task = task_factory(i)
        optima = task.optima
        n = task.cardinality
        for s in strategies:
            log = run_campaign(
                task,
                s,
                budget,
                batch_size,
                seed=base_seed + i,
                params=params,
                acquisition=acquisition,
            )
            fractions[s].append(fraction_to_optimum(log, optima, n))
    return {s: summarize_fractions(s, fractions[s]) for s in strategies}


def mann_whitney_u(a, b):
    """Two-sided Mann-Whitney U statistic and p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    result = stats.mannwhitneyu(a, b, alternative="two-sided")
    return float(result.statistic), float(result.pvalue)


def compare_strategies(samples_a, samples_b) -> float:
    """Two-sided Mann-Whitney p-value for two fraction samples."""
    if len(samples_a) < 20 or len(samples_b) < 20:
        raise TooFewSamples("need at least 20 samples per group")
    return mann_whitney_u(samples_a, samples_b)[1]


# ---------------------------------------------------------------------------
# Scaling-law fits.


@dataclass(frozen=True)
class FitResult:
    alpha: float
    gamma: float
    r2: float


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    ss_res = float(((y - predicted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def fit_exponential(x, y) -> FitResult:
    """Least squares for y = alpha * exp(-gamma * x) on (x, ln y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValidationError("need at least three points")
    if np.any(y <= 0):
        raise NonPositive("exponential fit needs positive y")
    slope, intercept, r2 = _linear_fit(x, np.log(y))
    return FitResult(alpha=math.exp(intercept), gamma=-slope, r2=r2)


def fit_power(x, y) -> FitResult:
    """Least squares for y = alpha * x**(-gamma) on (ln x, ln y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValidationError("need at least three points")
    if np.any(y <= 0) or np.any(x <= 0):
        raise NonPositive("power fit needs positive x and y")
    slope, intercept, r2 = _linear_fit(np.log(x), np.log(y))
    return FitResult(alpha=math.exp(intercept), gamma=-slope, r2=r2)
