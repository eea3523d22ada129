"""Concrete-distribution kernels on the simplex and per-observation ensembles.

Kernel locations are inferred with a fixed stochastic model: for every
observation, S Gumbel-softmax samples are drawn around the smoothed observed
corner at the shared ensemble temperature. The temperature shrinks as tau0/n,
so kernels anneal from diffuse to sharply categorical as evidence accumulates.

All campaign-scale evaluation happens in log space. Absolute densities at
smoothed corners grow like exp(K) and overflow for large K; the log-ratio
helpers at the bottom of this module (density relative to the uniform kernel
at the same query point) are the numerically meaningful quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    CategoricalVariable,
    Candidate,
    ContinuousVariable,
    Observation,
    ParameterSpace,
    log_smoothed_corner,
    validate_simplex,
)
from .errors import BoundaryPoint, NoObservations, ValidationError

DEFAULT_NUM_SAMPLES = 20
DEFAULT_LOCATION_SMOOTHING = 1e-2
DEFAULT_QUERY_SMOOTHING = 1e-3
#: Floor for the relative width of continuous kernels.
MIN_CONTINUOUS_WIDTH = 0.02


@dataclass(frozen=True)
class ConcreteKernel:
    """A concrete (Gumbel-softmax) density with class probabilities pi and temperature tau."""

    pi: np.ndarray
    tau: float

    def __post_init__(self):
        pi = validate_simplex(self.pi)
        if np.any(pi <= 0.0):
            raise ValidationError("kernel class probabilities must be strictly interior")
        if not self.tau > 0.0:
            raise ValidationError("kernel temperature must be positive")
        pi = pi.copy()
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "tau", float(self.tau))


@dataclass(frozen=True)
class TemperatureSchedule:
    """tau = tau0 / n, matching the one-over-observations annealing rule."""

    tau0: float = 1.0

    def __post_init__(self):
        if not self.tau0 > 0.0:
            raise ValidationError("tau0 must be positive")


def temperature(schedule: TemperatureSchedule, n_obs: int) -> float:
    if n_obs < 1:
        raise NoObservations("temperature needs at least one observation")
    return schedule.tau0 / n_obs


def log_concrete_pdf(z, kernel: ConcreteKernel) -> float:
    """Log density of the concrete distribution at a strictly interior point.

    The density is taken with respect to Lebesgue measure on the simplex
    projected to its first K-1 coordinates (so the uniform density is (K-1)!).
    """
    z = validate_simplex(z, size=kernel.pi.size)
    if np.any(z <= 0.0):
        raise BoundaryPoint("concrete pdf diverges at the simplex boundary; smooth first")
    k = z.size
    tau = kernel.tau
    log_z = np.log(z)
    log_pi = np.log(kernel.pi)
    lse = _logsumexp(log_pi - tau * log_z)
    return (
        math.lgamma(k)
        + (k - 1) * math.log(tau)
        + log_pi.sum()
        + (-tau - 1.0) * log_z.sum()
        - k * lse
    )


def concrete_pdf(z, kernel: ConcreteKernel) -> float:
    """Density of the concrete distribution at z; finite and positive."""
    return math.exp(log_concrete_pdf(z, kernel))


def sample_gumbel_softmax(pi, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Draw one concrete sample: softmax((log pi + gumbel) / tau)."""
    pi = validate_simplex(pi)
    if np.any(pi <= 0.0):
        raise ValidationError("pi must be strictly interior")
    if not tau > 0.0:
        raise ValidationError("tau must be positive")
    g = np.asarray(rng.gumbel(size=pi.size), dtype=float)
    return np.exp(_log_softmax((np.log(pi) + g) / tau))


@dataclass(frozen=True)
class KernelEnsemble:
    """One kernel per observation: sampled simplex locations plus continuous Gaussians.

    ``log_locations[v]`` has shape (n_obs, S, K_v) and stores the log
    coordinates of the location samples for categorical variable v; logs stay
    finite even when low temperatures collapse samples onto corners.
    ``boost_subsets`` holds the per-observation sample indices used for coarse
    (pseudo-boosted) density estimates.
    """

    space: ParameterSpace
    tau: float
    num_samples: int
    log_locations: tuple[np.ndarray, ...]
    continuous_centers: tuple[np.ndarray, ...]
    continuous_widths: tuple[float, ...]
    boost_subsets: np.ndarray
    query_smoothing: float = DEFAULT_QUERY_SMOOTHING

    @property
    def num_observations(self) -> int:
        return self.boost_subsets.shape[0]

    def location_samples(self, obs_index: int, var_index: int) -> np.ndarray:
        """Linear-space location samples (S, K) for one categorical variable."""
        cat_pos = _categorical_position(self.space, var_index)
        return np.exp(self.log_locations[cat_pos][obs_index])


def build_ensemble(
    observations: list[Observation],
    space: ParameterSpace,
    num_samples: int,
    schedule: TemperatureSchedule,
    rng: np.random.Generator,
    *,
    location_smoothing: float = DEFAULT_LOCATION_SMOOTHING,
    query_smoothing: float = DEFAULT_QUERY_SMOOTHING,
    boost_fraction: float = 0.10,
) -> KernelEnsemble:
    """Sample kernel locations for every observation at tau = tau0 / n."""
    if not observations:
        raise NoObservations("cannot build an ensemble without observations")
    if num_samples < 1:
        raise ValidationError("need at least one location sample per kernel")
    n = len(observations)
    tau = temperature(schedule, n)

    log_locations = []
    for var_index, var in enumerate(space.variables):
        if not isinstance(var, CategoricalVariable):
            continue
        k = var.num_options
        base = np.stack(
            [
                log_smoothed_corner(int(obs.candidate.values[var_index]), k, location_smoothing)
                for obs in observations
            ]
        )
        g = rng.gumbel(size=(n, num_samples, k))
        logits = (base[:, None, :] + g) / tau
        log_locations.append(_log_softmax(logits))

    centers, widths = [], []
    for var_index, var in enumerate(space.variables):
        if not isinstance(var, ContinuousVariable):
            continue
        centers.append(
            np.array([float(obs.candidate.values[var_index]) for obs in observations])
        )
        widths.append(var.width * max(MIN_CONTINUOUS_WIDTH, 1.0 / (1.0 + n)))

    n_coarse = max(1, math.ceil(boost_fraction * num_samples))
    subsets = np.stack(
        [rng.choice(num_samples, size=n_coarse, replace=False) for _ in range(n)]
    )

    return KernelEnsemble(
        space=space,
        tau=tau,
        num_samples=num_samples,
        log_locations=tuple(log_locations),
        continuous_centers=tuple(centers),
        continuous_widths=tuple(widths),
        boost_subsets=subsets,
        query_smoothing=query_smoothing,
    )


def log_ensemble_density(
    ensemble: KernelEnsemble, obs_index: int, query: Candidate
) -> float:
    """Log of the sample-averaged kernel density of one observation at a candidate.

    Categorical factors are concrete pdfs evaluated at the smoothed one-hot
    query corner, averaged over the kernel's location samples; continuous
    factors are Gaussian pdfs at the query value.
    """
    space = ensemble.space
    space.validate_candidate(query)
    if not 0 <= obs_index < ensemble.num_observations:
        raise ValidationError("observation index out of range")
    total = 0.0
    cat_pos = cont_pos = 0
    for value, var in zip(query.values, space.variables):
        if isinstance(var, CategoricalVariable):
            k = var.num_options
            log_q = log_smoothed_corner(int(value), k, ensemble.query_smoothing)
            log_locs = ensemble.log_locations[cat_pos][obs_index]
            per_sample = _log_pdf_from_logs(log_locs, log_q, ensemble.tau, k)
            total += _logmeanexp(per_sample)
            cat_pos += 1
        else:
            center = ensemble.continuous_centers[cont_pos][obs_index]
            width = ensemble.continuous_widths[cont_pos]
            total += _log_gaussian(float(value), center, width)
            cont_pos += 1
    return total


def ensemble_density(ensemble: KernelEnsemble, obs_index: int, query: Candidate) -> float:
    return math.exp(log_ensemble_density(ensemble, obs_index, query))


def log_uniform_density(space: ParameterSpace, tau: float, query_smoothing: float = DEFAULT_QUERY_SMOOTHING) -> float:
    """Log of the uniform reference density at the shared query convention.

    Categorical factors are the uniform-pi concrete pdf at a smoothed corner
    (identical for every corner by symmetry); continuous factors are the
    uniform pdf 1/(high-low).
    """
    if not tau > 0.0:
        raise ValidationError("tau must be positive")
    total = 0.0
    for var in space.variables:
        if isinstance(var, CategoricalVariable):
            k = var.num_options
            log_q = log_smoothed_corner(0, k, query_smoothing)
            total += _log_pdf_from_logs(
                np.full(k, -math.log(k)), log_q, tau, k
            )
        else:
            total -= math.log(var.width)
    return float(total)


def uniform_density(space: ParameterSpace, tau: float, query_smoothing: float = DEFAULT_QUERY_SMOOTHING) -> float:
    return math.exp(log_uniform_density(space, tau, query_smoothing))


# ---------------------------------------------------------------------------
# Vectorized log-space machinery used by the acquisition engine.


def _logsumexp(a, axis=None, keepdims=False):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis) if axis is not None else float(out)


def _logmeanexp(a, axis=None):
    n = a.size if axis is None else a.shape[axis]
    return _logsumexp(a, axis=axis) - math.log(n)


def _log_softmax(logits):
    m = np.max(logits, axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def _log_gaussian(x, mean, sigma):
    return -0.5 * ((x - mean) / sigma) ** 2 - math.log(sigma) - 0.5 * math.log(2 * math.pi)


def _log_pdf_from_logs(log_pi, log_q, tau, k):
    """log concrete pdf at log-coordinates; log_pi may be (..., K)."""
    lse = _logsumexp(log_pi - tau * log_q, axis=-1)
    return (
        math.lgamma(k)
        + (k - 1) * math.log(tau)
        + log_pi.sum(axis=-1)
        + (-tau - 1.0) * log_q.sum()
        - k * lse
    )


def _log_complement(log_z):
    """log(sum_{c != j} z_c) for every coordinate j of (..., K) log points.

    Uses 'total minus self' in linear space and repairs the dominant
    coordinate of each row with an exact exclusive logsumexp, so results stay
    accurate both for diffuse points and for points collapsed onto a corner.
    """
    z = np.exp(log_z)
    total = z.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        comp = np.log(np.maximum(total - z, 0.0))
    jmax = np.argmax(log_z, axis=-1)
    masked = np.array(log_z, copy=True)
    np.put_along_axis(masked, jmax[..., None], -np.inf, axis=-1)
    m = masked.max(axis=-1, keepdims=True)
    safe_m = np.where(np.isfinite(m), m, 0.0)
    excl = np.log(np.sum(np.exp(masked - safe_m), axis=-1)) + safe_m[..., 0]
    np.put_along_axis(comp, jmax[..., None], excl[..., None], axis=-1)
    return comp


def log_ratio_matrix_corners(log_locs, tau, k, query_smoothing):
    """Per-sample log density ratios (kernel vs uniform) at every option corner.

    ``log_locs`` has shape (..., K); the result has the same shape, entry
    [..., j] being the log ratio at the smoothed corner of option j. This is
    the fast path for untransformed (naive) queries, where every smoothed
    corner has only two distinct coordinate values.
    """
    lq_self = math.log1p(-query_smoothing * (k - 1) / k)
    lq_other = math.log(query_smoothing / k)
    comp = _log_complement(log_locs)
    den = np.logaddexp(log_locs - tau * lq_self, comp - tau * lq_other)
    a_kernel = log_locs.sum(axis=-1, keepdims=True) - k * den
    # A(uniform) = sum_c log(1/K) - K * lse_c(log(1/K) - tau*log q_c)
    #            = -K * lse_c(-tau * log q_c)
    a_uniform = -k * np.logaddexp(-tau * lq_self, math.log(k - 1) - tau * lq_other)
    return a_kernel - a_uniform


def log_ratio_matrix_points(locations, query_points, tau):
    """Per-sample log density ratios at arbitrary interior query points.

    ``locations`` is (..., K) linear-space interior points (reshaped kernel
    samples); ``query_points`` is (Q, K) interior points (reshaped query
    corners). Returns shape (..., Q). Row-scaled powers keep the K x Q matrix
    product finite for any temperature.
    """
    log_q = np.log(query_points)
    scaled = -tau * log_q
    row_max = scaled.max(axis=-1, keepdims=True)
    w = np.exp(scaled - row_max)  # (Q, K), entries in (0, 1]
    k = locations.shape[-1]
    den = np.log(locations @ w.T) + row_max[:, 0]
    a_kernel = np.log(locations).sum(axis=-1, keepdims=True) - k * den
    a_uniform = -k * (np.log(w.sum(axis=-1)) + row_max[:, 0])
    return a_kernel - a_uniform
