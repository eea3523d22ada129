"""Learned descriptor refinement: softsign transform, penalty loss, trainer.

The transform x' = softsign(W x + b) is trained per categorical variable on
the descriptors of the options chosen so far against the observed objectives.
Four penalties are minimized jointly: one rewards a strongly correlated
transformed descriptor, one pushes every correlation towards either 1 or
insignificance, one decorrelates transformed descriptors from each other, and
an L1 term keeps the weight matrix sparse. Correlations below the Fisher
significance threshold 1/sqrt(n-3) are treated as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import CategoricalVariable, Observation
from .errors import (
    ConstantSequence,
    DegenerateObjectives,
    NoDescriptors,
    ShapeMismatch,
    TooFewObservations,
    ValidationError,
    ZeroWeights,
)
from .metric import normalize_descriptors


@dataclass(frozen=True)
class DescriptorTransform:
    """Learnable map from provided to refined descriptors: softsign(W x + b)."""

    weights: np.ndarray  # (D', D)
    bias: np.ndarray  # (D',)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if w.ndim != 2 or b.ndim != 1 or b.size != w.shape[0]:
            raise ShapeMismatch("weights must be (D', D) with a length-D' bias")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("transform parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.1
    patience: int = 20
    max_epochs: int = 1000
    nu: float = 1e-3
    min_observations: int = 5
    improvement_tol: float = 1e-6

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.patience > self.max_epochs:
            raise ValidationError("patience cannot exceed max_epochs")


@dataclass(frozen=True)
class RelevanceReport:
    """Normalized absolute weight mass per original descriptor."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise ValidationError("relevances must be non-negative and sum to 1")
        object.__setattr__(self, "values", v)


def softsign(u):
    u = np.asarray(u, dtype=float)
    return u / (1.0 + np.abs(u))


def forward(x, transform: DescriptorTransform) -> np.ndarray:
    """Transformed descriptor vector, every coordinate strictly inside (-1, 1)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != transform.weights.shape[1]:
        raise ShapeMismatch("descriptor length does not match transform input size")
    return softsign(x @ transform.weights.T + transform.bias)


def pearson(a, b) -> float:
    """Standard Pearson correlation coefficient of two non-constant sequences."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ShapeMismatch("pearson needs two equal-length sequences (n >= 2)")
    da = a - a.mean()
    db = b - b.mean()
    na = math.sqrt(np.dot(da, da))
    nb = math.sqrt(np.dot(db, db))
    if na == 0.0 or nb == 0.0:
        raise ConstantSequence("pearson is undefined for constant sequences")
    return float(np.clip(np.dot(da, db) / (na * nb), -1.0, 1.0))


def fisher_threshold(n: int) -> float:
    """Standard error of an insignificant correlation: 1/sqrt(n-3), clamped to 1 for n <= 3."""
    if n <= 3:
        return 1.0
    return min(1.0, 1.0 / math.sqrt(n - 3))


def adjusted_corr(rho: float, n: int) -> float:
    """Correlation magnitude rescaled above the Fisher threshold; 0 if insignificant."""
    if abs(rho) > 1.0 + 1e-12:
        raise ValidationError("|rho| cannot exceed 1")
    delta = fisher_threshold(n)
    if delta >= 1.0:
        return 0.0
    return max((abs(rho) - delta) / (1.0 - delta), 0.0)


def _safe_pearson_columns(cols: np.ndarray, target: np.ndarray):
    """Column-wise Pearson against a target; constant columns contribute rho = 0."""
    dc = cols - cols.mean(axis=0)
    dt = target - target.mean()
    nc = np.sqrt((dc * dc).sum(axis=0))
    nt = math.sqrt(np.dot(dt, dt))
    ok = nc > 0.0
    rho = np.zeros(cols.shape[1])
    rho[ok] = np.clip((dc[:, ok] * dt[:, None]).sum(axis=0) / (nc[ok] * nt), -1.0, 1.0)
    return rho, dc, nc, dt, nt


def loss(
    transform: DescriptorTransform,
    rows,
    objectives,
    cfg: TrainingConfig,
):
    """Total penalty and its (lambda0, lambda1, lambda2, lambda3) breakdown."""
    total, parts, _, _ = _loss_and_gradient(transform, rows, objectives, cfg, want_grad=False)
    return total, parts


def loss_gradient(
    transform: DescriptorTransform,
    rows,
    objectives,
    cfg: TrainingConfig,
):
    """Analytic gradients (dW, db) of the total penalty."""
    _, _, dw, db = _loss_and_gradient(transform, rows, objectives, cfg, want_grad=True)
    return dw, db


def _loss_and_gradient(transform, rows, objectives, cfg, want_grad):
    x = np.asarray(rows, dtype=float)
    f = np.asarray(objectives, dtype=float)
    if x.ndim != 2 or f.ndim != 1 or x.shape[0] != f.size:
        raise ShapeMismatch("rows must be n x D with one objective per row")
    n = f.size
    if n < 2:
        raise ShapeMismatch("need at least two observations")
    if np.ptp(f) == 0.0:
        raise DegenerateObjectives("objectives are constant")

    w, b = transform.weights, transform.bias
    d_out = w.shape[0]
    u = x @ w.T + b
    cols = softsign(u)
    dcols_du = 1.0 / (1.0 + np.abs(u)) ** 2

    delta = fisher_threshold(n)
    rho_f, dc, nc, dt, nt = _safe_pearson_columns(cols, f)
    abs_rho = np.abs(rho_f)
    # lambda0: reward the single best correlation with the objectives
    i_best = int(np.argmax(abs_rho))
    lam0 = 1.0 - abs_rho[i_best]
    # lambda1: push correlations towards 1 or below significance
    if delta >= 1.0:
        rho_adj = np.zeros(d_out)
    else:
        rho_adj = np.maximum((abs_rho - delta) / (1.0 - delta), 0.0)
    lam1 = float((np.sin(math.pi * rho_adj) ** 2).sum() / d_out)
    # lambda2: decorrelate transformed descriptors pairwise
    lam2 = 0.0
    pair_rho = None
    if d_out > 1:
        norm_cols = np.where(nc > 0, nc, 1.0)
        unit = dc / norm_cols
        pair_rho = np.clip(unit.T @ unit, -1.0, 1.0)
        ok = np.outer(nc > 0, nc > 0)
        pair_rho = np.where(ok, pair_rho, 0.0)
        np.fill_diagonal(pair_rho, 0.0)
        if delta >= 1.0:
            pair_adj = np.zeros_like(pair_rho)
        else:
            pair_adj = np.maximum((np.abs(pair_rho) - delta) / (1.0 - delta), 0.0)
        lam2 = float(
            (np.sin(0.5 * math.pi * pair_adj) ** 2).sum() / (d_out * (d_out - 1))
        )
    lam3 = float(cfg.nu * np.abs(w).sum())
    parts = {"lambda0": float(lam0), "lambda1": lam1, "lambda2": lam2, "lambda3": lam3}
    total = float(lam0 + lam1 + lam2 + lam3)
    if not want_grad:
        return total, parts, None, None

    # Backpropagate through the penalties into d(total)/d(cols).
    g_cols = np.zeros_like(cols)
    factor = 0.0 if delta >= 1.0 else 1.0 / (1.0 - delta)

    def drho_f(i):
        # gradient of rho(cols[:, i], f) with respect to cols[:, i]
        if nc[i] == 0.0:
            return np.zeros(n)
        return dt / (nc[i] * nt) - rho_f[i] * dc[:, i] / nc[i] ** 2

    if abs_rho[i_best] > 0.0:
        g_cols[:, i_best] += -np.sign(rho_f[i_best]) * drho_f(i_best)
    for i in range(d_out):
        if rho_adj[i] <= 0.0:
            continue
        coeff = (math.pi / d_out) * math.sin(2.0 * math.pi * rho_adj[i]) * factor
        g_cols[:, i] += coeff * np.sign(rho_f[i]) * drho_f(i)
    if d_out > 1:
        scale = math.pi / (2.0 * d_out * (d_out - 1))
        for i in range(d_out):
            for j in range(d_out):
                if i == j or pair_adj[i, j] <= 0.0:
                    continue
                r = pair_rho[i, j]
                coeff = scale * math.sin(math.pi * pair_adj[i, j]) * factor
                if nc[i] == 0.0 or nc[j] == 0.0:
                    continue
                dr_di = dc[:, j] / (nc[i] * nc[j]) - r * dc[:, i] / nc[i] ** 2
                g_cols[:, i] += coeff * np.sign(r) * dr_di

    g_u = g_cols * dcols_du
    dw = g_u.T @ x + cfg.nu * np.sign(w)
    db = g_u.sum(axis=0)
    return total, parts, dw, db


def train(
    variable: CategoricalVariable,
    observations: list[Observation],
    cfg: TrainingConfig,
    rng: np.random.Generator,
    *,
    var_index: int = 0,
) -> DescriptorTransform:
    """Full-batch gradient descent on the penalty loss; returns the best parameters seen.

    ``var_index`` locates the variable inside each observation's candidate.
    """
    if variable.descriptors is None:
        raise NoDescriptors(f"variable {variable.name!r} has no descriptors")
    if len(observations) < cfg.min_observations:
        raise TooFewObservations(
            f"need at least {cfg.min_observations} observations to train"
        )
    f = np.array([obs.objective for obs in observations])
    if np.ptp(f) == 0.0:
        raise DegenerateObjectives("objectives are constant")
    normalized = normalize_descriptors(variable.descriptors).matrix
    chosen = np.array([int(obs.candidate.values[var_index]) for obs in observations])
    rows = normalized[chosen]

    d = normalized.shape[1]
    w = np.eye(d) + rng.normal(0.0, 0.01, size=(d, d))
    b = np.zeros(d)
    best = DescriptorTransform(w.copy(), b.copy())
    best_loss, _ = loss(best, rows, f, cfg)
    stale = 0
    for _ in range(cfg.max_epochs):
        current = DescriptorTransform(w, b)
        total, _, dw, db = _loss_and_gradient(current, rows, f, cfg, want_grad=True)
        if total < best_loss - cfg.improvement_tol:
            best_loss = total
            best = DescriptorTransform(w.copy(), b.copy())
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
        w = w - cfg.learning_rate * dw
        b = b - cfg.learning_rate * db
    final = DescriptorTransform(w, b)
    final_loss, _ = loss(final, rows, f, cfg)
    if final_loss < best_loss - cfg.improvement_tol:
        best = final
    return best


def relevance(transform: DescriptorTransform) -> RelevanceReport:
    """Share of absolute weight mass attributed to each original descriptor."""
    mass = np.abs(transform.weights).sum(axis=0)
    total = mass.sum()
    if total == 0.0:
        raise ZeroWeights("all transform weights are zero")
    return RelevanceReport(values=mass / total)
