"""Paired permutation tests between two scoring systems, and score-density analysis."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import metrics
from .data import DataError, ScoredTrial
from .metrics import DEFAULT_FAR_GRID, FadrParams
from .scoring import trial_codes


@dataclass(frozen=True)
class PermTestReport:
    statistic: str
    observed_stat: float
    null_stats: np.ndarray = field(repr=False)
    p_value: float
    n_permutations: int
    seed: int
    n_trials: int

    def to_json(self) -> dict:
        return {
            "statistic": self.statistic,
            "observed": self.observed_stat,
            "p": self.p_value,
            "n": self.n_permutations,
            "seed": self.seed,
            "n_trials": self.n_trials,
        }


def _aligned_arrays(scores_a: Sequence[ScoredTrial], scores_b: Sequence[ScoredTrial]):
    if len(scores_a) != len(scores_b):
        raise DataError(f"misaligned systems: {len(scores_a)} vs {len(scores_b)} trials")
    for i, (sa, sb) in enumerate(zip(scores_a, scores_b)):
        if sa.trial != sb.trial:
            raise DataError(f"misaligned systems at trial {i}: {sa.trial} vs {sb.trial}")
    a, genuine, groups = trial_codes(scores_a)
    b = np.array([st.score for st in scores_b], dtype=np.float64)
    return a, b, genuine, groups


def swap_mask(seed: int, index: int, size: int) -> np.ndarray:
    """Per-trial exchange pattern of permutation ``index``; independent of run order."""
    return np.random.default_rng([seed, index]).random(size) < 0.5


def p_value(observed: float, null_stats: np.ndarray) -> float:
    """Two-sided permutation p-value with add-one smoothing."""
    null_stats = np.asarray(null_stats)
    extreme = np.count_nonzero(np.abs(null_stats) >= abs(observed))
    return (1 + extreme) / (null_stats.size + 1)


def _run(statistic, a, b, n: int, seed: int):
    if n < 1:
        raise ValueError("need at least one permutation")
    observed = statistic(a, b)
    null = np.empty(n)
    for i in range(n):
        mask = swap_mask(seed, i, a.size)
        null[i] = statistic(np.where(mask, b, a), np.where(mask, a, b))
    return observed, null


def perm_test_aufadr(
    scores_a: Sequence[ScoredTrial],
    scores_b: Sequence[ScoredTrial],
    params: FadrParams = FadrParams(1.0),
    far_grid=DEFAULT_FAR_GRID,
    n: int = 10_000,
    subsample: int = 100_000,
    seed: int = 0,
) -> PermTestReport:
    """Test auFaDR(B) - auFaDR(A) on a seeded subsample of the shared trial list."""
    a, b, genuine, groups = _aligned_arrays(scores_a, scores_b)
    if a.size > subsample:
        keep = np.sort(np.random.default_rng(seed).choice(a.size, size=subsample, replace=False))
        a, b, genuine, groups = a[keep], b[keep], genuine[keep], groups[keep]
    omega = params.omega

    def statistic(x, y):
        return (
            metrics.au_fadr_from_arrays(y, genuine, groups, omega, far_grid)
            - metrics.au_fadr_from_arrays(x, genuine, groups, omega, far_grid)
        )

    observed, null = _run(statistic, a, b, n, seed)
    return PermTestReport("aufadr", observed, null, p_value(observed, null), n, seed, int(a.size))


def perm_test_eer(
    scores_a: Sequence[ScoredTrial],
    scores_b: Sequence[ScoredTrial],
    n: int = 10_000,
    seed: int = 0,
) -> PermTestReport:
    """Test EER(B) - EER(A) over all trials."""
    a, b, genuine, _ = _aligned_arrays(scores_a, scores_b)
    if genuine.all() or not genuine.any():
        raise DataError("EER needs both genuine and impostor trials")

    def statistic(x, y):
        return metrics.eer(y[genuine], y[~genuine])[0] - metrics.eer(x[genuine], x[~genuine])[0]

    observed, null = _run(statistic, a, b, n, seed)
    return PermTestReport("eer", observed, null, p_value(observed, null), n, seed, int(a.size))


# --------------------------------------------------------------------------- KDE

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def silverman_bandwidth(x: np.ndarray) -> float:
    sigma = np.std(x, ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    iqr = q75 - q25
    spread = min(sigma, iqr / 1.34) if iqr > 0 else sigma
    return float(0.9 * spread * x.size ** (-0.2))


def _gaussian_kde_eval(samples: np.ndarray, h: float, points: np.ndarray) -> np.ndarray:
    out = np.zeros(points.size)
    chunk = max(1, 2_000_000 // max(points.size, 1))
    for start in range(0, samples.size, chunk):
        z = (points[None, :] - samples[start:start + chunk, None]) / h
        out += np.exp(-0.5 * z * z).sum(axis=0)
    return out / (samples.size * h * _SQRT_2PI)


@dataclass(frozen=True)
class KdeEstimate:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    samples: np.ndarray = field(repr=False)

    def evaluate(self, points) -> np.ndarray:
        return _gaussian_kde_eval(self.samples, self.bandwidth, np.asarray(points, dtype=np.float64))

    def mass(self) -> float:
        return metrics.trapezoid(self.grid, self.density)


def kde(scores, grid_size: int = 512) -> KdeEstimate:
    """Gaussian KDE with a Silverman bandwidth, on a grid spanning 3 bandwidths past the data."""
    x = np.asarray(scores, dtype=np.float64).reshape(-1)
    if x.size < 2:
        raise ValueError("KDE needs at least two scores")
    if np.ptp(x) == 0.0:
        raise ValueError("KDE of constant scores is undefined (zero variance)")
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    h = silverman_bandwidth(x)
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, grid_size)
    return KdeEstimate(grid, _gaussian_kde_eval(x, h, grid), h, x)


def shared_grid(a: KdeEstimate, b: KdeEstimate) -> np.ndarray:
    lo = min(a.grid[0], b.grid[0])
    hi = max(a.grid[-1], b.grid[-1])
    return np.linspace(lo, hi, max(a.grid.size, b.grid.size))


def overlap_percent(a: KdeEstimate, b: KdeEstimate) -> float:
    """Percent of probability mass shared by two densities (integral of their minimum)."""
    grid = shared_grid(a, b)
    fa = a.evaluate(grid)
    fb = b.evaluate(grid)
    return float(np.clip(100.0 * metrics.trapezoid(grid, np.minimum(fa, fb)), 0.0, 100.0))
