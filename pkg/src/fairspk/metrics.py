"""Threshold-sweep error rates, EER, FaDR and the area under the FaDR-FAR curve.

A trial is accepted iff its score is >= the threshold. Operating points are
set on the pooled (group-agnostic) impostor scores and the same threshold is
then applied to each group separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .scoring import ScorePartition

#: 1% .. 10% inclusive in 0.25% steps (37 points)
DEFAULT_FAR_GRID = np.linspace(1.0, 10.0, 37)
DEFAULT_OMEGAS = (1.0, 0.75, 0.5, 0.25, 0.0)


@dataclass(frozen=True)
class OperatingPoint:
    tau: float
    pooled_far: float


@dataclass(frozen=True)
class GroupErrorRates:
    far_g1: float
    far_g2: float
    frr_g1: float
    frr_g2: float

    def swapped(self) -> "GroupErrorRates":
        return GroupErrorRates(self.far_g2, self.far_g1, self.frr_g2, self.frr_g1)


@dataclass(frozen=True)
class FadrParams:
    omega: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError(f"omega must lie in [0, 1], got {self.omega}")


@dataclass(frozen=True)
class FadrCurve:
    """FaDR (percent) at each grid FAR (percent); ``taus`` are the thresholds used."""

    far_percent: np.ndarray
    fadr_percent: np.ndarray
    taus: np.ndarray
    achieved_far: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.far_percent, self.fadr_percent])


@dataclass(frozen=True)
class GroupCurves:
    far_percent: np.ndarray
    far_g1: np.ndarray
    far_g2: np.ndarray
    frr_g1: np.ndarray
    frr_g2: np.ndarray


def _nonempty(scores, what: str) -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise ValueError(f"{what} scores are empty")
    return arr


def far_at(impostor_scores, tau: float) -> float:
    s = _nonempty(impostor_scores, "impostor")
    return float(np.count_nonzero(s >= tau) / s.size)


def frr_at(genuine_scores, tau: float) -> float:
    s = _nonempty(genuine_scores, "genuine")
    return float(np.count_nonzero(s < tau) / s.size)


def _max_count_within(targets: np.ndarray, n: int) -> np.ndarray:
    """Largest integer k with k / n <= target, using the same float comparison as far_at."""
    k = np.floor(targets * n).astype(np.int64)
    k = np.where((k + 1) / n <= targets, k + 1, k)
    k = np.where(k / n > targets, k - 1, k)
    return np.clip(k, 0, n)


def thresholds_from_top(top_sorted: np.ndarray, n: int, targets) -> np.ndarray:
    """Smallest pooled-impostor score (or +inf) whose FAR does not exceed each target.

    ``top_sorted`` holds the largest ``m`` of the ``n`` pooled impostor scores in
    ascending order; ``m`` must exceed the largest admissible count, so the full
    sorted array always works.
    """
    targets = np.asarray(targets, dtype=np.float64)
    k = _max_count_within(targets, n)
    m = top_sorted.size
    if m < n and np.any(k >= m):
        raise ValueError("top segment too short for the requested FAR")
    taus = np.full(targets.shape, np.inf)
    for idx, kk in np.ndenumerate(k):
        if kk == 0:
            continue
        j = m - kk  # position of the kk-th largest score
        v = top_sorted[j]
        if j > 0 and top_sorted[j - 1] == v:
            # ties straddle the cut: move to the next distinct value up
            nxt = np.searchsorted(top_sorted, v, side="right")
            v = top_sorted[nxt] if nxt < m else np.inf
        taus[idx] = v
    return taus


def threshold_for_pooled_far(partition: ScorePartition, target_far: float) -> OperatingPoint:
    if not 0.0 < target_far <= 1.0:
        raise ValueError(f"target FAR must lie in (0, 1], got {target_far}")
    pooled = _nonempty(partition.pooled_impostor, "pooled impostor")
    tau = float(thresholds_from_top(pooled, pooled.size, [target_far])[0])
    return OperatingPoint(tau, far_at(pooled, tau))


def group_rates(partition: ScorePartition, tau: float) -> GroupErrorRates:
    return GroupErrorRates(
        far_at(partition.impostor_g1, tau),
        far_at(partition.impostor_g2, tau),
        frr_at(partition.genuine_g1, tau),
        frr_at(partition.genuine_g2, tau),
    )


def fadr(rates: GroupErrorRates, params: FadrParams) -> float:
    w = params.omega
    return 1.0 - (w * abs(rates.far_g1 - rates.far_g2) + (1.0 - w) * abs(rates.frr_g1 - rates.frr_g2))


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    if grid.size == 0:
        raise ValueError("FAR grid is empty")
    if np.any(grid <= 0.0) or np.any(grid > 100.0):
        raise ValueError("FAR grid values must lie in (0, 100]")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("FAR grid must be strictly increasing")
    return grid


def _counts_at_or_above(scores: np.ndarray, taus: np.ndarray) -> np.ndarray:
    order = np.argsort(taus, kind="stable")
    counts = np.empty(taus.size, dtype=np.int64)
    counts[order] = kernels.count_at_or_above(scores, taus[order])
    return counts


def _rates_at(arrays, taus: np.ndarray):
    """(far_g1, far_g2, frr_g1, frr_g2) arrays for every threshold in ``taus``."""
    gen1, gen2, imp1, imp2 = arrays
    out = []
    for arr, genuine in ((imp1, False), (imp2, False), (gen1, True), (gen2, True)):
        n = arr.size
        above = _counts_at_or_above(arr, taus)
        out.append((n - above) / n if genuine else above / n)
    return out


def _curve_arrays(arrays, pooled_top, n_pooled, grid):
    taus = thresholds_from_top(pooled_top, n_pooled, grid / 100.0)
    return taus, _rates_at(arrays, taus)


def _partition_arrays(partition: ScorePartition):
    arrays = (partition.genuine_g1, partition.genuine_g2, partition.impostor_g1, partition.impostor_g2)
    for arr, name in zip(arrays, ("genuine g1", "genuine g2", "impostor g1", "impostor g2")):
        _nonempty(arr, name)
    return arrays


def fadr_curve(partition: ScorePartition, params: FadrParams, far_grid_percent=DEFAULT_FAR_GRID) -> FadrCurve:
    grid = _check_grid(far_grid_percent)
    arrays = _partition_arrays(partition)
    pooled = partition.pooled_impostor
    taus, (far1, far2, frr1, frr2) = _curve_arrays(arrays, pooled, pooled.size, grid)
    w = params.omega
    values = 1.0 - (w * np.abs(far1 - far2) + (1.0 - w) * np.abs(frr1 - frr2))
    achieved = _counts_at_or_above(pooled, taus) / pooled.size
    return FadrCurve(grid, 100.0 * values, taus, achieved)


def trapezoid(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def au_fadr(curve: FadrCurve) -> float:
    if curve.far_percent.size < 2:
        raise ValueError("area needs at least two curve points")
    return trapezoid(curve.far_percent, curve.fadr_percent)


def eer(genuine_scores, impostor_scores) -> tuple[float, float]:
    """Equal error rate and its threshold, as the midpoint of FAR and FRR."""
    gen = np.sort(_nonempty(genuine_scores, "genuine"), kind="stable")
    imp = np.sort(_nonempty(impostor_scores, "impostor"), kind="stable")
    return kernels.eer_sweep(gen, imp)


def group_error_curves(partition: ScorePartition, far_grid_percent=DEFAULT_FAR_GRID) -> GroupCurves:
    """Raw per-group FAR and FRR (percent) at each pooled-FAR operating point."""
    grid = _check_grid(far_grid_percent)
    arrays = _partition_arrays(partition)
    pooled = partition.pooled_impostor
    _, (far1, far2, frr1, frr2) = _curve_arrays(arrays, pooled, pooled.size, grid)
    return GroupCurves(grid, 100.0 * far1, 100.0 * far2, 100.0 * frr1, 100.0 * frr2)


def au_fadr_from_arrays(scores, genuine, groups, omega: float, grid=DEFAULT_FAR_GRID) -> float:
    """auFaDR straight from parallel per-trial arrays, without building a partition.

    Only the top of the pooled impostor distribution is sorted, which keeps
    repeated evaluation (permutation tests) linear in the trial count.
    """
    grid = _check_grid(grid)
    scores = np.asarray(scores, dtype=np.float64)
    arrays = (
        scores[genuine & (groups == 0)],
        scores[genuine & (groups == 1)],
        scores[~genuine & (groups == 0)],
        scores[~genuine & (groups == 1)],
    )
    for arr in arrays:
        _nonempty(arr, "per-group")
    pooled = scores[~genuine]
    n = pooled.size
    m = min(n, int(_max_count_within(np.array([grid[-1] / 100.0]), n)[0]) + 2)
    top = np.sort(np.partition(pooled, n - m)[n - m:]) if m < n else np.sort(pooled)
    _, (far1, far2, frr1, frr2) = _curve_arrays(arrays, top, n, grid)
    values = 100.0 * (1.0 - (omega * np.abs(far1 - far2) + (1.0 - omega) * np.abs(frr1 - frr2)))
    return trapezoid(grid, values)
