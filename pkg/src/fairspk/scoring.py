"""Cosine scoring of trials and per-group score partitions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import DataError, DatasetSplit, Group, Label, ScoredTrial, Trial


def cosine_score(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine score of a zero-norm vector is undefined")
    return float(np.clip(np.dot(a / na, b / nb), -1.0, 1.0))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cosine score of a zero-norm vector is undefined")
    return x / norms


def score_trials(split: DatasetSplit, trials: Sequence[Trial]) -> list[ScoredTrial]:
    """Score every trial with the cosine of its two embeddings, order preserved."""
    if not trials:
        return []
    enrol = np.array([split.row(t.enrol_utt) for t in trials])
    test = np.array([split.row(t.test_utt) for t in trials])
    used = np.unique(np.concatenate([enrol, test]))
    unit = np.zeros_like(split.vectors)
    unit[used] = _unit_rows(split.vectors[used])
    scores = np.clip(np.einsum("ij,ij->i", unit[enrol], unit[test]), -1.0, 1.0)
    return [ScoredTrial(t, float(s)) for t, s in zip(trials, scores)]


@dataclass(frozen=True)
class ScorePartition:
    genuine_g1: np.ndarray
    genuine_g2: np.ndarray
    impostor_g1: np.ndarray
    impostor_g2: np.ndarray

    def __post_init__(self):
        for name in ("genuine_g1", "genuine_g2", "impostor_g1", "impostor_g2"):
            arr = np.sort(np.asarray(getattr(self, name), dtype=np.float64), kind="stable")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def pooled_genuine(self) -> np.ndarray:
        return np.sort(np.concatenate([self.genuine_g1, self.genuine_g2]), kind="stable")

    @property
    def pooled_impostor(self) -> np.ndarray:
        return np.sort(np.concatenate([self.impostor_g1, self.impostor_g2]), kind="stable")

    @classmethod
    def from_arrays(cls, scores, labels, groups) -> "ScorePartition":
        """Build from parallel arrays: ``labels`` true for genuine, ``groups`` 0/1 for g1/g2."""
        scores = np.asarray(scores, dtype=np.float64)
        labels = np.asarray(labels, dtype=bool)
        groups = np.asarray(groups)
        return cls(
            scores[labels & (groups == 0)],
            scores[labels & (groups == 1)],
            scores[~labels & (groups == 0)],
            scores[~labels & (groups == 1)],
        )


def trial_codes(scored: Sequence[ScoredTrial]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parallel (scores, is_genuine, group 0/1) arrays; rejects cross trials."""
    scores = np.empty(len(scored))
    genuine = np.empty(len(scored), dtype=bool)
    groups = np.empty(len(scored), dtype=np.int8)
    for i, st in enumerate(scored):
        tag = st.trial.group_tag
        if tag is Group.CROSS:
            raise DataError(f"cross-group trial {st.trial.enrol_utt}/{st.trial.test_utt} not allowed")
        scores[i] = st.score
        genuine[i] = st.trial.label is Label.GENUINE
        groups[i] = 0 if tag is Group.G1 else 1
    return scores, genuine, groups


def partition_scores(scored: Sequence[ScoredTrial]) -> ScorePartition:
    return ScorePartition.from_arrays(*trial_codes(scored))
