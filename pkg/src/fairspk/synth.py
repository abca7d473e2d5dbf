"""Seeded synthetic speaker embeddings with a controllable per-group score skew.

Speaker means are ``mu = sqrt(rho_g) * c_g + sqrt(1 - rho_g) * z`` where
``c_g`` is a fixed per-group direction of length ``group_direction_strength``
and ``z ~ N(0, I/D)``, so ``|z|`` is about 1 in any dimension. Utterances add
``N(0, noise_sigma^2 / D * I)``. The shared direction makes two different
speakers of group g correlate by about ``rho_g``, which lifts that group's
impostor scores.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .data import DatasetSplit, EmbeddingRecord, Group


@dataclass(frozen=True)
class SynthConfig:
    dim: int = 24
    speakers_g1: int = 200
    speakers_g2: int = 200
    utts_per_speaker: int = 20
    rho_g1: float = 0.5
    rho_g2: float = 0.0
    noise_sigma: float = 0.7
    group_direction_strength: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("dim", "speakers_g1", "speakers_g2", "utts_per_speaker"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("rho_g1", "rho_g2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.noise_sigma <= 0:
            raise ValueError("noise_sigma must be positive")
        if self.group_direction_strength < 0:
            raise ValueError("group_direction_strength must be non-negative")

    def replace(self, **changes) -> "SynthConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def group_directions(config: SynthConfig) -> dict[Group, np.ndarray]:
    rng = np.random.default_rng([config.seed, 0])
    return {
        g: config.group_direction_strength * _unit(rng.standard_normal(config.dim))
        for g in (Group.G1, Group.G2)
    }


def generate(config: SynthConfig) -> DatasetSplit:
    """Deterministic per seed; each speaker draws from its own derived stream."""
    dirs = group_directions(config)
    d = config.dim
    records = []
    for gi, (group, rho, n_spk) in enumerate(
        ((Group.G1, config.rho_g1, config.speakers_g1), (Group.G2, config.rho_g2, config.speakers_g2))
    ):
        for k in range(n_spk):
            rng = np.random.default_rng([config.seed, 1, gi, k])
            z = rng.standard_normal(d) / np.sqrt(d)
            mean = np.sqrt(rho) * dirs[group] + np.sqrt(1.0 - rho) * z
            noise = rng.standard_normal((config.utts_per_speaker, d)) * (config.noise_sigma / np.sqrt(d))
            spk = f"{group.value}_spk{k:04d}"
            for j, vec in enumerate(mean + noise):
                records.append(EmbeddingRecord(f"{spk}_utt{j:03d}", spk, group, vec))
    return DatasetSplit(records, d)


def make_scenarios(seed: int = 0) -> dict[str, SynthConfig]:
    """Named presets.

    ``imbalanced-biased`` keeps a 200:78 (about 2.57:1) speaker ratio with the
    smaller group carrying the skew.
    """
    base = SynthConfig(seed=seed)
    return {
        "balanced-unbiased": base.replace(rho_g1=0.3, rho_g2=0.3),
        "balanced-biased": base.replace(rho_g1=0.5, rho_g2=0.0),
        "imbalanced-biased": base.replace(rho_g1=0.5, rho_g2=0.0, speakers_g1=78, speakers_g2=200),
    }


def split_speakers(split: DatasetSplit, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> list[DatasetSplit]:
    """Partition speakers (per group) into disjoint subsets, e.g. train/dev/test."""
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f <= 0 for f in fractions):
        raise ValueError("fractions must be positive and sum to 1")
    rng = np.random.default_rng(seed)
    parts: list[list[str]] = [[] for _ in fractions]
    for group in (Group.G1, Group.G2):
        speakers = sorted(split.group_index.get(group, ()))
        order = rng.permutation(len(speakers))
        bounds = np.round(np.cumsum((0.0,) + tuple(fractions)) * len(speakers)).astype(int)
        for p, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:])):
            parts[p].extend(speakers[i] for i in order[lo:hi])
    return [split.subset_speakers(p) for p in parts]
