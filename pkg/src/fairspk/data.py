"""Embedding records, trial lists and their CSV formats."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class Group(str, enum.Enum):
    G1 = "g1"
    G2 = "g2"
    CROSS = "cross"


class Label(str, enum.Enum):
    GENUINE = "genuine"
    IMPOSTOR = "impostor"


def _parse_group(value: str, line: int | None = None) -> Group:
    try:
        group = Group(value.strip().lower())
    except ValueError:
        raise DataError(f"unknown group {value!r}", line) from None
    if group is Group.CROSS:
        raise DataError("an utterance cannot belong to the cross group", line)
    return group


@dataclass(frozen=True)
class EmbeddingRecord:
    utt_id: str
    speaker_id: str
    group: Group
    vector: np.ndarray = field(repr=False)

    def __post_init__(self):
        vec = np.array(self.vector, dtype=np.float64).reshape(-1)
        if vec.size < 1:
            raise DataError(f"{self.utt_id}: empty embedding")
        if not np.all(np.isfinite(vec)):
            raise DataError(f"{self.utt_id}: non-finite embedding value")
        vec.flags.writeable = False
        object.__setattr__(self, "vector", vec)
        object.__setattr__(self, "group", Group(self.group))


@dataclass(frozen=True)
class Trial:
    enrol_utt: str
    test_utt: str
    label: Label
    group_tag: Group


@dataclass(frozen=True)
class ScoredTrial:
    trial: Trial
    score: float


class DatasetSplit:
    """An immutable collection of embedding records with speaker/group indices.

    Vectors are stacked into one read-only ``(n, dim)`` matrix so that
    scoring and training can index rows directly.
    """

    def __init__(self, records: Iterable[EmbeddingRecord], dim: int | None = None):
        records = tuple(records)
        dims = {r.vector.size for r in records}
        if len(dims) > 1:
            raise DataError(f"inconsistent embedding dimensions {sorted(dims)}")
        if records:
            dim = dims.pop()
        if dim is None:
            raise DataError("dimension of an empty split must be given")
        self.dim = int(dim)

        self.utt_ids: tuple[str, ...] = tuple(r.utt_id for r in records)
        self.speaker_ids: tuple[str, ...] = tuple(r.speaker_id for r in records)
        self.groups: tuple[Group, ...] = tuple(r.group for r in records)
        self._row: dict[str, int] = {}
        for i, utt in enumerate(self.utt_ids):
            if utt in self._row:
                raise DataError(f"duplicate utt_id {utt!r}")
            self._row[utt] = i

        speaker_index: dict[str, list[str]] = {}
        speaker_group: dict[str, Group] = {}
        for r in records:
            speaker_index.setdefault(r.speaker_id, []).append(r.utt_id)
            if speaker_group.setdefault(r.speaker_id, r.group) is not r.group:
                raise DataError(f"speaker {r.speaker_id!r} appears in both groups")
        self.speaker_index = {k: tuple(v) for k, v in speaker_index.items()}
        self.speaker_group = speaker_group
        group_index: dict[Group, list[str]] = {Group.G1: [], Group.G2: []}
        for spk, grp in speaker_group.items():
            group_index[grp].append(spk)
        self.group_index = {k: tuple(v) for k, v in group_index.items()}

        if records:
            matrix = np.vstack([r.vector for r in records])
        else:
            matrix = np.zeros((0, self.dim))
        matrix.flags.writeable = False
        self.vectors = matrix
        self._records = records

    @property
    def records(self) -> tuple[EmbeddingRecord, ...]:
        return self._records

    def __len__(self) -> int:
        return len(self._records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DatasetSplit):
            return NotImplemented
        return (
            self.utt_ids == other.utt_ids
            and self.speaker_ids == other.speaker_ids
            and self.groups == other.groups
            and self.dim == other.dim
            and np.array_equal(self.vectors, other.vectors)
        )

    def row(self, utt_id: str) -> int:
        try:
            return self._row[utt_id]
        except KeyError:
            raise DataError(f"unknown utt_id {utt_id!r}") from None

    def vector(self, utt_id: str) -> np.ndarray:
        return self.vectors[self.row(utt_id)]

    def subset_speakers(self, speakers: Iterable[str]) -> "DatasetSplit":
        keep = set(speakers)
        return DatasetSplit([r for r in self._records if r.speaker_id in keep], self.dim)

    def with_vectors(self, vectors: np.ndarray) -> "DatasetSplit":
        """Same ids and labels, new embedding matrix (e.g. a transformed space)."""
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(self):
            raise DataError(f"expected {len(self)} rows, got shape {vectors.shape}")
        recs = [
            EmbeddingRecord(r.utt_id, r.speaker_id, r.group, v)
            for r, v in zip(self._records, vectors)
        ]
        return DatasetSplit(recs, vectors.shape[1])


def _fmt17(x: float) -> str:
    return format(float(x), ".17g")


def load_embeddings(path: str | Path) -> DatasetSplit:
    path = Path(path)
    records = []
    seen: dict[str, int] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file (missing header)", 1) from None
        if header[:3] != ["utt_id", "speaker_id", "group"]:
            raise DataError("header must start with utt_id,speaker_id,group", 1)
        dim = len(header) - 3
        expected = [f"e{i}" for i in range(dim)]
        if dim < 1 or header[3:] != expected:
            raise DataError("embedding columns must be e0..e{D-1} with D >= 1", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 3:
                raise DataError(f"expected {dim} embedding values, got {len(row) - 3}", lineno)
            utt, spk, grp = row[0], row[1], row[2]
            if not utt or not spk:
                raise DataError("empty utt_id or speaker_id", lineno)
            if utt in seen:
                raise DataError(f"duplicate utt_id {utt!r} (first on line {seen[utt]})", lineno)
            seen[utt] = lineno
            try:
                vec = np.array([float(v) for v in row[3:]], dtype=np.float64)
            except ValueError:
                raise DataError("non-numeric embedding value", lineno) from None
            if not np.all(np.isfinite(vec)):
                raise DataError("non-finite embedding value", lineno)
            records.append(EmbeddingRecord(utt, spk, _parse_group(grp, lineno), vec))
    try:
        return DatasetSplit(records, dim)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def save_embeddings(split: DatasetSplit, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["utt_id", "speaker_id", "group"] + [f"e{i}" for i in range(split.dim)])
        for utt, spk, grp, vec in zip(split.utt_ids, split.speaker_ids, split.groups, split.vectors):
            writer.writerow([utt, spk, grp.value] + [_fmt17(v) for v in vec])


# --------------------------------------------------------------------------- trials

def _unordered_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(n, k=1)
    return i, j


def _sample_rows(n_total: int, k: int, rng: np.random.Generator) -> np.ndarray:
    if n_total <= k:
        return np.arange(n_total)
    return np.sort(rng.choice(n_total, size=k, replace=False))


_ENUMERATION_LIMIT = 4_000_000


def _impostor_pairs(spk_codes: np.ndarray, k: int, rng: np.random.Generator):
    n = spk_codes.size
    n_all = n * (n - 1) // 2
    if n_all <= _ENUMERATION_LIMIT:
        i, j = _unordered_pairs(n)
        mask = spk_codes[i] != spk_codes[j]
        i, j = i[mask], j[mask]
        keep = _sample_rows(i.size, k, rng)
        return i[keep], j[keep]
    # too many to enumerate: rejection-sample distinct unordered pairs
    chosen: set[tuple[int, int]] = set()
    while len(chosen) < k:
        a = rng.integers(0, n, size=2 * k)
        b = rng.integers(0, n, size=2 * k)
        for x, y in zip(a.tolist(), b.tolist()):
            if spk_codes[x] == spk_codes[y]:
                continue
            pair = (x, y) if x < y else (y, x)
            chosen.add(pair)
            if len(chosen) == k:
                break
    pairs = np.array(sorted(chosen))
    return pairs[:, 0], pairs[:, 1]


def generate_trials(split: DatasetSplit, max_per_category: int, seed: int) -> list[Trial]:
    """Same-group genuine and impostor trials, at most ``max_per_category`` per cell.

    Pairs are unordered and never pair an utterance with itself. Cross-group
    pairs are never produced. Cells are emitted in the order
    (g1 genuine, g1 impostor, g2 genuine, g2 impostor).
    """
    if max_per_category < 1:
        raise ValueError("max_per_category must be >= 1")
    rng = np.random.default_rng(seed)
    trials: list[Trial] = []
    for group in (Group.G1, Group.G2):
        speakers = split.group_index.get(group, ())
        utts = [u for spk in speakers for u in split.speaker_index[spk]]
        codes = np.array([k for k, spk in enumerate(speakers) for _ in split.speaker_index[spk]])

        gen_i, gen_j = [], []
        offset = 0
        for spk in speakers:
            n_utt = len(split.speaker_index[spk])
            a, b = _unordered_pairs(n_utt)
            gen_i.append(a + offset)
            gen_j.append(b + offset)
            offset += n_utt
        gen_i = np.concatenate(gen_i) if gen_i else np.zeros(0, dtype=int)
        gen_j = np.concatenate(gen_j) if gen_j else np.zeros(0, dtype=int)
        if gen_i.size == 0:
            raise DataError(f"group {group.value}: no speaker has two utterances for genuine trials")
        if len(speakers) < 2:
            raise DataError(f"group {group.value}: need at least two speakers for impostor trials")

        keep = _sample_rows(gen_i.size, max_per_category, rng)
        for a, b in zip(gen_i[keep].tolist(), gen_j[keep].tolist()):
            trials.append(Trial(utts[a], utts[b], Label.GENUINE, group))
        imp_i, imp_j = _impostor_pairs(codes, max_per_category, rng)
        for a, b in zip(imp_i.tolist(), imp_j.tolist()):
            trials.append(Trial(utts[a], utts[b], Label.IMPOSTOR, group))
    return trials


def trial_group_tag(split: DatasetSplit, enrol: str, test: str) -> Group:
    ga, gb = split.groups[split.row(enrol)], split.groups[split.row(test)]
    return ga if ga is gb else Group.CROSS


# --------------------------------------------------------------------------- trial / score CSV

TRIAL_HEADER = ["enrol_utt", "test_utt", "label", "group_tag"]


def _parse_trial(row: Sequence[str], lineno: int) -> Trial:
    try:
        label = Label(row[2].strip().lower())
    except ValueError:
        raise DataError(f"unknown label {row[2]!r}", lineno) from None
    try:
        tag = Group(row[3].strip().lower())
    except ValueError:
        raise DataError(f"unknown group_tag {row[3]!r}", lineno) from None
    return Trial(row[0], row[1], label, tag)


def save_trials(trials: Iterable[Trial], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRIAL_HEADER)
        for t in trials:
            writer.writerow([t.enrol_utt, t.test_utt, t.label.value, t.group_tag.value])


def load_trials(path: str | Path) -> list[Trial]:
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != TRIAL_HEADER:
            raise DataError("header must be " + ",".join(TRIAL_HEADER), 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"expected 4 columns, got {len(row)}", lineno)
            out.append(_parse_trial(row, lineno))
    return out


def save_scores(scored: Iterable[ScoredTrial], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRIAL_HEADER + ["score"])
        for st in scored:
            t = st.trial
            writer.writerow(
                [t.enrol_utt, t.test_utt, t.label.value, t.group_tag.value, _fmt17(st.score)]
            )


def load_scores(path: str | Path) -> list[ScoredTrial]:
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header != TRIAL_HEADER + ["score"]:
            raise DataError("header must be " + ",".join(TRIAL_HEADER + ["score"]), 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise DataError(f"expected 5 columns, got {len(row)}", lineno)
            trial = _parse_trial(row, lineno)
            try:
                score = float(row[4])
            except ValueError:
                raise DataError(f"non-numeric score {row[4]!r}", lineno) from None
            if not math.isfinite(score):
                raise DataError("non-finite score", lineno)
            out.append(ScoredTrial(trial, score))
    return out
