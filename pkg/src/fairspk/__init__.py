"""Fairness and utility evaluation for embedding-based speaker verification."""

from importlib.metadata import PackageNotFoundError, version

from .data import DataError, DatasetSplit, EmbeddingRecord, Group, Label, ScoredTrial, Trial
from .kernels import BACKEND

try:
    __version__ = version("fairspk")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DataError",
    "DatasetSplit",
    "EmbeddingRecord",
    "Group",
    "Label",
    "ScoredTrial",
    "Trial",
    "__version__",
]
