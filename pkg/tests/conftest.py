import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fairspk.data import DatasetSplit, EmbeddingRecord, Group  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_split():
    """2 speakers per group, 2 utterances each, D=3."""
    rng = np.random.default_rng(5)
    recs = []
    for g in (Group.G1, Group.G2):
        for k in range(2):
            for j in range(2):
                recs.append(EmbeddingRecord(f"{g.value}s{k}u{j}", f"{g.value}s{k}", g, rng.standard_normal(3)))
    return DatasetSplit(recs)


def pytest_terminal_summary(terminalreporter):
    import acceptance_report

    if acceptance_report.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_report.lines():
            terminalreporter.write_line(line)
