import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from freqseg import RunConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_cfg():
    """Smallest full model with an 8x8 feature grid: 32x32 input, patch 4, C=16."""
    return RunConfig(image_size=32, patch=4, up_blocks=2, channels=16, adapter_dim=4,
                     distill_hidden=32, batch=4, epochs=2, lr=5e-3)


@pytest.fixture
def tiny_dataset(tmp_path_factory):
    from freqseg.data import generate_dataset
    root = tmp_path_factory.mktemp("tiny")
    return generate_dataset(root, 10, size=32, seed=3)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    def record(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
