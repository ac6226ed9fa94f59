import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from plastisort.synthgen import SynthSpec, generate_dataset  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """16 pieces per class plus a few trays."""
    root = tmp_path_factory.mktemp("small")
    generate_dataset(SynthSpec(images_per_class=16, trays=6, seed=11), root)
    return root


ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture(scope="session")
def record_criterion():
    """Record one acceptance line: ``record_criterion(n, ok, detail)``."""

    def record(n: int, ok: bool, detail: str):
        ACCEPTANCE.append((n, ok, detail))
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
