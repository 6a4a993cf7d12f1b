import numpy as np
import pytest

from fpl.data import Dataset, generate_synthetic, temporal_split


def make_dataset(train, test=None, num_items=None, validation=None):
    """Dataset from per-user lists of item indices (timestamps follow list order)."""
    if test is None:
        test = [[] for _ in train]
    if num_items is None:
        num_items = 1 + max(i for side in (train, test) for recs in side for i in recs)

    def side(lists, offset):
        return tuple(tuple((int(i), offset + k) for k, i in enumerate(recs)) for recs in lists)

    return Dataset(
        tuple(f"u{u}" for u in range(len(train))),
        tuple(f"i{i}" for i in range(num_items)),
        side(train, 0),
        side(test, 10_000),
        None if validation is None else side(validation, 5_000),
    )


@pytest.fixture
def small_synthetic():
    return temporal_split(generate_synthetic(50, 80, 4, 0.1, 1.0, seed=11), 0.8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, name: str, ok: bool, detail: str) -> bool:
    """Log one acceptance verdict; the line is repeated in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {name} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
