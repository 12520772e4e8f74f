import numpy as np
import pytest

from rankuq.model import Dataset, StackedParams


def random_dataset(rng: np.random.Generator, M: int, d: int, L: int, scale: float = 1.0) -> Dataset:
    left = rng.integers(0, M, L)
    right = (left + rng.integers(1, M, L)) % M
    X = rng.normal(size=(L, d))
    y = rng.integers(0, 2, L).astype(float)
    return Dataset(left, right, X, y, [f"m{k}" for k in range(M)])


def random_params(rng: np.random.Generator, M: int, d: int, scale: float = 1.0) -> StackedParams:
    return StackedParams(rng.normal(scale=scale, size=M), rng.normal(scale=scale, size=(M, d))).normalized()


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


# one line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
