import numpy as np
import pytest

from dpboost.data import LabelScale, make_synthetic

# (criterion, passed, detail) lines filled in by test_acceptance.py
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda r: int(r[0].split()[0])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {name}: {detail}")


@pytest.fixture
def write_file(tmp_path):
    def _write(text: str, name: str = "data.svm"):
        p = tmp_path / name
        p.write_text(text)
        return p

    return _write


def split_80_20(X, y):
    cut = int(0.8 * len(y))
    return X[:cut], y[:cut], X[cut:], y[cut:]


@pytest.fixture(scope="session")
def reg_data():
    X, y = make_synthetic("regression", seed=0)
    Xtr, ytr, Xte, yte = split_80_20(X, y)
    scale = LabelScale.fit(ytr)
    return Xtr, scale.transform(ytr), Xte, yte, scale


@pytest.fixture(scope="session")
def small_cls():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(300, 4))
    y = np.where(X[:, 0] + 0.5 * X[:, 1] > 0, 1.0, -1.0)
    return X, y
