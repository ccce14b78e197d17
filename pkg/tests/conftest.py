import numpy as np
import pytest

from pivottree import _kernels_py
from pivottree.data import LabeledDataset
from pivottree.tree import PivotTreeModel, Role

try:
    from pivottree import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

BACKENDS = [_kernels_py] + ([_kernels_c] if _kernels_c is not None else [])

# Every model built anywhere in the suite (fitted or loaded) passes this guard.
PIVOT_BOUND_LOG = {"models": 0, "violations": []}
ACCEPTANCE_LINES = []


def check_pivot_bound(model):
    n_split = sum(1 for p in model.all_pivots if Role.USED_IN_SPLIT in p.roles)
    bound = 2 ** model.hyperparams.max_depth - 1
    PIVOT_BOUND_LOG["models"] += 1
    if n_split > bound:
        PIVOT_BOUND_LOG["violations"].append((n_split, bound))
    assert n_split <= bound, f"{n_split} splitting pivots exceed the 2^depth-1 = {bound} bound"


_original_post_init = PivotTreeModel.__post_init__


def _guarded_post_init(self):
    _original_post_init(self)
    check_pivot_bound(self)


@pytest.fixture(autouse=True)
def _pivot_bound_guard(monkeypatch):
    monkeypatch.setattr(PivotTreeModel, "__post_init__", _guarded_post_init)
    yield


def pytest_terminal_summary(terminalreporter):
    n, bad = PIVOT_BOUND_LOG["models"], len(PIVOT_BOUND_LOG["violations"])
    lines = list(ACCEPTANCE_LINES)
    if n:
        lines.append(f"{'PASS' if bad == 0 else 'FAIL'}  pivot-count bound (whole suite): "
                     f"{n} models built, {bad} exceed 2^max_depth - 1")
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)


@pytest.fixture(params=BACKENDS, ids=lambda b: b.BACKEND)
def backend(request):
    return request.param


@pytest.fixture
def blobs8():
    """Two well separated 2-D blobs, four points each."""
    X = np.array([[0.0, 0.0], [0.5, 0.2], [0.3, 0.9], [0.1, 0.4],
                  [5.0, 5.0], [5.5, 4.8], [4.7, 5.3], [5.2, 5.9]])
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    return LabeledDataset(X, y, class_names=("benign", "malignant"))


@pytest.fixture
def three_class():
    rng = np.random.default_rng(7)
    centers = np.array([[0.0, 0.0, 0.0], [4.0, 0.0, 1.0], [0.0, 4.0, -1.0]])
    X = np.vstack([c + rng.normal(scale=1.0, size=(20, 3)) for c in centers])
    y = np.repeat([0, 1, 2], 20)
    return LabeledDataset(X, y, class_names=("neoplastic", "aphthous", "traumatic"))
