import numpy as np
import pytest

from dsvrgda.data import Dataset, SparseSample, dump_libsvm
from dsvrgda.problems import generate_pl_game

_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, passed, detail)``."""
    def _record(number, passed, detail=""):
        _CRITERIA.setdefault(number, []).append((request.node.name, bool(passed), detail))
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        for name, passed, detail in _CRITERIA[number]:
            status = "PASS" if passed else "FAIL"
            terminalreporter.write_line(f"criterion {number:>2} {status}  {name}  {detail}")


def make_toy_dataset(N=1000, d=8, seed=0, pos_frac=0.3):
    """Two-class Gaussian toy data with a class-dependent mean shift and
    some zeroed-out features."""
    rng = np.random.default_rng(seed)
    labels = np.where(rng.random(N) < pos_frac, 1, -1)
    shift = np.linspace(1.0, -0.5, d) * 0.6
    X = rng.standard_normal((N, d)) + np.outer(labels == 1, shift)
    X[rng.random((N, d)) < 0.3] = 0.0
    samples = [SparseSample(tuple((j, float(X[i, j])) for j in range(d) if X[i, j] != 0.0),
                            int(labels[i])) for i in range(N)]
    return Dataset(tuple(samples), d)


@pytest.fixture(scope="session")
def toy_libsvm(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "toy.svm"
    path.write_text(dump_libsvm(make_toy_dataset()))
    return path


@pytest.fixture(scope="session")
def small_game():
    return generate_pl_game(K=4, n=16, d=5, rank=3, seed=11).attach_saddle()
