import sys
import warnings

import pytest

from cxr_harmon import load_dataset, relabel
from cxr_harmon.fixtures import covariate_arrays, make_corpus


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    return make_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def nih(corpus):
    return load_dataset(corpus["nih"])


@pytest.fixture(scope="session")
def chex(corpus):
    return load_dataset(corpus["chex"])


@pytest.fixture(scope="session")
def pc(corpus):
    return load_dataset(corpus["pc"])


@pytest.fixture(scope="session")
def three(nih, chex, pc):
    """The three fixture datasets relabelled to the union of their pathologies."""
    names = []
    for ds in (nih, chex, pc):
        names += [p for p in ds.pathologies if p not in names]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return [relabel(ds, names) for ds in (nih, chex, pc)]


@pytest.fixture(scope="session")
def cov_sources():
    return covariate_arrays(seed=0, per_cell=20)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
