import sys

import numpy as np
import pytest

from crabun import CaptureDataset, ModelSpec, load_packaged

H_FAMILIES = ("Mh", "Mht", "Mhb", "Mhtb")


def random_dataset(rng, n, K, q=1, p_capture=None):
    """n observed individuals with at least one capture each, q normal covariates."""
    p = rng.uniform(0.2, 0.6) if p_capture is None else p_capture
    d = (rng.random((n, K)) < p).astype(np.int8)
    for i in np.flatnonzero(d.sum(axis=1) == 0):
        d[i, rng.integers(K)] = 1
    x = rng.standard_normal((n, q))
    return CaptureDataset(d, x, tuple(f"x{j + 1}" for j in range(q)))


def h_model(family, data):
    return ModelSpec(family, data.covariate_names)


@pytest.fixture(scope="session")
def synthetic():
    return load_packaged("synthetic_mhb.csv")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        terminalreporter.write_line(lines[k])
