import itertools

import mpmath
import numpy as np
import pytest

from crabun.design import (FAMILIES, ModelSpec, build_design, capture_prob, design_arrays,
                           compact_design, enduring_memory, never_capture_prob)


def test_mhb_example():
    dv = build_design(ModelSpec("Mhb", ("x",)), [0.7], [1, 0, 1], 3)
    np.testing.assert_array_equal(dv.z, [[1, 0.7, 0], [1, 0.7, 1], [1, 0.7, 1]])
    np.testing.assert_array_equal(dv.z0, [[1, 0.7, 0]] * 3)


@pytest.mark.parametrize("d", [[0, 0, 0, 1], [1, 1, 0, 0], [1, 0, 1, 1]])
def test_mh_rows_constant(d):
    dv = build_design(ModelSpec("Mh", ("a", "b")), [0.3, -1.0], d, 4)
    np.testing.assert_array_equal(dv.z, [[1, 0.3, -1.0]] * 4)
    np.testing.assert_array_equal(dv.z0, dv.z)


def test_mht_example():
    dv = build_design(ModelSpec("Mht", ("x",)), [0.5], [0, 1], 2)
    np.testing.assert_array_equal(dv.z, [[0.5, 1, 0], [0.5, 0, 1]])


@pytest.mark.parametrize("family, K, dim", [
    ("M0", 5, 1), ("Mt", 5, 5), ("Mb", 5, 2), ("Mtb", 5, 6),
    ("Mh", 5, 3), ("Mht", 5, 7), ("Mhb", 5, 4), ("Mhtb", 5, 8)])
def test_dimensions(family, K, dim):
    cols = ("u", "v") if "h" in family[1:] else ()
    m = ModelSpec(family, cols)
    assert m.dim(K) == dim == len(m.parameter_names(K))


def test_covariate_rules():
    with pytest.raises(ValueError):
        ModelSpec("Mh")
    with pytest.raises(ValueError):
        ModelSpec("Mb", ("x",))
    with pytest.raises(ValueError):
        ModelSpec("Mzz")
    assert ModelSpec("mHtB", ("x",)).family == "Mhtb"


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        build_design(ModelSpec("Mh", ("x",)), [1.0, 2.0], [1, 0], 2)


@pytest.mark.parametrize("family", FAMILIES)
def test_z0_ignores_history(family):
    cols = ("x",) if "h" in family[1:] else ()
    m = ModelSpec(family, cols)
    z0s = {build_design(m, [0.4], d, 3).z0.tobytes() for d in itertools.product((0, 1), repeat=3)}
    assert len(z0s) == 1


def test_enduring_memory():
    np.testing.assert_array_equal(enduring_memory([0, 1, 0, 0]), [0, 0, 1, 1])
    np.testing.assert_array_equal(enduring_memory([[1, 0, 0], [0, 0, 1]]), [[0, 1, 1], [0, 0, 0]])


def test_capture_prob_examples():
    assert capture_prob([1.0, 0.5], [0.0, 0.0]) == 0.5
    oracle = float(1 / (1 + mpmath.exp(mpmath.mpf("1.15"))))
    assert capture_prob([1.0, 0.5], [0.1, -2.5]) == pytest.approx(oracle, abs=1e-12)
    assert oracle == pytest.approx(0.24048, abs=2e-5)  # quoted value is truncated, not rounded
    assert capture_prob([1.0], [40.0]) == pytest.approx(1.0, abs=1e-15)
    with np.errstate(over="raise"):
        assert capture_prob([1.0], [-800.0]) == 0.0
        assert capture_prob([1.0], [800.0]) == 1.0


def test_capture_prob_monotone(rng):
    z = np.abs(rng.standard_normal(3)) + 0.1
    b = rng.standard_normal(3)
    vals = [capture_prob(z, b + t * np.eye(3)[1]) for t in np.linspace(-2, 2, 9)]
    assert all(0 < v < 1 for v in vals) and np.all(np.diff(vals) > 0)


def test_never_capture_examples():
    assert never_capture_prob(ModelSpec("Mh", ("x",)), [0.3], [0.0, 0.0], 2) == pytest.approx(0.25)
    m = ModelSpec("Mhb", ("x",))
    a = never_capture_prob(m, [0.3], [0.1, -1.0, 5.0], 4)
    b = never_capture_prob(m, [0.3], [0.1, -1.0, -5.0], 4)
    assert a == b
    oracle = (1 - 1 / (1 + mpmath.exp(-1))) * (1 - 1 / (1 + mpmath.exp(1)))
    got = never_capture_prob(ModelSpec("Mht", ("x",)), [0.0], [0.0, 1.0, -1.0], 2)
    assert got == pytest.approx(float(oracle), abs=1e-14)
    assert round(float(oracle), 5) == 0.19661


@pytest.mark.parametrize("family", ["M0", "Mb", "Mh", "Mhb"])
def test_never_capture_at_zero(family):
    cols = ("x",) if "h" in family[1:] else ()
    m = ModelSpec(family, cols)
    assert never_capture_prob(m, [1.3], np.zeros(m.dim(5)), 5) == pytest.approx(2.0 ** -5)


@pytest.mark.parametrize("family", ["Mh", "Mht", "Mhb", "Mhtb", "M0", "Mtb"])
def test_compact_design_preserves_sums(family, rng):
    from conftest import random_dataset
    data = random_dataset(rng, 12, 5)
    m = ModelSpec(family, data.covariate_names if "h" in family[1:] else ())
    Zobs, y, Z0 = design_arrays(data, m)
    U, ys, a, c, owner = compact_design(data, m)
    beta = rng.standard_normal(m.dim(5))
    w = rng.random(12)
    sp = lambda e: np.logaddexp(0.0, e)
    full = (np.sum(y * (Zobs @ beta) - sp(Zobs @ beta))
            - np.sum(np.repeat(w, 5) * sp(Z0 @ beta)))
    eta = U @ beta
    compact = np.sum(ys * eta - (a + w[owner] * c) * sp(eta))
    assert compact == pytest.approx(full, rel=1e-12)
    assert np.all(np.diff(owner) >= 0)
    assert a.sum() == c.sum() == 60
