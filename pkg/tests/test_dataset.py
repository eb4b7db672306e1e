import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crabun.dataset import (CaptureDataset, DataError, parse_dataset, serialize_dataset,
                            summarize)


def test_parse_small_table():
    data = parse_dataset("d1,d2,sex\n1,0,0\n0,1,1\n", covariates=["sex"])
    assert (data.n, data.K, data.q) == (2, 2, 1)
    assert data.history_names == ("d1", "d2")
    np.testing.assert_array_equal(data.histories, [[1, 0], [0, 1]])
    np.testing.assert_array_equal(data.covariates[:, 0], [0.0, 1.0])


def test_explicit_history_order():
    data = parse_dataset("b,a,sex\n1,0,0\n1,1,1\n", history=["a", "b"], covariates=["sex"])
    np.testing.assert_array_equal(data.histories, [[0, 1], [1, 1]])


@pytest.mark.parametrize("text, match", [
    ("d1,d2,sex\n0,0,1\n", "all-zero"),
    ("d1,d2,sex\n1,2,1\n", "non-binary"),
    ("d1,d2,sex\n1,0,male\n", "non-numeric"),
    ("d1,d2\n1,0\n", "missing column"),
    ("d1,d2,sex\n1,0\n", "expected 3 fields"),
    ("", "empty"),
])
def test_parse_errors(text, match):
    with pytest.raises(DataError, match=match):
        parse_dataset(text, covariates=["sex"])


def test_zero_history_reports_line():
    with pytest.raises(DataError, match="line 3"):
        parse_dataset("d1,d2\n1,0\n0,0\n")


def test_constructor_validation():
    with pytest.raises(DataError):
        CaptureDataset(np.array([[1]]), np.zeros((1, 0)))            # K < 2
    with pytest.raises(DataError):
        CaptureDataset(np.array([[1, 0]]), np.array([[np.nan]]), ("x",))


def test_dataset_is_read_only():
    data = parse_dataset("d1,d2\n1,0\n")
    with pytest.raises(ValueError):
        data.histories[0, 0] = 0


def test_summarize_counts():
    data = CaptureDataset(np.array([[1, 0], [1, 1], [0, 1]]), np.zeros((3, 0)))
    s = summarize(data)
    assert (s.n, s.m1, s.m2) == (3, 2, 1)
    assert s.capture_counts == (2, 2)


def test_summarize_all_captured():
    s = summarize(CaptureDataset(np.ones((4, 3), dtype=int), np.zeros((4, 0))))
    assert (s.m1, s.m2) == (0, 0)


def test_summarize_matches_tally(rng):
    d = (rng.random((20, 4)) < 0.5).astype(int)
    d[d.sum(axis=1) == 0, 0] = 1
    s = summarize(CaptureDataset(d, np.zeros((20, 0))))
    m1 = m2 = 0
    for row in d.tolist():
        t = sum(row)
        m1 += t == 1
        m2 += t == 2
    cols = [sum(row[k] for row in d.tolist()) for k in range(4)]
    assert (s.m1, s.m2, list(s.capture_counts)) == (m1, m2, cols)


def test_synthetic_fixture_shape(synthetic):
    assert (synthetic.n, synthetic.K, synthetic.covariate_names) == (47, 8, ("sex",))


histories = st.integers(2, 6).flatmap(lambda K: st.lists(
    st.lists(st.integers(0, 1), min_size=K, max_size=K).filter(any), min_size=1, max_size=15))


@settings(max_examples=60, deadline=None)
@given(histories, st.data())
def test_round_trip(rows, draw):
    n = len(rows)
    x = np.array(draw.draw(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=n, max_size=n)))
    data = CaptureDataset(np.array(rows), x[:, None], ("cov",))
    back = parse_dataset(serialize_dataset(data), covariates=["cov"])
    np.testing.assert_array_equal(back.histories, data.histories)
    np.testing.assert_array_equal(back.covariates, data.covariates)
    assert back.history_names == data.history_names
    assert serialize_dataset(back) == serialize_dataset(data)


@settings(max_examples=40, deadline=None)
@given(histories, st.randoms(use_true_random=False))
def test_summary_permutation_invariant(rows, rnd):
    data = CaptureDataset(np.array(rows), np.zeros((len(rows), 0)))
    perm = list(range(len(rows)))
    rnd.shuffle(perm)
    shuffled = CaptureDataset(np.array(rows)[perm], np.zeros((len(rows), 0)))
    assert summarize(data) == summarize(shuffled)
