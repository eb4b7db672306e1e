import math

import numpy as np
import pytest

from crabun import CaptureDataset, ModelSpec
from crabun.design import never_capture_prob
from crabun.likelihood import (ELParams, InfeasibleMultiplier, PenaltyConfig, chao_lower_bound,
                               conditional_loglik, induced_masses, log_el, log_pel, penalty,
                               profile_log_el, profile_log_pel, solve_xi, tuning_constant)


def g(e):
    return 1.0 / (1.0 + math.exp(-e))


def tiny():
    d = np.array([[1, 0], [1, 1], [0, 1]])
    x = np.array([[0.3], [-1.1], [0.8]])
    return CaptureDataset(d, x, ("x",)), ModelSpec("Mh", ("x",))


def straight_line_log_el(N, beta, alpha, p, d, x):
    n, K = d.shape
    v = math.lgamma(N + 1) - math.lgamma(n + 1) - math.lgamma(N - n + 1) + (N - n) * math.log(alpha)
    for i in range(n):
        v += math.log(p[i])
        for k in range(K):
            q = g(beta[0] + beta[1] * x[i])
            v += math.log(q) if d[i, k] else math.log(1 - q)
    return v


def test_chao_and_tuning_examples():
    assert chao_lower_bound(10, 0, 3) == 10
    assert chao_lower_bound(10, 4, 2) == 14
    assert chao_lower_bound(10, 4, 0) == 16             # m2 = 0 fallback n + m1(m1-1)/2
    assert tuning_constant(10, 4, 0) == 0
    assert tuning_constant(10, 4, 2) == pytest.approx(0.003125, abs=1e-15)
    assert tuning_constant(10, 0, 2) == 0


def test_penalty_examples():
    assert penalty(40.0, 40.0) == 0
    assert penalty(50.0, 40.0) == -100
    assert penalty(35.0, 40.0) == 0


def test_log_el_boundary_terms():
    data, m = tiny()
    p = np.full(3, 1 / 3)
    beta = np.array([0.2, -0.4])
    at_n = log_el(ELParams(3, beta, 0.4, p), data, m)
    bern = sum(math.log(g(0.2 - 0.4 * xi)) if di else math.log(1 - g(0.2 - 0.4 * xi))
               for xi, row in zip(data.covariates[:, 0], data.histories) for di in row)
    assert at_n == pytest.approx(3 * math.log(1 / 3) + bern, abs=1e-12)


def test_log_el_single_bernoulli():
    data = CaptureDataset(np.array([[1, 0]]), np.zeros((1, 0)))
    # K must be >= 2 for a dataset, so compare against the two-occasion Bernoulli sum
    v = log_el(ELParams(1, np.zeros(1), 0.25, np.ones(1)), data, ModelSpec("M0"))
    assert v == pytest.approx(2 * math.log(0.5))


def test_log_el_matches_straight_line(rng):
    data, m = tiny()
    for _ in range(20):
        beta = rng.standard_normal(2)
        p = rng.dirichlet(np.ones(3))
        N = 3 + 10 * rng.random()
        alpha = rng.uniform(0.05, 0.95)
        got = log_el(ELParams(N, beta, alpha, p), data, m)
        want = straight_line_log_el(N, beta, alpha, p, data.histories, data.covariates[:, 0])
        assert got == pytest.approx(want, abs=1e-10)


def test_log_el_sentinels():
    data, m = tiny()
    assert log_el(ELParams(5, np.zeros(2), 0.3, np.array([0.5, 0.5, 0.0])), data, m) == -math.inf
    assert log_el(ELParams(5, np.zeros(2), 1.0, np.full(3, 1 / 3)), data, m) == -math.inf
    with pytest.raises(ValueError):
        log_el(ELParams(2, np.zeros(2), 0.3, np.full(3, 1 / 3)), data, m)


def test_log_pel_adds_penalty():
    data, m = tiny()
    pr = ELParams(9, np.array([0.1, 0.2]), 0.3, np.full(3, 1 / 3))
    pen = PenaltyConfig(chao=5.0, C=0.01)
    assert log_pel(pr, data, m, pen) == pytest.approx(log_el(pr, data, m) - 0.16)


def test_solve_xi_examples():
    assert solve_xi(np.full(4, 0.3), 0.3) == 0.0
    assert solve_xi([0.2, 0.4], 0.3) == pytest.approx(0.0, abs=1e-12)
    xi = solve_xi([0.2, 0.4], 0.25)
    assert xi == pytest.approx(20 / 3, rel=1e-12)
    p = induced_masses([0.2, 0.4], 0.25, xi)
    np.testing.assert_allclose(p, [0.75, 0.25], atol=1e-12)
    assert abs(p @ [0.2, 0.4] - 0.25) <= 1e-12


def test_solve_xi_infeasible():
    with pytest.raises(InfeasibleMultiplier):
        solve_xi([0.2, 0.4], 0.5)
    with pytest.raises(InfeasibleMultiplier):
        solve_xi([0.3, 0.3], 0.4)


def test_profile_c_zero_equals_el(rng):
    data, m = tiny()
    beta = np.array([0.1, 0.5])
    phi = [never_capture_prob(m, x, beta, 2) for x in data.covariates]
    alpha = float(np.mean(phi))
    for N in (3.0, 4.5, 12.0):
        a = profile_log_pel(N, beta, alpha, data, m, PenaltyConfig(chao=3.5, C=0.0))
        assert a == pytest.approx(profile_log_el(N, beta, alpha, data, m), abs=1e-12)


def test_profile_below_el_with_penalty():
    data, m = tiny()
    beta = np.array([0.1, 0.5])
    phi = [never_capture_prob(m, x, beta, 2) for x in data.covariates]
    alpha = float(np.mean(phi))
    pen = PenaltyConfig(chao=5.0, C=0.02)
    for N in (3.0, 5.0, 5.5, 20.0):
        pel = profile_log_pel(N, beta, alpha, data, m, pen)
        el = profile_log_el(N, beta, alpha, data, m)
        if N <= pen.chao:
            assert pel == el
        else:
            assert pel < el


def test_profile_degenerate_uniform():
    data = CaptureDataset(np.array([[1, 0], [0, 1], [1, 1]]), np.zeros((3, 0)))
    m = ModelSpec("M0")
    beta = np.array([-0.3])
    alpha = never_capture_prob(m, [], beta, 2)
    prof = profile_log_el(6.0, beta, alpha, data, m)
    assert prof == pytest.approx(log_el(ELParams(6.0, beta, alpha, np.full(3, 1 / 3)), data, m), abs=1e-12)


def test_profile_matches_simplex_grid(rng):
    data, m = tiny()
    d, x = data.histories, data.covariates[:, 0]
    for _ in range(5):
        beta = rng.standard_normal(2) * 0.8
        phi = np.array([never_capture_prob(m, xi, beta, 2) for xi in data.covariates])
        lo, hi = phi.min(), phi.max()
        alpha = lo + rng.uniform(0.1, 0.9) * (hi - lo)
        N = 3 + 8 * rng.random()
        pen = PenaltyConfig(chao=4.0, C=0.01)
        got = profile_log_pel(N, beta, alpha, data, m, pen)
        # the 2 linear constraints leave one free mass; scan p1 and solve for p2, p3
        p1 = np.linspace(0, 1, 2_000_001)[1:-1]
        p3 = (alpha - p1 * phi[0] - (1 - p1) * phi[1]) / (phi[2] - phi[1])
        p2 = 1 - p1 - p3
        ok = (p2 > 0) & (p3 > 0)
        vals = np.log(p1[ok]) + np.log(p2[ok]) + np.log(p3[ok])
        j = int(np.argmax(vals))
        p = np.array([p1[ok][j], p2[ok][j], p3[ok][j]])
        want = straight_line_log_el(N, beta, alpha, p, d, x) + pen.value(N)
        assert got == pytest.approx(want, abs=1e-4)
        assert got >= want - 1e-12


def test_profile_infeasible_is_minus_inf():
    data, m = tiny()
    beta = np.array([0.1, 0.5])
    assert profile_log_el(5.0, beta, 0.999, data, m) == -math.inf


def test_conditional_loglik_examples():
    data = CaptureDataset(np.array([[1, 0]]), np.zeros((1, 0)))
    assert conditional_loglik(np.zeros(1), data, ModelSpec("M0")) == pytest.approx(math.log(1 / 3))


def test_conditional_regrouping(rng):
    data, m = tiny()
    for _ in range(10):
        beta = rng.standard_normal(2)
        p = np.full(3, 1 / 3)
        # at N = n the log EL is log(1/3)*3 + Bernoulli block
        bern = log_el(ELParams(3, beta, 0.5, p), data, m) - 3 * math.log(1 / 3)
        phi = np.array([never_capture_prob(m, xi, beta, 2) for xi in data.covariates])
        assert conditional_loglik(beta, data, m) == pytest.approx(bern - np.sum(np.log1p(-phi)), abs=1e-10)


def test_conditional_relabel_invariant(rng):
    d = (rng.random((15, 4)) < 0.4).astype(int)
    d[d.sum(axis=1) == 0, 2] = 1
    x = rng.standard_normal((15, 1))
    m = ModelSpec("Mhb", ("x",))
    beta = rng.standard_normal(3)
    perm = rng.permutation(15)
    a = conditional_loglik(beta, CaptureDataset(d, x, ("x",)), m)
    b = conditional_loglik(beta, CaptureDataset(d[perm], x[perm], ("x",)), m)
    assert a == pytest.approx(b, abs=1e-10)
