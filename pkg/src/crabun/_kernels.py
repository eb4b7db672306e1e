"""Hot loops of the EM fit.

Every function here is written in the subset of numpy that numba's nopython
mode understands, so the same source runs either compiled or as plain numpy.
Set ``CRABUN_NUMBA=0`` before import to force the numpy path (numba is also
skipped automatically when it is not installed).

Array conventions: design rows are individual-major, row ``i*K + k`` holds
occasion ``k`` of individual ``i``.
"""
import math
import os

import numpy as np

_WANT_NUMBA = os.environ.get("CRABUN_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

try:
    if not _WANT_NUMBA:
        raise ImportError
    import numba

    def kernel(fn):
        return numba.njit(cache=True, nogil=True)(fn)

    BACKEND = "numba"
except ImportError:  # pragma: no cover - exercised through the env flag in a subprocess

    def kernel(fn):
        return fn

    BACKEND = "numpy"

MODE_FIXED = 0
MODE_UNKNOWN_N = 1
MODE_CL = 2

# status bits returned by em_loop
FLAG_SEPARATION = 1
FLAG_INNER_NONCONVERGED = 2
FLAG_N_AT_CAP = 4
FLAG_DEGENERATE_ALPHA = 8


@kernel
def softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


@kernel
def expit(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


@kernel
def log_binom(N, n):
    # lgamma(N+1) - lgamma(N-n+1) telescoped into a sum of logs; stays
    # accurate at N ~ 1e9 where the lgamma difference cancels badly
    s = 0.0
    for j in range(n):
        s += math.log(N - j)
    return s - math.lgamma(n + 1.0)


@kernel
def log_phi(Z0, beta, n, K):
    eta0 = Z0 @ beta
    return -np.sum(softplus(eta0).reshape(n, K), axis=1)


@kernel
def bernoulli_ll(Zobs, y, beta):
    eta = Zobs @ beta
    return np.sum(y * eta - softplus(eta))


@kernel
def chol_solve(A, b):
    """Solve A x = b for symmetric positive-definite A. Returns (x, ok)."""
    s = A.shape[0]
    L = np.zeros((s, s))
    for j in range(s):
        d = A[j, j]
        for m in range(j):
            d -= L[j, m] * L[j, m]
        if not d > 0.0:
            return np.zeros(s), False
        L[j, j] = math.sqrt(d)
        for i in range(j + 1, s):
            v = A[i, j]
            for m in range(j):
                v -= L[i, m] * L[j, m]
            L[i, j] = v / L[j, j]
    z = np.zeros(s)
    for i in range(s):
        v = b[i]
        for m in range(i):
            v -= L[i, m] * z[m]
        z[i] = v / L[i, i]
    x = np.zeros(s)
    for i in range(s - 1, -1, -1):
        v = z[i]
        for m in range(i + 1, s):
            v -= L[m, i] * x[m]
        x[i] = v / L[i, i]
    return x, True


@kernel
def logistic_fit(X, XT, ys, ts, beta, tol, max_iter):
    """Damped Newton ascent on sum(ys * eta - ts * softplus(eta)).

    ``ys`` are (weighted) success counts and ``ts`` (weighted) trial counts,
    which covers weighted Bernoulli rows (ys = w*y, ts = w) and aggregated
    binomial rows alike.

    Returns (beta, loglik, score_norm, iterations, converged, ridge_used).
    Convergence is declared when the max-abs score is at most
    ``tol * max(1, sum(ts))``, or when no step-halved move raises the
    objective (the iterate is optimal to working precision).
    """
    s = X.shape[1]
    beta = beta.copy()
    eta = X @ beta
    ll = np.sum(ys * eta - ts * softplus(eta))
    scale = max(1.0, np.sum(ts))
    gnorm = np.inf
    ridge_used = False
    converged = False
    it = 0
    while it < max_iter:
        mu = expit(eta)
        grad = XT @ (ys - ts * mu)
        gnorm = np.max(np.abs(grad))
        if gnorm <= tol * scale:
            converged = True
            break
        h = ts * mu * (1.0 - mu)
        H = (XT * h) @ X
        step, ok = chol_solve(H, grad)
        if not ok:
            tr = 0.0
            for j in range(s):
                tr += H[j, j]
            lam = 1e-8 * max(tr, 1e-300) / s
            while not ok:
                Hr = H.copy()
                for j in range(s):
                    Hr[j, j] += lam
                step, ok = chol_solve(Hr, grad)
                lam *= 10.0
            ridge_used = True
        t = 1.0
        accepted = False
        for _ in range(60):
            cand = beta + t * step
            eta_c = X @ cand
            ll_c = np.sum(ys * eta_c - ts * softplus(eta_c))
            if ll_c >= ll:
                accepted = True
                break
            t *= 0.5
        it += 1
        if not accepted:
            converged = True
            break
        gain = ll_c - ll
        beta = cand
        eta = eta_c
        ll = ll_c
        if gain <= 1e-15 * max(1.0, abs(ll)) and t < 1.0:
            converged = True
            break
    return beta, ll, gnorm, it, converged, ridge_used


@kernel
def n_update(alpha, n, C, chao, N_prev, n_cap):
    """Maximize log C(N, n) + (N - n) log(alpha) - C (N - chao)_+^2 over [n, n_cap].

    The objective is concave in N, so the stationary point of its derivative
    sum_j 1/(N - j) + log(alpha) - 2C (N - chao)_+ is bracketed and refined by
    safeguarded Newton. Falls back to N_prev if the candidate is not at least
    as good (guards monotone ascent against round-off).
    """
    la = math.log(alpha)

    def deriv(N):
        d = la
        for j in range(n):
            d += 1.0 / (N - j)
        if N > chao:
            d -= 2.0 * C * (N - chao)
        return d

    lo = float(n)
    hi = float(n_cap)
    if deriv(lo) <= 0.0:
        cand = lo
    elif deriv(hi) >= 0.0:
        cand = hi
    else:
        x = min(max(N_prev, lo), hi)
        if x <= lo or x >= hi:
            x = 0.5 * (lo + hi)
        for _ in range(200):
            d = deriv(x)
            if d > 0.0:
                lo = x
            else:
                hi = x
            dd = 0.0
            for j in range(n):
                dd -= 1.0 / ((x - j) * (x - j))
            if x > chao:
                dd -= 2.0 * C
            xn = x - d / dd
            if not (xn > lo and xn < hi):
                # geometric midpoint keeps bisection fast across decades
                if lo > n:
                    xn = math.sqrt(lo * hi)
                else:
                    xn = 0.5 * (lo + hi)
            if abs(xn - x) <= 1e-13 * x or hi - lo <= 1e-13 * hi:
                x = xn
                break
            x = xn
        cand = x

    def h(N):
        v = log_binom(N, n) + (N - n) * la
        if N > chao:
            v -= C * (N - chao) * (N - chao)
        return v

    if N_prev >= n and N_prev <= n_cap and h(cand) < h(N_prev):
        return N_prev
    return cand


@kernel
def el_objective(N, n, alpha, p, bern, C, chao):
    v = log_binom(N, n) + (N - n) * math.log(alpha) + np.sum(np.log(p)) + bern
    if N > chao:
        v -= C * (N - chao) * (N - chao)
    return v


@kernel
def cl_objective(bern, lphi):
    # log(1 - phi) via expm1 keeps precision when phi is close to 1
    return bern - np.sum(np.log(-np.expm1(lphi)))


@kernel
def compact_log_phi(eta, c, owner, n):
    return -np.bincount(owner, weights=c * softplus(eta), minlength=n)


@kernel
def compact_bernoulli(eta, ys, a):
    return np.sum(ys * eta - a * softplus(eta))


@kernel
def em_loop(U, ys, a, c, owner, n, mode, N, C, chao, beta, p, tol, max_iter,
            inner_tol, inner_max, n_cap):
    """Run the EM iterations on a compacted design.

    Row j of ``U`` is a distinct design vector of individual ``owner[j]``;
    ``ys[j]`` and ``a[j]`` count its observed captures and observed trials,
    ``c[j]`` how many of that individual's never-captured occasions share it.

    mode 0 keeps N fixed, mode 1 adds the N-maximization step after the
    mass update, mode 2 uses N <- n / (1 - alpha) and monitors the
    conditional log-likelihood.

    Returns (beta, p, N, alpha, objective, trace, iterations, converged, flags).
    """
    XT = np.ascontiguousarray(U.T)
    flags = 0
    beta = beta.copy()
    p = p.copy()
    eta = U @ beta
    lphi = compact_log_phi(eta, c, owner, n)
    phi = np.exp(lphi)
    alpha = np.sum(phi * p)
    if mode == MODE_CL:
        # start on the curve N = n / (1 - alpha) that the CL iteration follows
        N = min(n / (1.0 - alpha), n_cap) if alpha < 1.0 else n_cap
    bern = compact_bernoulli(eta, ys, a)
    if mode == MODE_CL:
        obj = cl_objective(bern, lphi)
    else:
        obj = el_objective(N, n, alpha, p, bern, C, chao)
    trace = np.empty(max_iter + 1)
    trace[0] = obj
    converged = False
    it = 0
    while it < max_iter:
        if not alpha > 0.0:
            flags |= FLAG_DEGENERATE_ALPHA
            break
        w = (N - n) * phi * p / alpha
        ts = a + w[owner] * c
        beta, _, _, _, ok, _ = logistic_fit(U, XT, ys, ts, beta, inner_tol, inner_max)
        if not ok:
            flags |= FLAG_INNER_NONCONVERGED
        p = (w + 1.0) / N
        eta = U @ beta
        lphi = compact_log_phi(eta, c, owner, n)
        phi = np.exp(lphi)
        alpha = np.sum(phi * p)
        if mode == MODE_UNKNOWN_N:
            N = n_update(alpha, n, C, chao, N, n_cap)
        elif mode == MODE_CL:
            N = min(n / (1.0 - alpha), n_cap) if alpha < 1.0 else n_cap
        bern = compact_bernoulli(eta, ys, a)
        if mode == MODE_CL:
            new = cl_objective(bern, lphi)
        else:
            new = el_objective(N, n, alpha, p, bern, C, chao)
        it += 1
        trace[it] = new
        inc = new - obj
        obj = new
        if inc <= tol:
            converged = True
            break
    if np.max(np.abs(beta)) > 30.0:
        flags |= FLAG_SEPARATION
    if mode != MODE_FIXED and N >= n_cap:
        flags |= FLAG_N_AT_CAP
    return beta, p, N, alpha, obj, trace[: it + 1].copy(), it, converged, flags


@kernel
def simulate_histories(eta_base, b_coef, has_b, u):
    """Sequential capture draws with enduring behavioural memory.

    eta_base[i, k] is the linear predictor with the behaviour entry at 0;
    u holds uniforms of the same shape.
    """
    N0, K = eta_base.shape
    d = np.zeros((N0, K), dtype=np.int8)
    for i in range(N0):
        seen = False
        for k in range(K):
            eta = eta_base[i, k]
            if has_b and seen:
                eta += b_coef
            if eta >= 0:
                g = 1.0 / (1.0 + math.exp(-eta))
            else:
                e = math.exp(eta)
                g = e / (1.0 + e)
            if u[i, k] < g:
                d[i, k] = 1
                seen = True
    return d
