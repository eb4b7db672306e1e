"""Standard errors, ratio statistics, confidence intervals and AIC."""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dataset import CaptureDataset
from .design import ModelSpec, design_arrays
from .em import EMControl, FitResult, N_CAP, em_fixed_n
from .numerics import Bracket, NumericalError, chisq_quantile, curvature, curvature_step, find_root

# inner profile fits need to be far tighter than the point-estimate stopping rule
PROFILE_CTRL = EMControl(tol=1e-11, max_iter=20_000)


class InstabilityWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    method: str
    upper_censored: bool = False
    warnings: tuple[str, ...] = field(default=())

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def rounded(self) -> tuple[int, int]:
        """Endpoints rounded to the nearest integer (ties away from zero)."""
        def r(v):
            return int(math.copysign(math.floor(abs(v) + 0.5), v))
        return r(self.lower), r(self.upper)

    def __contains__(self, N: float) -> bool:
        return self.lower <= N <= self.upper


@dataclass(frozen=True)
class RatioCurve:
    grid: np.ndarray
    values: np.ndarray
    method: str

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("N,ratio\n")
        for N, v in zip(self.grid, self.values):
            out.write(f"{float(N)!r},{float(v)!r}\n")
        return out.getvalue()


class ProfileLikelihood:
    """Fixed-N profile of a fitted EL/PEL model, memoized and warm-started.

    Each evaluation reruns the fixed-N EM from the stored solution nearest
    in N, which keeps neighbouring evaluations on the same branch and cuts
    the iteration count.
    """

    def __init__(self, fit: FitResult, data: CaptureDataset, model: ModelSpec | None = None,
                 ctrl: EMControl = PROFILE_CTRL):
        if fit.method == "CL":
            raise ValueError("profile likelihood needs an EL or PEL fit")
        self.fit = fit
        self.data = data
        self.model = model or fit.model
        self.ctrl = ctrl
        self.pen = fit.penalty_config
        self._cache: dict[float, FitResult] = {}
        # the unknown-N run stops on a loose increment rule, so the tight
        # profile at N_hat can sit slightly above fit.loglik; pin the larger
        self.maximum = max(fit.loglik, self(max(fit.N_hat, data.n)))

    def inner(self, N: float) -> FitResult:
        N = float(N)
        hit = self._cache.get(N)
        if hit is not None:
            return hit
        if self._cache:
            near = min(self._cache, key=lambda m: abs(math.log(m) - math.log(N)))
            start = self._cache[near]
        else:
            start = self.fit
        res = em_fixed_n(self.data, self.model, N, self.pen, self.ctrl,
                         init=(start.beta_hat, start.p_hat))
        self._cache[N] = res
        return res

    def __call__(self, N: float) -> float:
        return self.inner(N).loglik

    def ratio(self, N: float) -> float:
        v = self(N)
        return max(0.0, 2.0 * (self.maximum - v))


def ratio_statistic(N: float, fit: FitResult, data: CaptureDataset, model: ModelSpec | None = None,
                    profile: ProfileLikelihood | None = None) -> float:
    """R'(N) = 2 [max log PEL - profile log PEL at N]."""
    if N < data.n:
        raise ValueError("N must be at least n")
    profile = profile or ProfileLikelihood(fit, data, model)
    return profile.ratio(N)


def ratio_ci(fit: FitResult, data: CaptureDataset, model: ModelSpec | None = None,
             level: float = 0.95, profile: ProfileLikelihood | None = None,
             n_cap: float = N_CAP) -> ConfidenceInterval:
    """{N : R'(N) <= chi2_1(level)} by bracket expansion then root finding."""
    profile = profile or ProfileLikelihood(fit, data, model)
    target = chisq_quantile(1, level)
    n = float(data.n)
    N_hat = min(max(fit.N_hat, n), n_cap)
    step0 = max(1.0, 0.1 * N_hat)
    warns = []

    def excess(N):
        return profile.ratio(N) - target

    # lower side
    if N_hat <= n or excess(n) <= 0.0:
        lower = n
    else:
        inside, d = N_hat, step0
        while True:
            a = max(n, N_hat - d)
            if excess(a) > 0.0:
                break
            inside, d = a, 2 * d
        lower = find_root(excess, Bracket(a, inside), tol=1e-8 * max(1.0, a)) if a < inside else a

    # upper side
    inside, d = N_hat, step0
    censored = False
    while True:
        b = min(n_cap, N_hat + d)
        if excess(b) > 0.0:
            break
        if b >= n_cap:
            censored = True
            break
        inside, d = b, 2 * d
    if censored:
        upper = n_cap
        warns.append(f"ratio stays below {target:.5f} up to the cap {n_cap:g}; upper limit censored")
    else:
        upper = find_root(excess, Bracket(inside, b), tol=1e-8 * max(1.0, b))
    fit_method = "PEL-ratio" if fit.method == "PEL" else "EL-ratio"
    return ConfidenceInterval(lower, upper, level, fit_method, censored, tuple(warns))


def _cl_pieces(fit: FitResult, data: CaptureDataset, model: ModelSpec):
    Zobs, y, Z0 = design_arrays(data, model)
    beta = fit.beta_hat
    n, K, s = data.n, data.K, Zobs.shape[1]
    g_obs = _kernels.expit(Zobs @ beta)
    g0 = _kernels.expit(Z0 @ beta).reshape(n, K)
    Z0r = Z0.reshape(n, K, s)
    lphi = -np.sum(_kernels.softplus(Z0 @ beta).reshape(n, K), axis=1)
    phi = np.exp(lphi)
    one_minus = -np.expm1(lphi)
    a = -np.einsum("ik,iks->is", g0, Z0r)                              # grad log phi_i
    hess_logphi = -np.einsum("ik,iks,ikt->ist", g0 * (1 - g0), Z0r, Z0r)
    return Zobs, g_obs, phi, one_minus, a, hess_logphi


def cl_information(fit: FitResult, data: CaptureDataset, model: ModelSpec | None = None) -> np.ndarray:
    """Observed information of the conditional log-likelihood at beta_hat."""
    model = model or fit.model
    Zobs, g_obs, phi, om, a, hlp = _cl_pieces(fit, data, model)
    H = -(Zobs.T * (g_obs * (1 - g_obs))) @ Zobs
    r = phi / om
    H += np.einsum("i,is,it->st", r / om, a, a) + np.einsum("i,ist->st", r, hlp)
    return -H


def cl_variance(fit: FitResult, data: CaptureDataset, model: ModelSpec | None = None) -> float:
    """Plug-in variance of the Horvitz-Thompson abundance estimate.

    sum_i phi_i / (1 - phi_i)^2 accounts for the unseen individuals and
    G' I^{-1} G for the estimation of beta, with G the gradient of the HT sum.
    """
    if fit.method != "CL":
        raise ValueError("cl_variance needs a CL fit")
    model = model or fit.model
    _, _, phi, om, a, _ = _cl_pieces(fit, data, model)
    first = float(np.sum(phi / om ** 2))
    G = np.sum((phi / om ** 2)[:, None] * a, axis=0)
    info = cl_information(fit, data, model)
    try:
        sol = np.linalg.solve(info, G)
    except np.linalg.LinAlgError:
        return math.inf
    var = first + float(G @ sol)
    return var if np.isfinite(var) else math.inf


def wald_ci_cl(fit: FitResult, data: CaptureDataset, model: ModelSpec | None = None,
               level: float = 0.95, variance: float | None = None) -> ConfidenceInterval:
    """N_hat -/+ sqrt(chi2_1(level) * Var). Endpoints are not clipped at n."""
    model = model or fit.model
    var = cl_variance(fit, data, model) if variance is None else variance
    warns = []
    if not np.isfinite(var) or not np.isfinite(fit.N_hat):
        warns.append("CL variance is not finite; interval is unbounded")
        return ConfidenceInterval(-math.inf, math.inf, level, "CL-Wald", True, tuple(warns))
    half = math.sqrt(chisq_quantile(1, level) * max(var, 0.0))
    lo, hi = fit.N_hat - half, fit.N_hat + half
    if lo < data.n:
        warns.append("Wald lower limit falls below the number of observed individuals")
    return ConfidenceInterval(lo, hi, level, "CL-Wald", False, tuple(warns))


def profile_se(fit: FitResult, data: CaptureDataset, model: ModelSpec | None = None,
               profile: ProfileLikelihood | None = None, h: float | None = None) -> float:
    """sqrt(-1 / curvature of the profile log (P)EL at N_hat)."""
    if fit.method == "CL":
        raise ValueError("use cl_variance for CL fits")
    profile = profile or ProfileLikelihood(fit, data, model)
    N_hat = fit.N_hat
    if h is None:
        h = curvature_step(N_hat)
    if N_hat - h < data.n:
        warnings.warn("N_hat on the lower boundary; standard error not defined", InstabilityWarning)
        return math.inf
    try:
        c = curvature(profile, N_hat, h)
    except NumericalError:
        return math.inf
    if not c < 0.0:
        warnings.warn("profile likelihood is flat or convex at N_hat", InstabilityWarning)
        return math.inf
    return math.sqrt(-1.0 / c)


def n_parameters(fit: FitResult) -> int:
    s = fit.beta_hat.shape[0]
    return s if fit.method == "CL" else s + 2


def aic(fit: FitResult) -> float:
    """-2 * unpenalized log-likelihood + 2 * (dim beta + 2).

    alpha and N count as free parameters for EL/PEL fits; a CL fit has
    only beta.
    """
    return -2.0 * fit.unpenalized_loglik + 2.0 * n_parameters(fit)


def ratio_curve(fit: FitResult, data: CaptureDataset, grid, model: ModelSpec | None = None,
                profile: ProfileLikelihood | None = None) -> RatioCurve:
    profile = profile or ProfileLikelihood(fit, data, model)
    grid = np.asarray(grid, dtype=float)
    if (grid < data.n).any():
        raise ValueError("grid values must be at least n")
    # walk outward from N_hat so warm starts follow the curve
    values = np.empty_like(grid)
    order = np.argsort(np.abs(np.log(grid) - math.log(max(fit.N_hat, data.n))))
    for j in order:
        values[j] = profile.ratio(grid[j])
    return RatioCurve(grid, values, fit.method)


def make_grid(lo: float, hi: float, num: int, log: bool = False) -> np.ndarray:
    if log:
        return np.geomspace(lo, hi, num)
    return np.linspace(lo, hi, num)
