"""EM fits for the CL, EL and PEL abundance estimators.

All three share one loop: E-step weights for the N - n unseen individuals,
a weighted logistic fit for beta, the closed-form mass update
p_i = (w_i + 1) / N, and (for unknown N) an abundance update. They differ
only in the abundance update and the monitored objective.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dataset import CaptureDataset, summarize
from .design import ModelSpec, compact_design, design_arrays
from .likelihood import PenaltyConfig

N_CAP = 1e9


@dataclass(frozen=True)
class EMControl:
    tol: float = 1e-5
    max_iter: int = 10_000
    inner_tol: float = 1e-9
    inner_max_iter: int = 100
    n_cap: float = N_CAP

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class FitResult:
    method: str
    model: ModelSpec
    N_hat: float
    beta_hat: np.ndarray
    alpha_hat: float
    p_hat: np.ndarray
    loglik: float
    penalty_config: PenaltyConfig | None
    iterations: int
    converged: bool
    trace: np.ndarray
    flags: int = 0
    warnings: tuple[str, ...] = field(default=())

    @property
    def N_rounded(self) -> int:
        return int(math.floor(self.N_hat + 0.5))

    @property
    def at_cap(self) -> bool:
        return bool(self.flags & _kernels.FLAG_N_AT_CAP)

    @property
    def unpenalized_loglik(self) -> float:
        if self.penalty_config is None or self.method == "CL":
            return self.loglik
        return self.loglik - self.penalty_config.value(self.N_hat)


def _warnings(flags: int, converged: bool, max_iter: int) -> tuple[str, ...]:
    out = []
    if not converged:
        out.append(f"EM did not converge within {max_iter} iterations")
    if flags & _kernels.FLAG_SEPARATION:
        out.append("logistic fit separated (|beta| > 30)")
    if flags & _kernels.FLAG_INNER_NONCONVERGED:
        out.append("inner logistic fit hit its iteration cap")
    if flags & _kernels.FLAG_N_AT_CAP:
        out.append("abundance estimate reached the search cap")
    if flags & _kernels.FLAG_DEGENERATE_ALPHA:
        out.append("never-capture probability collapsed to 0")
    return tuple(out)


def e_step_weights(N: float, beta, p, data: CaptureDataset, model: ModelSpec) -> np.ndarray:
    """Expected number of unseen individuals sharing each observed covariate."""
    _, _, Z0 = design_arrays(data, model)
    phi = np.exp(_kernels.log_phi(Z0, np.asarray(beta, dtype=float), data.n, data.K))
    p = np.asarray(p, dtype=float)
    alpha = float(np.sum(phi * p))
    if not alpha > 0.0:
        raise FloatingPointError("all never-capture probabilities are zero")
    return (N - data.n) * phi * p / alpha


def _start(data, model, init):
    s = model.dim(data.K)
    if init is None:
        return np.zeros(s), np.full(data.n, 1.0 / data.n)
    beta, p = init
    return np.array(beta, dtype=float), np.array(p, dtype=float)


def _run(data, model, mode, N, pen, ctrl, init):
    U, ys, a, c, owner = compact_design(data, model)
    beta, p = _start(data, model, init)
    C = pen.C if pen is not None else 0.0
    chao = pen.chao if pen is not None else math.inf
    return _kernels.em_loop(U, ys, a, c, owner, data.n, mode, float(N), float(C), float(chao),
                            beta, p, ctrl.tol, ctrl.max_iter, ctrl.inner_tol,
                            ctrl.inner_max_iter, float(ctrl.n_cap))


def em_fixed_n(data: CaptureDataset, model: ModelSpec, N: float, pen: PenaltyConfig | None = None,
               ctrl: EMControl = EMControl(), init=None) -> FitResult:
    """Maximize the penalized log EL over (beta, alpha, p) at fixed N.

    ``init`` is an optional ``(beta, p)`` warm start; by default the loop
    starts from beta = 0 and uniform masses.
    """
    if N < data.n:
        raise ValueError(f"N={N} is below the number of observed individuals {data.n}")
    if pen is None:
        pen = PenaltyConfig.from_data(data, penalized=False)
    beta, p, N_out, alpha, obj, trace, it, conv, flags = _run(
        data, model, _kernels.MODE_FIXED, N, pen, ctrl, init)
    method = "PEL" if pen.C > 0 else "EL"
    return FitResult(method, model, float(N_out), beta, float(alpha), p, float(obj), pen,
                     int(it), bool(conv), trace, int(flags), _warnings(flags, conv, ctrl.max_iter))


def em_unknown_n(data: CaptureDataset, model: ModelSpec, pen: PenaltyConfig | None = None,
                 ctrl: EMControl = EMControl()) -> FitResult:
    """Maximum (penalized) EL fit with N updated inside the loop.

    With ``pen.C == 0`` this is the plain EL estimator.
    """
    if pen is None:
        pen = PenaltyConfig.from_data(data)
    N0 = max(pen.chao, data.n + 1.0)
    beta, p, N_out, alpha, obj, trace, it, conv, flags = _run(
        data, model, _kernels.MODE_UNKNOWN_N, N0, pen, ctrl, None)
    method = "PEL" if pen.C > 0 else "EL"
    return FitResult(method, model, float(N_out), beta, float(alpha), p, float(obj), pen,
                     int(it), bool(conv), trace, int(flags), _warnings(flags, conv, ctrl.max_iter))


def horvitz_thompson(data: CaptureDataset, model: ModelSpec, beta) -> float:
    _, _, Z0 = design_arrays(data, model)
    lphi = _kernels.log_phi(Z0, np.asarray(beta, dtype=float), data.n, data.K)
    return float(np.sum(-1.0 / np.expm1(lphi)))


def em_cl(data: CaptureDataset, model: ModelSpec, ctrl: EMControl = EMControl()) -> FitResult:
    """Conditional-likelihood fit by EM; N_hat is the Horvitz-Thompson sum."""
    pen = PenaltyConfig.from_data(data, penalized=False)
    N0 = max(pen.chao, data.n + 1.0)
    beta, p, N_out, alpha, obj, trace, it, conv, flags = _run(
        data, model, _kernels.MODE_CL, N0, None, ctrl, None)
    N_hat = horvitz_thompson(data, model, beta)
    warns = list(_warnings(flags & ~_kernels.FLAG_N_AT_CAP, conv, ctrl.max_iter))
    if not np.isfinite(N_hat) or N_hat > ctrl.n_cap:
        warns.append("Horvitz-Thompson estimate is unstable (never-capture probability near 1)")
        flags |= _kernels.FLAG_N_AT_CAP
    return FitResult("CL", model, float(N_hat), beta, float(alpha), p, float(obj), None,
                     int(it), bool(conv), trace, int(flags), tuple(warns))


def n_update(alpha: float, n: int, pen: PenaltyConfig, n_cap: float = N_CAP,
             N_prev: float = -1.0) -> float:
    """The abundance step on its own: argmax_N log C(N,n) + (N-n) log alpha + C f(N)."""
    return float(_kernels.n_update(float(alpha), int(n), float(pen.C), float(pen.chao),
                                   float(N_prev), float(n_cap)))


def fit(data: CaptureDataset, model: ModelSpec, method: str = "pel",
        ctrl: EMControl = EMControl()) -> FitResult:
    method = method.lower()
    if method == "cl":
        return em_cl(data, model, ctrl)
    if method not in ("el", "pel"):
        raise ValueError(f"unknown method {method!r}; expected cl, el or pel")
    pen = PenaltyConfig.from_summary(summarize(data), penalized=(method == "pel"))
    res = em_unknown_n(data, model, pen, ctrl)
    if method == "pel" and pen.C == 0.0:
        # the PEL collapses to EL when the tuning constant vanishes; keep the label
        res = _relabel(res, "PEL")
    return res


def _relabel(res: FitResult, method: str) -> FitResult:
    from dataclasses import replace
    return replace(res, method=method)
