"""Empirical, penalized-empirical and conditional log-likelihoods."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import _kernels
from .dataset import CaptureDataset, DatasetSummary, summarize
from .design import ModelSpec, design_arrays


def chao_lower_bound(n: int, m1: int, m2: int) -> float:
    if m2 > 0:
        return n + m1 * m1 / (2.0 * m2)
    # bias-corrected form for the m2 = 0 case
    return n + m1 * (m1 - 1) / 2.0


def tuning_constant(n: int, m1: int, m2: int) -> float:
    if m1 == 0:
        return 0.0
    return 2.0 * m2 * m2 / (n * float(m1) ** 4)


def penalty(N: float, chao: float) -> float:
    return -(N - chao) ** 2 if N > chao else 0.0


@dataclass(frozen=True)
class PenaltyConfig:
    chao: float
    C: float = 0.0

    def __post_init__(self):
        if self.C < 0:
            raise ValueError("tuning constant must be nonnegative")

    @classmethod
    def from_summary(cls, s: DatasetSummary, penalized: bool = True) -> "PenaltyConfig":
        chao = chao_lower_bound(s.n, s.m1, s.m2)
        return cls(chao, tuning_constant(s.n, s.m1, s.m2) if penalized else 0.0)

    @classmethod
    def from_data(cls, data: CaptureDataset, penalized: bool = True) -> "PenaltyConfig":
        return cls.from_summary(summarize(data), penalized)

    def unpenalized(self) -> "PenaltyConfig":
        return PenaltyConfig(self.chao, 0.0)

    def value(self, N: float) -> float:
        return self.C * penalty(N, self.chao)


@dataclass(frozen=True)
class ELParams:
    N: float
    beta: np.ndarray
    alpha: float
    p: np.ndarray


def _bernoulli(data, model, beta):
    Zobs, y, Z0 = design_arrays(data, model)
    beta = np.asarray(beta, dtype=float)
    return _kernels.bernoulli_ll(Zobs, y, beta), _kernels.log_phi(Z0, beta, data.n, data.K)


def log_el(params: ELParams, data: CaptureDataset, model: ModelSpec) -> float:
    """Log EL at explicit masses p; -inf if a mass is zero or alpha leaves (0, 1)."""
    n = data.n
    p = np.asarray(params.p, dtype=float)
    if params.N < n:
        raise ValueError("N must be at least n")
    if (p <= 0).any() or not 0.0 < params.alpha < 1.0:
        return -math.inf
    bern, _ = _bernoulli(data, model, params.beta)
    return (_kernels.log_binom(float(params.N), n) + (params.N - n) * math.log(params.alpha)
            + float(np.sum(np.log(p))) + bern)


def log_pel(params: ELParams, data: CaptureDataset, model: ModelSpec, pen: PenaltyConfig) -> float:
    return log_el(params, data, model) + pen.value(params.N)


class InfeasibleMultiplier(ValueError):
    """alpha lies outside the range spanned by the phi_i."""


def solve_xi(phi, alpha: float) -> float:
    """Lagrange multiplier for the mean constraint sum p_i (phi_i - alpha) = 0.

    The left side of sum u_i / (1 + xi u_i) = 0 (u = phi - alpha) decreases
    strictly on the interval where every 1 + xi u_i is positive, so the root
    there is unique.
    """
    u = np.asarray(phi, dtype=float) - alpha
    if u.max() - u.min() < 1e-12:
        if abs(u.mean()) < 1e-12:
            return 0.0
        raise InfeasibleMultiplier("all phi_i equal but differ from alpha")
    umax, umin = u.max(), u.min()
    if umax <= 0.0 or umin >= 0.0:
        raise InfeasibleMultiplier("alpha outside the convex hull of phi")

    def h(xi):
        return float(np.sum(u / (1.0 + xi * u)))

    def dh(xi):
        return -float(np.sum((u / (1.0 + xi * u)) ** 2))

    lo_edge, hi_edge = -1.0 / umax, -1.0 / umin
    delta = 1e-3
    while True:
        lo = -(1.0 - delta) / umax
        hi = -(1.0 - delta) / umin
        if h(lo) > 0.0 and h(hi) < 0.0:
            break
        delta *= 1e-3
        if delta < 1e-300:
            raise InfeasibleMultiplier("could not bracket the multiplier")
    xi = optimize.brentq(h, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=1000)
    # Newton polish, staying strictly inside the feasible interval
    for _ in range(5):
        r = h(xi)
        if r == 0.0:
            break
        cand = xi - r / dh(xi)
        if not lo_edge < cand < hi_edge or abs(h(cand)) >= abs(r):
            break
        xi = cand
    return float(xi)


def induced_masses(phi, alpha: float, xi: float | None = None) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if xi is None:
        xi = solve_xi(phi, alpha)
    return 1.0 / (phi.size * (1.0 + xi * (phi - alpha)))


def profile_log_pel(N: float, beta, alpha: float, data: CaptureDataset, model: ModelSpec,
                    pen: PenaltyConfig) -> float:
    """Penalized log EL with the masses profiled out by the Lagrange multiplier.

    Includes the constant -n log n, so the value equals the constrained
    maximum of the log EL over the masses. Returns -inf when alpha lies
    outside the range of the phi_i.
    """
    n = data.n
    if N < n:
        raise ValueError("N must be at least n")
    if not 0.0 < alpha < 1.0:
        return -math.inf
    bern, lphi = _bernoulli(data, model, beta)
    phi = np.exp(lphi)
    try:
        xi = solve_xi(phi, alpha)
    except InfeasibleMultiplier:
        return -math.inf
    lagrange = float(np.sum(np.log1p(xi * (phi - alpha))))
    return (_kernels.log_binom(float(N), n) + (N - n) * math.log(alpha) - n * math.log(n)
            - lagrange + bern + pen.value(N))


def profile_log_el(N: float, beta, alpha: float, data: CaptureDataset, model: ModelSpec) -> float:
    return profile_log_pel(N, beta, alpha, data, model, PenaltyConfig(chao=float(N), C=0.0))


def conditional_loglik(beta, data: CaptureDataset, model: ModelSpec) -> float:
    bern, lphi = _bernoulli(data, model, beta)
    if (lphi >= 0).any():
        return -math.inf
    return float(_kernels.cl_objective(bern, lphi))
