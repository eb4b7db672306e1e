"""Scalar numerics shared by the estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, special, stats


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"bracket needs lo < hi, got [{self.lo}, {self.hi}]")


def chisq_quantile(df: int, p: float) -> float:
    if not 0.0 <= p < 1.0:
        raise ValueError("p must lie in [0, 1)")
    if df < 1:
        raise ValueError("df must be a positive integer")
    return float(stats.chi2.ppf(p, df))


def log_binom(N: float, n: int) -> float:
    """log of the binomial coefficient C(N, n), continuous in N.

    For integer n the lgamma difference is telescoped into a sum of logs,
    which keeps full precision when N is many orders above n.
    """
    if N < n:
        raise ValueError(f"log_binom needs N >= n, got N={N}, n={n}")
    if float(n).is_integer():
        n = int(n)
        return float(np.sum(np.log(N - np.arange(n))) - math.lgamma(n + 1.0))
    return float(special.gammaln(N + 1) - special.gammaln(n + 1) - special.gammaln(N - n + 1))


def _checked(f, x):
    v = f(x)
    if not np.isfinite(v):
        raise NumericalError(f"non-finite objective value at x={x}")
    return v


def maximize_1d(f: Callable[[float], float], bracket: Bracket, tol: float = 1e-8) -> float:
    """Argmax of a unimodal function on a closed interval (bounded Brent).

    Endpoints are compared explicitly so boundary maximizers come back
    exactly.
    """
    res = optimize.minimize_scalar(lambda x: -_checked(f, x), bounds=(bracket.lo, bracket.hi),
                                   method="bounded", options={"xatol": tol, "maxiter": 500})
    best_x, best_v = float(res.x), -float(res.fun)
    for edge in (bracket.lo, bracket.hi):
        v = _checked(f, edge)
        if v >= best_v:
            best_x, best_v = edge, v
    return best_x


def find_root(f: Callable[[float], float], bracket: Bracket, tol: float = 1e-8) -> float:
    flo, fhi = f(bracket.lo), f(bracket.hi)
    if flo == 0.0:
        return bracket.lo
    if fhi == 0.0:
        return bracket.hi
    if np.sign(flo) == np.sign(fhi):
        raise NumericalError(f"no sign change on [{bracket.lo}, {bracket.hi}]")
    return float(optimize.brentq(f, bracket.lo, bracket.hi, xtol=tol, rtol=4 * np.finfo(float).eps,
                                 maxiter=500))


def curvature_step(x0: float) -> float:
    return max(1e-4 * abs(x0), 1e-3)


def curvature(f: Callable[[float], float], x0: float, h: float | None = None) -> float:
    """Central second difference of f at x0."""
    if h is None:
        h = curvature_step(x0)
    vals = [f(x0 + h), f(x0), f(x0 - h)]
    if not np.all(np.isfinite(vals)):
        raise NumericalError("non-finite value in curvature stencil")
    return (vals[0] - 2.0 * vals[1] + vals[2]) / (h * h)
