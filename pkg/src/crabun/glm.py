"""Weighted binomial logistic regression by damped Newton-Raphson."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from . import _kernels

SEPARATION_BOUND = 30.0


class WeightedObservation(NamedTuple):
    y: float
    z: np.ndarray
    w: float


@dataclass(frozen=True)
class LogisticFit:
    beta: np.ndarray
    loglik: float
    score_norm: float
    iterations: int
    converged: bool
    ridge_used: bool

    @property
    def separated(self) -> bool:
        """Coefficients ran off to the separation bound; the MLE is likely at infinity."""
        return bool(np.max(np.abs(self.beta), initial=0.0) > SEPARATION_BOUND)


def weighted_logistic_fit(X, y, w, beta0=None, tol: float = 1e-9, max_iter: int = 100) -> LogisticFit:
    """Maximize sum_j w_j [y_j log g(x_j b) + (1 - y_j) log(1 - g(x_j b))].

    Step halving makes every accepted Newton step an ascent step, and a
    small ridge is added to the Hessian whenever its Cholesky factorization
    fails, so rank-deficient designs still return.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],) or w.shape != y.shape:
        raise ValueError("X must be (m, s) with y and w of length m")
    if (w < 0).any() or not np.isfinite(w).all():
        raise ValueError("weights must be finite and nonnegative")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("responses must be 0 or 1")
    beta0 = np.zeros(X.shape[1]) if beta0 is None else np.asarray(beta0, dtype=float)
    beta, ll, gnorm, it, ok, ridge = _kernels.logistic_fit(
        X, np.ascontiguousarray(X.T), w * y, w, beta0, tol, max_iter)
    return LogisticFit(beta, float(ll), float(gnorm), int(it), bool(ok), bool(ridge))


def fit_observations(obs: Iterable[WeightedObservation], beta0=None, tol: float = 1e-9,
                     max_iter: int = 100) -> LogisticFit:
    obs = list(obs)
    X = np.array([np.atleast_1d(o.z) for o in obs], dtype=float)
    y = np.array([o.y for o in obs], dtype=float)
    w = np.array([o.w for o in obs], dtype=float)
    return weighted_logistic_fit(X, y, w, beta0, tol, max_iter)
