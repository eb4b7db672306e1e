"""Otis model families and their per-occasion design vectors.

Parameter layout follows the family table: intercept (c), heterogeneity
block (h), time block (t), behaviour scalar (b), in that printed order:

    M0 (c)      Mt (t)       Mb (c, b)      Mtb (t, b)
    Mh (c, h)   Mht (h, t)   Mhb (c, h, b)  Mhtb (h, t, b)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .dataset import CaptureDataset

FAMILIES = ("M0", "Mt", "Mb", "Mtb", "Mh", "Mht", "Mhb", "Mhtb")

_BLOCKS = {
    "M0": ("c",),
    "Mt": ("t",),
    "Mb": ("c", "b"),
    "Mtb": ("t", "b"),
    "Mh": ("c", "h"),
    "Mht": ("h", "t"),
    "Mhb": ("c", "h", "b"),
    "Mhtb": ("h", "t", "b"),
}


@dataclass(frozen=True)
class ModelSpec:
    family: str
    covariate_columns: tuple[str, ...] = ()

    def __post_init__(self):
        fam = parse_family(self.family)
        object.__setattr__(self, "family", fam)
        cols = tuple(self.covariate_columns)
        object.__setattr__(self, "covariate_columns", cols)
        if self.heterogeneity and not cols:
            raise ValueError(f"{fam} needs at least one covariate column")
        if not self.heterogeneity and cols:
            raise ValueError(f"{fam} takes no covariates")

    @property
    def blocks(self) -> tuple[str, ...]:
        return _BLOCKS[self.family]

    @property
    def heterogeneity(self) -> bool:
        return "h" in self.blocks

    @property
    def behavioural(self) -> bool:
        return "b" in self.blocks

    def dim(self, K: int) -> int:
        q = len(self.covariate_columns)
        size = {"c": 1, "h": q, "t": K, "b": 1}
        return sum(size[b] for b in self.blocks)

    def parameter_names(self, K: int) -> list[str]:
        names = []
        for b in self.blocks:
            if b == "c":
                names.append("(intercept)")
            elif b == "h":
                names.extend(self.covariate_columns)
            elif b == "t":
                names.extend(f"occasion{k + 1}" for k in range(K))
            else:
                names.append("behaviour")
        return names

    @property
    def token(self) -> str:
        return self.family.lower()


def parse_family(token: str) -> str:
    for fam in FAMILIES:
        if token.lower() == fam.lower():
            return fam
    raise ValueError(f"unknown model family {token!r}; expected one of "
                     + ", ".join(f.lower() for f in FAMILIES))


class DesignVectors(NamedTuple):
    z: np.ndarray   # (K, s) actual history
    z0: np.ndarray  # (K, s) never-captured history


def enduring_memory(d: np.ndarray) -> np.ndarray:
    """f_k = 1 iff any capture strictly before occasion k (works on (K,) or (n, K))."""
    d = np.asarray(d)
    before = np.cumsum(d, axis=-1) - d
    return (before > 0).astype(float)


def _assemble(model: ModelSpec, x: np.ndarray, f: np.ndarray, K: int) -> np.ndarray:
    # x: (n, q), f: (n, K) -> (n, K, s)
    n = f.shape[0]
    parts = []
    for b in model.blocks:
        if b == "c":
            parts.append(np.ones((n, K, 1)))
        elif b == "h":
            parts.append(np.broadcast_to(x[:, None, :], (n, K, x.shape[1])))
        elif b == "t":
            parts.append(np.broadcast_to(np.eye(K)[None, :, :], (n, K, K)))
        else:
            parts.append(f[:, :, None])
    return np.concatenate(parts, axis=2)


def build_design(model: ModelSpec, x, d, K: int) -> DesignVectors:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    q = len(model.covariate_columns)
    if model.heterogeneity and x.shape[0] != q:
        raise ValueError(f"{model.family} expects {q} covariates, got {x.shape[0]}")
    if not model.heterogeneity:
        x = np.zeros(0)
    d = np.asarray(d)
    if d.shape != (K,):
        raise ValueError(f"history must have length {K}")
    f = enduring_memory(d)[None, :]
    z = _assemble(model, x[None, :], f, K)[0]
    z0 = _assemble(model, x[None, :], np.zeros_like(f), K)[0]
    return DesignVectors(z, z0)


def design_arrays(data: CaptureDataset, model: ModelSpec):
    """Stacked design for every individual and occasion.

    Returns ``(Zobs, y, Z0)`` with shapes (n*K, s), (n*K,), (n*K, s).
    """
    x = data.select(model.covariate_columns) if model.heterogeneity else np.zeros((data.n, 0))
    n, K = data.n, data.K
    f = enduring_memory(data.histories)
    Z = _assemble(model, x, f, K).reshape(n * K, -1)
    Z0 = _assemble(model, x, np.zeros_like(f), K).reshape(n * K, -1)
    y = data.histories.reshape(n * K).astype(float)
    return np.ascontiguousarray(Z), y, np.ascontiguousarray(Z0)


def compact_design(data: CaptureDataset, model: ModelSpec):
    """Collapse repeated design rows within each individual.

    Returns ``(U, ys, a, c, owner)``: row j of ``U`` is a distinct design
    vector of individual ``owner[j]``, with ``ys[j]`` captures over ``a[j]``
    observed occasions and ``c[j]`` never-captured occasions sharing it.
    Rows are sorted by owner.
    """
    Zobs, y, Z0 = design_arrays(data, model)
    n, K = data.n, data.K
    ids = np.repeat(np.arange(n), K).astype(float)
    keys = np.vstack([np.column_stack([ids, Zobs]), np.column_stack([ids, Z0])])
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    m = uniq.shape[0]
    obs = np.zeros(2 * n * K)
    obs[: n * K] = 1.0
    ys = np.bincount(inv[: n * K], weights=y, minlength=m)
    a = np.bincount(inv, weights=obs, minlength=m)
    c = np.bincount(inv, weights=1.0 - obs, minlength=m)
    owner = uniq[:, 0].astype(np.int64)
    return np.ascontiguousarray(uniq[:, 1:]), ys, a, c, owner


def capture_prob(z, beta) -> float | np.ndarray:
    """Logistic capture probability g(z; beta), overflow-safe."""
    eta = np.asarray(z, dtype=float) @ np.asarray(beta, dtype=float)
    out = _kernels.expit(np.atleast_1d(np.asarray(eta, dtype=float)))
    return float(out[0]) if np.ndim(eta) == 0 else out


def never_capture_prob(model: ModelSpec, x, beta, K: int) -> float:
    """phi(x; beta): probability of K straight misses."""
    dv = build_design(model, x, np.zeros(K, dtype=int), K)
    eta0 = dv.z0 @ np.asarray(beta, dtype=float)
    return float(np.exp(-np.sum(_kernels.softplus(eta0))))


def log_never_capture(data: CaptureDataset, model: ModelSpec, beta) -> np.ndarray:
    """log phi(x_i; beta) for each observed individual."""
    _, _, Z0 = design_arrays(data, model)
    return _kernels.log_phi(Z0, np.asarray(beta, dtype=float), data.n, data.K)
