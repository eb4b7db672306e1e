"""Capture-history datasets: CSV ingest, validation, and summary counts."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised when capture-history input is malformed or inconsistent."""


@dataclass(frozen=True)
class CaptureDataset:
    """Observed individuals of a discrete-time capture-recapture study.

    Only ever-captured individuals appear, so every history row has at
    least one capture.

    Attributes
    ----------
    histories : (n, K) int8 array of capture indicators.
    covariates : (n, q) float array, q may be 0.
    covariate_names : labels of the covariate columns.
    history_names : labels of the history columns, in occasion order.
    """

    histories: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...] = ()
    history_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        h = np.asarray(self.histories)
        if h.ndim != 2:
            raise DataError("histories must be a 2-d matrix")
        if not np.isin(h, (0, 1)).all():
            raise DataError("history entries must be 0 or 1")
        h = h.astype(np.int8)
        n, K = h.shape
        if n < 1:
            raise DataError("need at least one observed individual")
        if K < 2:
            raise DataError("need at least two capture occasions")
        empty = np.flatnonzero(h.sum(axis=1) == 0)
        if empty.size:
            raise DataError(
                f"row {empty[0] + 1} has an all-zero capture history; "
                "only captured individuals can be recorded"
            )
        x = np.asarray(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x.reshape(n, -1) if x.size else np.zeros((n, 0))
        if x.shape[0] != n:
            raise DataError("covariates and histories disagree on n")
        if not np.isfinite(x).all():
            raise DataError("covariates must be finite")
        names = tuple(self.covariate_names) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DataError("one name per covariate column required")
        hnames = tuple(self.history_names) or tuple(f"d{k + 1}" for k in range(K))
        if len(hnames) != K:
            raise DataError("one name per history column required")
        h.setflags(write=False)
        x = np.ascontiguousarray(x)
        x.setflags(write=False)
        object.__setattr__(self, "histories", h)
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "history_names", hnames)

    @property
    def n(self) -> int:
        return self.histories.shape[0]

    @property
    def K(self) -> int:
        return self.histories.shape[1]

    @property
    def q(self) -> int:
        return self.covariates.shape[1]

    def select(self, columns: Sequence[str]) -> np.ndarray:
        """Covariate submatrix for the named columns, in the given order."""
        idx = []
        for c in columns:
            if c not in self.covariate_names:
                raise DataError(f"unknown covariate column {c!r}")
            idx.append(self.covariate_names.index(c))
        return self.covariates[:, idx]


@dataclass(frozen=True)
class DatasetSummary:
    n: int
    K: int
    m1: int
    m2: int
    capture_counts: tuple[int, ...]


def summarize(data: CaptureDataset) -> DatasetSummary:
    times = data.histories.sum(axis=1)
    return DatasetSummary(
        n=data.n,
        K=data.K,
        m1=int(np.count_nonzero(times == 1)),
        m2=int(np.count_nonzero(times == 2)),
        capture_counts=tuple(int(c) for c in data.histories.sum(axis=0)),
    )


def parse_dataset(text, history: Sequence[str] | None = None,
                  covariates: Sequence[str] = ()) -> CaptureDataset:
    """Read a CSV capture-history table.

    ``text`` is a string or a file-like object. ``history`` lists the
    history columns in occasion order; when omitted every column not named
    in ``covariates`` is taken as a history column, left to right.
    """
    if isinstance(text, str):
        text = io.StringIO(text)
    try:
        rows = list(csv.reader(text))
    except csv.Error as exc:
        raise DataError(f"malformed CSV: {exc}") from None
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DataError("empty input")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")
    covariates = list(covariates)
    if history is None:
        history = [h for h in header if h not in covariates]
    history = list(history)
    for col in history + covariates:
        if col not in header:
            raise DataError(f"missing column {col!r}")
    hidx = [header.index(c) for c in history]
    cidx = [header.index(c) for c in covariates]
    H = np.zeros((len(rows) - 1, len(hidx)), dtype=np.int8)
    X = np.zeros((len(rows) - 1, len(cidx)))
    for r, row in enumerate(rows[1:]):
        line = r + 2
        if len(row) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        for j, c in enumerate(hidx):
            cell = row[c].strip()
            if cell not in ("0", "1"):
                raise DataError(f"line {line}: non-binary history cell {cell!r} in {header[c]!r}")
            H[r, j] = int(cell)
        for j, c in enumerate(cidx):
            try:
                X[r, j] = float(row[c])
            except ValueError:
                raise DataError(f"line {line}: non-numeric covariate {row[c]!r} in {header[c]!r}") from None
        if not H[r].any():
            raise DataError(f"line {line}: all-zero capture history")
    return CaptureDataset(H, X, tuple(covariates), tuple(history))


def _fmt(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def serialize_dataset(data: CaptureDataset) -> str:
    """CSV text with history columns first, then covariates; parse_dataset inverts it."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(list(data.history_names) + list(data.covariate_names))
    for h, x in zip(data.histories, data.covariates):
        w.writerow([str(int(v)) for v in h] + [_fmt(v) for v in x])
    return out.getvalue()


def read_dataset(path, history=None, covariates=()) -> CaptureDataset:
    with open(path, newline="") as fh:
        return parse_dataset(fh, history, covariates)


def load_packaged(name: str, covariates: Sequence[str] = ("sex",)) -> CaptureDataset:
    """Load a CSV shipped in ``crabun/data``."""
    with resources.files("crabun").joinpath("data", name).open("r", newline="") as fh:
        return parse_dataset(fh, None, covariates)
