"""Monte Carlo studies of the abundance estimators.

Replicate ``r`` of a study draws from ``SeedSequence([seed, r, attempt])``,
so results do not depend on execution order or thread count.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .dataset import CaptureDataset
from .design import ModelSpec, _assemble
from .em import EMControl, fit as fit_model
from .inference import ProfileLikelihood, cl_variance, ratio_ci, wald_ci_cl

ESTIMATORS = ("cl", "el", "pel")
COVARIATES = ("x1", "x2")
MAX_REDRAWS = 1000


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    N0: int
    K: int
    beta0: tuple[float, ...]
    model_true: ModelSpec
    reps: int = 1000
    seed: int = 0
    level: float = 0.95
    model_fit: ModelSpec | None = None

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.N0 < 1:
            raise ValueError("N0 must be at least 1")
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if len(self.beta0) != self.model_true.dim(self.K):
            raise ValueError(f"beta0 has {len(self.beta0)} entries, model needs "
                             f"{self.model_true.dim(self.K)}")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if self.model_fit is None:
            object.__setattr__(self, "model_fit", self.model_true)


_SCENARIOS = {
    "A": ("Mh", (0.1, -2.5, -0.15)),
    "B": ("Mhb", (0.1, -2.5, -0.15, 0.8)),
    "C": ("Mhb", (0.1, -2.5, -0.15, -0.8)),
}


def scenario(name: str, N0: int = 200, K: int = 6, reps: int = 1000, seed: int = 0,
             level: float = 0.95, fit_family: str | None = None) -> ScenarioConfig:
    """One of the three benchmark scenarios (covariates x1 ~ N(0,1), x2 ~ Bin(1, 0.5))."""
    key = name.upper()
    if key not in _SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; expected A, B or C")
    fam, beta = _SCENARIOS[key]
    true = ModelSpec(fam, COVARIATES)
    fitm = ModelSpec(fit_family, COVARIATES) if fit_family else None
    return ScenarioConfig(key, N0, K, beta, true, reps, seed, level, fitm)


def draw_population(cfg: ScenarioConfig, rng: np.random.Generator):
    """Covariates and full (N0, K) histories, unobserved individuals included."""
    x = np.column_stack([rng.standard_normal(cfg.N0), rng.binomial(1, 0.5, cfg.N0).astype(float)])
    model = cfg.model_true
    q = len(model.covariate_columns)
    beta = np.asarray(cfg.beta0, dtype=float)
    xs = x[:, :q] if model.heterogeneity else np.zeros((cfg.N0, 0))
    Z0 = _assemble(model, xs, np.zeros((cfg.N0, cfg.K)), cfg.K)
    eta_base = np.ascontiguousarray(Z0 @ beta)
    b = float(beta[-1]) if model.behavioural else 0.0
    u = rng.random((cfg.N0, cfg.K))
    d = _kernels.simulate_histories(eta_base, b, model.behavioural, u)
    return x, d


def _degenerate(data: CaptureDataset, s: int) -> bool:
    return data.n < s + 2


def generate_population(cfg: ScenarioConfig, replicate: int) -> tuple[CaptureDataset, int]:
    """Observed dataset for one replicate and the number of redraws it needed."""
    s = cfg.model_fit.dim(cfg.K)
    for attempt in range(MAX_REDRAWS):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, replicate, attempt]))
        x, d = draw_population(cfg, rng)
        seen = d.sum(axis=1) > 0
        if seen.sum() < max(1, s + 2):
            continue
        data = CaptureDataset(d[seen], x[seen], COVARIATES)
        if not _degenerate(data, s):
            return data, attempt
    raise RuntimeError(f"replicate {replicate}: no usable draw in {MAX_REDRAWS} attempts")


@dataclass
class ReplicateResult:
    replicate: int
    n: int
    redraws: int
    N_hat: dict = field(default_factory=dict)
    lower: dict = field(default_factory=dict)
    upper: dict = field(default_factory=dict)
    censored: dict = field(default_factory=dict)
    converged: dict = field(default_factory=dict)
    failed: dict = field(default_factory=dict)
    ratio_at_truth: dict = field(default_factory=dict)


def run_replicate(cfg: ScenarioConfig, r: int, estimators=ESTIMATORS, intervals: bool = True,
                  ratio_at_truth: bool = False, ctrl: EMControl = EMControl()) -> ReplicateResult:
    data, redraws = generate_population(cfg, r)
    out = ReplicateResult(r, data.n, redraws)
    model = cfg.model_fit
    for est in estimators:
        try:
            res = fit_model(data, model, est, ctrl)
            out.N_hat[est] = res.N_hat
            out.converged[est] = res.converged
            out.failed[est] = False
            if est == "cl":
                if intervals:
                    ci = wald_ci_cl(res, data, model, cfg.level, cl_variance(res, data, model))
            else:
                prof = ProfileLikelihood(res, data, model) if (intervals or ratio_at_truth) else None
                if intervals:
                    ci = ratio_ci(res, data, model, cfg.level, prof)
                if ratio_at_truth:
                    out.ratio_at_truth[est] = prof.ratio(max(float(cfg.N0), data.n))
            if intervals:
                out.lower[est], out.upper[est] = ci.lower, ci.upper
                out.censored[est] = ci.upper_censored
        except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError):
            out.failed[est] = True
            out.N_hat[est] = math.nan
    return out


@dataclass
class EstimatorSummary:
    rmse: float
    mean: float
    bias: float
    coverage: float | None
    width_median: float | None
    width_iqr: float | None
    log_width_mean: float | None
    nonconverged: int
    failed: int
    censored: int
    n_used: int


@dataclass
class SimulationReport:
    config: dict
    estimators: dict
    replicates: int
    redraws: int
    N_hat: dict
    ratio_at_truth: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2, default=_json_default) + "\n"

    def to_csv(self) -> str:
        """One Table-2 style row: K, N0, RMSE and coverage per estimator."""
        names = sorted(self.estimators, key=ESTIMATORS.index)
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["scenario", "K", "N0"] + [f"rmse_{e}" for e in names]
                   + [f"coverage_{e}" for e in names])
        row = [self.config["scenario"], self.config["K"], self.config["N0"]]
        row += [_fmt(self.estimators[e].rmse) for e in names]
        row += [_fmt(None if self.estimators[e].coverage is None else 100 * self.estimators[e].coverage)
                for e in names]
        w.writerow(row)
        return out.getvalue()


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.2f}"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def _finite(v):
    return None if v is None or not math.isfinite(v) else v


def summarize_estimator(N0: float, results: list[ReplicateResult], est: str,
                        intervals: bool) -> EstimatorSummary:
    Nh = np.array([r.N_hat.get(est, math.nan) for r in results])
    ok = ~np.isnan(Nh)
    used = Nh[ok]
    rmse = float(np.sqrt(np.mean((used - N0) ** 2))) if used.size else math.nan
    mean = float(np.mean(used)) if used.size else math.nan
    cov = wmed = wiqr = lw = None
    if intervals:
        rows = [r for r in results if not r.failed.get(est, True) and est in r.lower]
        if rows:
            lo = np.array([r.lower[est] for r in rows])
            hi = np.array([r.upper[est] for r in rows])
            # a censored interval extends to the cap, so it covers iff N0 >= lower
            cov = float(np.mean((lo <= N0) & (N0 <= hi)))
            width = hi - lo
            q1, med, q3 = np.percentile(width, [25, 50, 75])
            wmed, wiqr = float(med), float(q3 - q1)
            lw = float(np.mean(np.log(np.maximum(width, 1e-300))))
    return EstimatorSummary(
        rmse=rmse, mean=mean, bias=mean - N0, coverage=cov, width_median=wmed, width_iqr=wiqr,
        log_width_mean=lw,
        nonconverged=sum(1 for r in results if est in r.converged and not r.converged[est]),
        failed=sum(1 for r in results if r.failed.get(est, False)),
        censored=sum(1 for r in results if r.censored.get(est, False)),
        n_used=int(ok.sum()),
    )


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("CRABUN_THREADS", "1")))
    except ValueError:
        return 1


def run_study(cfg: ScenarioConfig, estimators=ESTIMATORS, intervals: bool = True,
              ratio_at_truth: bool = False, threads: int | None = None,
              ctrl: EMControl = EMControl()) -> SimulationReport:
    estimators = tuple(e.lower() for e in estimators)
    for e in estimators:
        if e not in ESTIMATORS:
            raise ValueError(f"unknown estimator {e!r}")
    threads = default_threads() if threads is None else threads

    def one(r):
        return run_replicate(cfg, r, estimators, intervals, ratio_at_truth, ctrl)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(cfg.reps)))
    else:
        results = [one(r) for r in range(cfg.reps)]
    results.sort(key=lambda r: r.replicate)
    return aggregate(cfg, results, estimators, intervals)


def aggregate(cfg: ScenarioConfig, results: list[ReplicateResult], estimators, intervals: bool):
    summ = {e: summarize_estimator(cfg.N0, results, e, intervals) for e in estimators}
    config = {
        "scenario": cfg.scenario, "N0": cfg.N0, "K": cfg.K, "beta0": list(cfg.beta0),
        "model_true": cfg.model_true, "model_fit": cfg.model_fit, "reps": cfg.reps,
        "seed": cfg.seed, "level": cfg.level,
    }
    return SimulationReport(
        config=config,
        estimators=summ,
        replicates=len(results),
        redraws=sum(r.redraws for r in results),
        N_hat={e: [_finite(r.N_hat.get(e)) for r in results] for e in estimators},
        ratio_at_truth={e: [r.ratio_at_truth.get(e) for r in results]
                        for e in estimators if any(e in r.ratio_at_truth for r in results)},
    )
