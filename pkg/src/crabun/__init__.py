"""Abundance estimation for closed-population capture-recapture data.

Penalized empirical likelihood (PEL), empirical likelihood (EL) and
conditional likelihood (CL) estimators fitted by EM, with ratio and Wald
confidence intervals and a Monte Carlo harness.
"""
from ._kernels import BACKEND
from .dataset import (CaptureDataset, DataError, DatasetSummary, load_packaged, parse_dataset,
                      read_dataset, serialize_dataset, summarize)
from .design import FAMILIES, ModelSpec, build_design, capture_prob, never_capture_prob
from .em import EMControl, FitResult, em_cl, em_fixed_n, em_unknown_n, fit
from .inference import (ConfidenceInterval, ProfileLikelihood, RatioCurve, aic, cl_variance,
                        profile_se, ratio_ci, ratio_curve, ratio_statistic, wald_ci_cl)
from .likelihood import PenaltyConfig, chao_lower_bound, solve_xi, tuning_constant
from .simulate import ScenarioConfig, SimulationReport, run_study, scenario

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CaptureDataset", "DataError", "DatasetSummary", "load_packaged", "parse_dataset",
    "read_dataset", "serialize_dataset", "summarize", "FAMILIES", "ModelSpec", "build_design",
    "capture_prob", "never_capture_prob", "EMControl", "FitResult", "em_cl", "em_fixed_n",
    "em_unknown_n", "fit", "ConfidenceInterval", "ProfileLikelihood", "RatioCurve", "aic",
    "cl_variance", "profile_se", "ratio_ci", "ratio_curve", "ratio_statistic", "wald_ci_cl",
    "PenaltyConfig", "chao_lower_bound", "solve_xi", "tuning_constant", "ScenarioConfig",
    "SimulationReport", "run_study", "scenario",
]
