"""Human-sample mitigation strategies M1-M9."""

from .estimators import CDI, DSL, GroundTruthOnly, PlugIn
from .learner import ErrorLearner, fit_error_learner
from .sampling import (
    HumanSample,
    draw_active,
    draw_low_confidence,
    draw_random,
    low_confidence_pi,
    sample_active,
    sample_low_confidence,
    sample_random,
)
from .strategies import (
    MITIGATION_COLUMNS,
    STRATEGIES,
    MitigationEstimate,
    estimate_cdi,
    estimate_dsl,
    estimate_gt_only,
    estimate_plugin,
    run_strategy,
    sample_accuracy,
    select_model,
)

__all__ = [
    "CDI",
    "DSL",
    "ErrorLearner",
    "GroundTruthOnly",
    "HumanSample",
    "MITIGATION_COLUMNS",
    "MitigationEstimate",
    "PlugIn",
    "STRATEGIES",
    "draw_active",
    "draw_low_confidence",
    "draw_random",
    "estimate_cdi",
    "estimate_dsl",
    "estimate_gt_only",
    "estimate_plugin",
    "fit_error_learner",
    "low_confidence_pi",
    "run_strategy",
    "sample_accuracy",
    "sample_active",
    "sample_low_confidence",
    "sample_random",
    "select_model",
]
