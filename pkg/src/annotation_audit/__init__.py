"""Measure how often conclusions drawn from LLM annotations differ from ground truth."""

from .audit import AuditResult, emit_multiverse, run_audit
from .client import AnnotationClient, EndpointConfig, annotate, elicit_confidence, map_output, render_prompt
from .exceptions import AuthenticationError, EstimationError, StoreFormatError, ValidationError
from .hypotheses import (
    Hypothesis,
    binarize,
    gen_keyword_groupings,
    gen_length_grouping,
    gen_metadata_groupings,
    gen_random_groupings,
    generate_all,
)
from .inference import RegressionResult, fit_logistic, two_prop_ztest
from .model import AnnotationRecord, AnnotationTask, Datapoint, LlmConfig, subsample_stratified
from .quality import krippendorff_alpha, na_filter, weighted_f1
from .risk import classify_outcome, discovery_rates, feasibility_report, p_binned_risks, risk_report
from .simulator import ConfusionSpec, Scenario, estimate_alpha_from_agreement, monte_carlo_risk
from .store import AnnotationStore, load_annotations, store_annotations

__version__ = "0.1.0"

__all__ = [
    "AnnotationClient",
    "AnnotationRecord",
    "AnnotationStore",
    "AnnotationTask",
    "AuditResult",
    "AuthenticationError",
    "ConfusionSpec",
    "Datapoint",
    "EndpointConfig",
    "EstimationError",
    "Hypothesis",
    "LlmConfig",
    "RegressionResult",
    "Scenario",
    "StoreFormatError",
    "ValidationError",
    "annotate",
    "binarize",
    "classify_outcome",
    "discovery_rates",
    "elicit_confidence",
    "emit_multiverse",
    "estimate_alpha_from_agreement",
    "feasibility_report",
    "fit_logistic",
    "gen_keyword_groupings",
    "gen_length_grouping",
    "gen_metadata_groupings",
    "gen_random_groupings",
    "generate_all",
    "krippendorff_alpha",
    "load_annotations",
    "map_output",
    "monte_carlo_risk",
    "na_filter",
    "p_binned_risks",
    "render_prompt",
    "risk_report",
    "run_audit",
    "store_annotations",
    "subsample_stratified",
    "two_prop_ztest",
    "weighted_f1",
]
