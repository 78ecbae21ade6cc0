"""The nine human-sample strategies and their task-level entry points."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import EstimationError, ValidationError
from ..inference import RegressionResult, result_from_estimate
from ..seeding import derive_rng
from .estimators import CDI, DSL, GroundTruthOnly, PlugIn
from .sampling import sample_active, sample_low_confidence, sample_random

# strategy -> (sampling, data usage)
STRATEGIES = {
    "M1": ("random", "gt_only"),
    "M2": ("random", "plugin"),
    "M3": ("random", "dsl"),
    "M4": ("low_confidence", "gt_only"),
    "M5": ("low_confidence", "plugin"),
    "M6": ("low_confidence", "dsl"),
    "M7": ("active", "gt_only"),
    "M8": ("active", "plugin"),
    "M9": ("active", "cdi"),
}
MODEL_SELECTIONS = ("random", "fixed_default", "best_performing")
MITIGATION_COLUMNS = (
    "strategy_id",
    "budget",
    "model_selection",
    "beta",
    "se",
    "p",
    "significant",
    "lambda",
    "folds",
    "splits",
    "fallback_used",
    "hypothesis_id",
    "config_id",
    "degenerate",
    "error",
)


@dataclass
class MitigationEstimate:
    strategy_id: str
    model_selection: str
    result: RegressionResult
    diagnostics: dict = field(default_factory=dict)
    config_id: str = ""
    hypothesis_id: str = ""
    budget: int = 0

    def row(self):
        d = self.diagnostics
        return {
            "strategy_id": self.strategy_id,
            "budget": self.budget,
            "model_selection": self.model_selection,
            "beta": self.result.beta,
            "se": self.result.se,
            "p": self.result.p_value,
            "significant": self.result.significant,
            "lambda": d.get("lambda"),
            "folds": d.get("folds"),
            "splits": d.get("splits"),
            "fallback_used": d.get("fallback_used", False),
            "hypothesis_id": self.hypothesis_id,
            "config_id": self.config_id,
            "degenerate": self.result.degenerate,
            "error": d.get("error", ""),
        }


def _llm_by_id(records):
    return {r.datapoint_id: r for r in records}


def hypothesis_arrays(sample, hypothesis, records=None):
    """Row-aligned ``(ids, x, y, pi, llm, confidence)`` for one hypothesis."""
    ids = [i for i in sample.ids if i in hypothesis.x_assignment]
    if len(ids) != len(hypothesis.x_assignment):
        raise ValidationError(f"hypothesis {hypothesis.hypothesis_id!r} covers ids outside the sample population")
    target = hypothesis.target_label
    x = hypothesis.x_for(ids)
    y = np.array([float(sample.gt[i] == target) if i in sample.gt else np.nan for i in ids])
    pi = sample.pi_array(ids)
    llm = conf = None
    if records is not None:
        by_id = _llm_by_id(records)
        llm = np.array(
            [
                np.nan if by_id.get(i) is None or by_id[i].mapped_label is None else float(by_id[i].mapped_label == target)
                for i in ids
            ]
        )
        conf = np.array(
            [np.nan if by_id.get(i) is None or by_id[i].confidence is None else by_id[i].confidence for i in ids]
        )
    return ids, x, y, pi, llm, conf


def estimate_gt_only(sample, hypothesis, alpha=0.05):
    _, x, y, pi, _, _ = hypothesis_arrays(sample, hypothesis)
    est = GroundTruthOnly(alpha=alpha).fit(x, y, pi)
    return MitigationEstimate("", "", est.result_, {"fallback_used": False}, hypothesis_id=hypothesis.hypothesis_id)


def estimate_plugin(sample, records, hypothesis, alpha=0.05):
    _, x, y, _, llm, _ = hypothesis_arrays(sample, hypothesis, records)
    est = PlugIn(alpha=alpha).fit(x, y, llm)
    return MitigationEstimate("", "", est.result_, {"fallback_used": False}, hypothesis_id=hypothesis.hypothesis_id)


def estimate_dsl(sample, records, hypothesis, n_folds=5, n_splits=10, alpha=0.05, seed=0, learner="logistic"):
    _, x, y, pi, llm, conf = hypothesis_arrays(sample, hypothesis, records)
    est = DSL(n_folds=n_folds, n_splits=n_splits, alpha=alpha, random_state=seed, learner=learner).fit(x, y, pi, llm, conf)
    diag = {"folds": est.folds_, "splits": est.splits_, "fallback_used": est.fallback_used_}
    return MitigationEstimate("", "", est.result_, diag, hypothesis_id=hypothesis.hypothesis_id)


def estimate_cdi(sample, records, hypothesis, alpha=0.05, lam=None):
    _, x, y, pi, llm, _ = hypothesis_arrays(sample, hypothesis, records)
    est = CDI(lam=lam, alpha=alpha).fit(x, y, pi, llm)
    diag = {"lambda": est.lambda_, "fallback_used": est.fallback_used_}
    return MitigationEstimate("", "", est.result_, diag, hypothesis_id=hypothesis.hypothesis_id)


def sample_accuracy(sample, records):
    """Share of labelled datapoints whose LLM label equals the human label (NA counts as wrong)."""
    by_id = _llm_by_id(records)
    if not sample.labeled:
        raise ValidationError("empty labelled sample")
    hits = sum(by_id.get(i) is not None and by_id[i].mapped_label == sample.gt[i] for i in sample.labeled)
    return hits / len(sample.labeled)


def select_model(strategy, candidates, sample=None, records_by_config=None, priority=(), default=None, seed=0):
    """Pick one configuration id from ``candidates``.

    ``random`` draws uniformly with a seeded generator; ``fixed_default``
    returns ``default``; ``best_performing`` maximises accuracy on the
    labelled sample, breaking ties by position in ``priority`` (unlisted
    candidates rank after listed ones, in candidate order).
    """
    candidates = list(candidates)
    if not candidates:
        raise ValidationError("no candidate configurations")
    if strategy == "random":
        return candidates[int(derive_rng(seed, "select_model").integers(len(candidates)))]
    if strategy == "fixed_default":
        if default not in candidates:
            raise ValidationError(f"default configuration {default!r} is not a candidate")
        return default
    if strategy == "best_performing":
        if sample is None or not sample.labeled:
            raise ValidationError("best_performing selection needs a labelled sample")
        rank = {c: i for i, c in enumerate(priority)}
        scored = [
            (-sample_accuracy(sample, records_by_config[c]), rank.get(c, len(rank) + pos), c)
            for pos, c in enumerate(candidates)
        ]
        return min(scored)[2]
    raise ValidationError(f"unknown model selection strategy {strategy!r}")


def draw_sample(sampling, task, records, n_human, seed, hypothesis=None):
    if sampling == "random":
        return sample_random(task, n_human, seed)
    if sampling == "low_confidence":
        return sample_low_confidence(task, records, n_human)
    if sampling == "active":
        x = None if hypothesis is None else hypothesis.x_assignment
        return sample_active(task, records, n_human, seed, x=x)
    raise ValidationError(f"unknown sampling strategy {sampling!r}")


def run_strategy(
    strategy_id,
    task,
    hypothesis,
    records_by_config,
    n_human,
    model_selection="fixed_default",
    default_config=None,
    priority=(),
    seed=0,
    alpha=0.05,
):
    """Run one of M1-M9 for one hypothesis.

    Low-confidence and active sampling read the confidences and labels of
    ``default_config``. Model selection applies only to strategies that use
    LLM annotations; estimation failures are reported in the diagnostics
    as a degenerate result rather than raised.
    """
    if strategy_id not in STRATEGIES:
        raise ValidationError(f"unknown strategy {strategy_id!r}")
    sampling, usage = STRATEGIES[strategy_id]
    configs = sorted(records_by_config)
    default_config = default_config or (priority[0] if priority else configs[0])
    if default_config not in records_by_config:
        raise ValidationError(f"default configuration {default_config!r} has no annotations")
    sample = draw_sample(sampling, task, records_by_config[default_config], n_human, seed, hypothesis)
    if usage == "gt_only":
        chosen, selection = "", "n/a"
    else:
        chosen = select_model(model_selection, configs, sample, records_by_config, priority, default_config, seed)
        selection = model_selection
    records = records_by_config.get(chosen)
    try:
        if usage == "gt_only":
            est = estimate_gt_only(sample, hypothesis, alpha)
        elif usage == "plugin":
            est = estimate_plugin(sample, records, hypothesis, alpha)
        elif usage == "dsl":
            est = estimate_dsl(sample, records, hypothesis, alpha=alpha, seed=seed)
        else:
            est = estimate_cdi(sample, records, hypothesis, alpha)
    except EstimationError as exc:
        n1 = sum(hypothesis.x_assignment.values())
        est = MitigationEstimate(
            "",
            "",
            result_from_estimate(math.nan, math.nan, alpha, math.nan, len(hypothesis.x_assignment) - n1, n1),
            {"fallback_used": True, "error": str(exc)},
        )
    est.strategy_id = strategy_id
    est.model_selection = selection
    est.config_id = chosen
    est.hypothesis_id = hypothesis.hypothesis_id
    est.budget = n_human
    return est
