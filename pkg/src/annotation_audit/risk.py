"""Error taxonomy and the risk, discovery and feasibility aggregates.

An *outcome* is one ``(task, hypothesis, config)`` cell: the ground-truth
regression for the hypothesis, the regression on one configuration's
annotations, and the resulting classification.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import ValidationError
from .inference import RegressionResult

KINDS = ("correct_null", "correct_alt", "type_I", "type_II", "type_S")
ERROR_KINDS = ("type_I", "type_II", "type_S")
DEFAULT_P_EDGES = tuple(np.linspace(0.0, 1.0, 21))


@dataclass(frozen=True)
class OutcomeClassification:
    kind: str
    type_m_ratio: Optional[float] = None
    flagged: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown outcome kind {self.kind!r}")


def classify_outcome(gt: RegressionResult, llm: RegressionResult) -> OutcomeClassification:
    """Place an LLM-based regression against its ground-truth counterpart.

    Degenerate fits are never significant. For ``correct_alt`` cells the
    magnitude error ``| |dp_llm| / |dp_gt| - 1 |`` is attached, unless the
    ground-truth difference is exactly zero, in which case the cell is
    flagged and carries no ratio.
    """
    if gt.alpha != llm.alpha:
        raise ValidationError("ground-truth and LLM results use different alpha")
    s_gt = gt.significant and not gt.degenerate
    s_llm = llm.significant and not llm.degenerate
    if not s_gt:
        return OutcomeClassification("type_I" if s_llm else "correct_null")
    if not s_llm:
        return OutcomeClassification("type_II")
    if gt.sign != llm.sign:
        return OutcomeClassification("type_S")
    if gt.delta_p == 0:
        return OutcomeClassification("correct_alt", None, flagged=True)
    return OutcomeClassification("correct_alt", abs(abs(llm.delta_p) / abs(gt.delta_p) - 1.0))


@dataclass(frozen=True)
class Outcome:
    """One audited cell; ``gt_p`` and ``llm_p`` feed the binned variants."""

    task_id: str
    hypothesis_id: str
    config_id: str
    gt_significant: bool
    kind: str
    type_m_ratio: Optional[float] = None
    gt_p: float = math.nan
    llm_p: float = math.nan
    llm_degenerate: bool = False
    scope: str = ""

    @classmethod
    def from_results(cls, task_id, hypothesis_id, config_id, gt, llm, scope=""):
        c = classify_outcome(gt, llm)
        return cls(
            task_id,
            hypothesis_id,
            config_id,
            bool(gt.significant and not gt.degenerate),
            c.kind,
            c.type_m_ratio,
            gt.p_value,
            llm.p_value,
            llm.degenerate,
            scope,
        )


def _mean(values):
    return float(np.mean(values)) if values else None


@dataclass
class RiskReport:
    scope: str
    type_i_risk: Optional[float]
    type_ii_risk: Optional[float]
    type_s_risk: Optional[float]
    llm_hacking_risk: Optional[float]
    type_m_risk: Optional[float]
    fdr: Optional[float]
    fnr: Optional[float]
    type_s_error_rate: Optional[float]
    counts: dict = field(default_factory=dict)

    def row(self):
        out = {
            "scope": self.scope,
            "type_i_risk": self.type_i_risk,
            "type_ii_risk": self.type_ii_risk,
            "type_s_risk": self.type_s_risk,
            "llm_hacking_risk": self.llm_hacking_risk,
            "type_m_risk": self.type_m_risk,
            "fdr": self.fdr,
            "fnr": self.fnr,
            "type_s_error_rate": self.type_s_error_rate,
        }
        out.update(self.counts)
        return out


RISK_COLUMNS = (
    "scope",
    "type_i_risk",
    "type_ii_risk",
    "type_s_risk",
    "llm_hacking_risk",
    "type_m_risk",
    "fdr",
    "fnr",
    "type_s_error_rate",
    "n_tasks",
    "n_null_hypotheses",
    "n_alt_hypotheses",
    "n_cells",
    "n_type_i",
    "n_type_ii",
    "n_type_s",
    "n_correct_null",
    "n_correct_alt",
    "n_degenerate_llm",
    "n_type_m_flagged",
    "tasks_without_null",
    "tasks_without_alt",
    "tasks_without_type_m",
)


def _nest(outcomes):
    """task -> hypothesis -> list of outcomes (insertion ordered)."""
    tree = defaultdict(lambda: defaultdict(list))
    for o in outcomes:
        tree[o.task_id][o.hypothesis_id].append(o)
    for cells in tree.values():
        for hid, rows in cells.items():
            gts = {o.gt_significant for o in rows}
            if len(gts) != 1:
                raise ValidationError(f"hypothesis {hid!r} has inconsistent ground-truth significance")
    return tree


def _task_macro(tree, null, indicator):
    """Mean over configs, then hypotheses of one partition, then tasks."""
    per_task = []
    skipped = 0
    for cells in tree.values():
        hyp_means = [
            float(np.mean([indicator(o) for o in rows]))
            for rows in cells.values()
            if rows[0].gt_significant != null
        ]
        if hyp_means:
            per_task.append(float(np.mean(hyp_means)))
        else:
            skipped += 1
    return _mean(per_task), skipped


def _type_m(tree):
    per_task = []
    skipped = 0
    for cells in tree.values():
        ratios = [o.type_m_ratio for rows in cells.values() for o in rows if o.type_m_ratio is not None]
        if ratios:
            per_task.append(sum(ratios) / len(ratios))
        else:
            skipped += 1
    return _mean(per_task), skipped


def _ratio(num, den):
    return num / den if den else None


def discovery_rates(outcomes, p_edges=None):
    """Pooled FDR, FNR and sign-error rate; with ``p_edges``, also per LLM-p bin.

    Returns ``{"fdr": ..., "fnr": ..., "type_s_error_rate": ..., "bins": [...]}``;
    a rate with an empty denominator is ``None``.
    """
    outcomes = list(outcomes)

    def rates(rows):
        kinds = [o.kind for o in rows]
        discoveries = sum(k in ("type_I", "correct_alt", "type_S") for k in kinds)
        non_disc = sum(k in ("correct_null", "type_II") for k in kinds)
        true_disc = sum(k in ("correct_alt", "type_S") for k in kinds)
        return {
            "fdr": _ratio(kinds.count("type_I"), discoveries),
            "fnr": _ratio(kinds.count("type_II"), non_disc),
            "type_s_error_rate": _ratio(kinds.count("type_S"), true_disc),
            "n_discoveries": discoveries,
            "n_non_discoveries": non_disc,
            "n_true_discoveries": true_disc,
        }

    out = rates(outcomes)
    if p_edges is not None:
        out["bins"] = [
            {"p_low": lo, "p_high": hi, **rates([o for o in outcomes if _in_bin(o.llm_p, lo, hi, p_edges)])}
            for lo, hi in zip(p_edges[:-1], p_edges[1:])
        ]
    return out


def _in_bin(p, lo, hi, edges):
    # bins are [lo, hi) except the last, which is closed
    if hi == edges[-1]:
        return lo <= p <= hi
    return lo <= p < hi


def risk_report(outcomes, scope="all"):
    """Aggregate one scope's outcomes into the risk metrics.

    Type I/II/S risks average over configurations, then over the null (or
    alternative) hypotheses of a task, then over tasks. Tasks without null
    (alternative) hypotheses are skipped for the corresponding risk and
    counted. The Type M risk is a within-task mean of magnitude ratios over
    ``correct_alt`` cells, then a mean over tasks.
    """
    outcomes = list(outcomes)
    tree = _nest(outcomes)
    t1, no_null = _task_macro(tree, True, lambda o: o.kind == "type_I")
    t2, no_alt = _task_macro(tree, False, lambda o: o.kind == "type_II")
    ts, _ = _task_macro(tree, False, lambda o: o.kind == "type_S")
    tm, no_m = _type_m(tree)
    hacking = None if None in (t1, t2, ts) else (t1 + t2 + ts) / 2
    disc = discovery_rates(outcomes)
    kinds = [o.kind for o in outcomes]
    hyps = {(o.task_id, o.hypothesis_id): o.gt_significant for o in outcomes}
    counts = {
        "n_tasks": len(tree),
        "n_null_hypotheses": sum(not s for s in hyps.values()),
        "n_alt_hypotheses": sum(hyps.values()),
        "n_cells": len(outcomes),
        "n_type_i": kinds.count("type_I"),
        "n_type_ii": kinds.count("type_II"),
        "n_type_s": kinds.count("type_S"),
        "n_correct_null": kinds.count("correct_null"),
        "n_correct_alt": kinds.count("correct_alt"),
        "n_degenerate_llm": sum(o.llm_degenerate for o in outcomes),
        "n_type_m_flagged": sum(o.kind == "correct_alt" and o.type_m_ratio is None for o in outcomes),
        "tasks_without_null": no_null,
        "tasks_without_alt": no_alt,
        "tasks_without_type_m": no_m,
    }
    return RiskReport(scope, t1, t2, ts, hacking, tm, disc["fdr"], disc["fnr"], disc["type_s_error_rate"], counts)


def risk_reports_by(outcomes, key):
    """One ``RiskReport`` per value of ``key(outcome)``, sorted by scope."""
    groups = defaultdict(list)
    for o in outcomes:
        groups[key(o)].append(o)
    return [risk_report(groups[k], scope=str(k)) for k in sorted(groups)]


def p_binned_risks(outcomes, p_edges=DEFAULT_P_EDGES):
    """Risks within bins of the ground-truth p-value.

    Each bin reports the Type I/II/S risks over the hypotheses whose
    ground-truth p falls in it (``None`` where the partition is empty) and
    ``flip_rate``, the pooled share of cells whose conclusion differs from
    the ground truth.
    """
    outcomes = list(outcomes)
    rows = []
    for lo, hi in zip(p_edges[:-1], p_edges[1:]):
        members = [o for o in outcomes if _in_bin(o.gt_p, lo, hi, p_edges)]
        if members:
            rep = risk_report(members)
            t1, t2, ts = rep.type_i_risk, rep.type_ii_risk, rep.type_s_risk
            flip = sum(o.kind in ERROR_KINDS for o in members) / len(members)
        else:
            t1 = t2 = ts = flip = None
        rows.append(
            {
                "p_low": float(lo),
                "p_high": float(hi),
                "type_i_risk": t1,
                "type_ii_risk": t2,
                "type_s_risk": ts,
                "flip_rate": flip,
                "n_cells": len(members),
                "n_hypotheses": len({(o.task_id, o.hypothesis_id) for o in members}),
            }
        )
    return rows


@dataclass
class FeasibilityReport:
    flags: list
    per_task: dict
    rates: dict


FEASIBILITY_FLAGS = ("type_i_feasible", "type_ii_feasible", "type_s_feasible", "h0_correct_feasible", "ha_correct_feasible")
FEASIBILITY_RATES = (
    "type_i_feasibility_rate",
    "type_ii_feasibility_rate",
    "type_s_feasibility_rate",
    "h0_correctness_feasibility_rate",
    "ha_correctness_feasibility_rate",
)


def feasibility_report(outcomes, restrict_configs=None):
    """Existence-over-configurations flags per hypothesis and their rates.

    A flag is ``None`` when it does not apply to the hypothesis (Type I and
    H0-correctness apply to null hypotheses, the others to alternatives).
    Rates are means of the applicable flags within a task, then across
    tasks. ``restrict_configs`` limits the configuration set considered.
    """
    outcomes = list(outcomes)
    if restrict_configs is not None:
        allowed = set(restrict_configs)
        outcomes = [o for o in outcomes if o.config_id in allowed]
    tree = _nest(outcomes)
    flags = []
    per_task = {}
    for task_id, cells in tree.items():
        task_flags = []
        for hid, rows in cells.items():
            kinds = {o.kind for o in rows}
            null = not rows[0].gt_significant
            f = {
                "task_id": task_id,
                "hypothesis_id": hid,
                "null": null,
                "n_configs": len(rows),
                "type_i_feasible": ("type_I" in kinds) if null else None,
                "h0_correct_feasible": ("correct_null" in kinds) if null else None,
                "type_ii_feasible": None if null else "type_II" in kinds,
                "type_s_feasible": None if null else "type_S" in kinds,
                "ha_correct_feasible": None if null else "correct_alt" in kinds,
            }
            flags.append(f)
            task_flags.append(f)
        per_task[task_id] = {
            rate: _mean([float(f[flag]) for f in task_flags if f[flag] is not None])
            for rate, flag in zip(FEASIBILITY_RATES, FEASIBILITY_FLAGS)
        }
    rates = {}
    for rate in FEASIBILITY_RATES:
        vals = [r[rate] for r in per_task.values() if r[rate] is not None]
        rates[rate] = _mean(vals)
    return FeasibilityReport(flags, per_task, rates)
