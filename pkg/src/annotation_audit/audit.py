"""Audit pipeline: regressions on ground truth versus each configuration's labels."""

from __future__ import annotations

import math
import statistics
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError
from .inference import RegressionResult, fit_logistic
from .quality import NA_THRESHOLD, performance_record
from .risk import Outcome

_RESULT_FIELDS = tuple(RegressionResult.__dataclass_fields__)
OUTCOME_COLUMNS = (
    "task_id",
    "hypothesis_id",
    "config_id",
    "kind",
    "type_m_ratio",
    "gt_significant",
    *("gt_" + f for f in _RESULT_FIELDS if f != "significant"),
    "llm_significant",
    *("llm_" + f for f in _RESULT_FIELDS if f != "significant"),
    "n_pairs",
)
MULTIVERSE_COLUMNS = ("hypothesis_id", "config_id", "beta", "p", "significant", "sign", "delta_p", "weighted_f1", "kind")
MULTIVERSE_SUMMARY_COLUMNS = (
    "hypothesis_id",
    "n_configs",
    "share_significant",
    "share_positive",
    "share_negative",
    "share_zero",
    "min_p",
    "median_p",
    "max_p",
)


@dataclass
class AuditResult:
    outcomes: list
    rows: list
    performance: list
    exclusions: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def summary(self):
        return {
            "n_outcomes": len(self.rows),
            "n_hypotheses": len({(r["task_id"], r["hypothesis_id"]) for r in self.rows}),
            "excluded_configs": self.exclusions,
            "skipped_hypotheses": self.skipped,
        }


def _row(task_id, hyp_id, config_id, outcome, gt, llm, n_pairs):
    row = {"task_id": task_id, "hypothesis_id": hyp_id, "config_id": config_id, "kind": outcome.kind,
           "type_m_ratio": outcome.type_m_ratio, "n_pairs": n_pairs}
    row.update(gt.to_dict("gt_"))
    row.update(llm.to_dict("llm_"))
    return row


def run_audit(tasks, hypotheses, records, alpha=0.05, restrict_configs=None, threshold=NA_THRESHOLD):
    """Audit every (hypothesis, configuration) cell.

    ``tasks`` maps task ids to tasks; ``records`` is any iterable of
    annotation records. A missing record counts as NA. Configurations whose
    NA share on a task exceeds ``threshold`` are excluded from that task's
    cells and listed in ``exclusions``. LLM regressions use the datapoints
    with a non-NA label only.
    """
    by_task = defaultdict(lambda: defaultdict(dict))
    for r in records:
        if restrict_configs is None or r.config_id in restrict_configs:
            by_task[r.task_id][r.config_id][r.datapoint_id] = r
    hyps_by_task = defaultdict(list)
    for h in hypotheses:
        if h.task_id not in tasks:
            raise ValidationError(f"hypothesis {h.hypothesis_id!r} references unknown task {h.task_id!r}")
        hyps_by_task[h.task_id].append(h)

    outcomes, rows, performance, exclusions, skipped = [], [], [], [], []
    for task_id in sorted(tasks):
        task = tasks[task_id]
        gt_by_id = {dp.datapoint_id: dp.gt_label for dp in task.included}
        ids = list(gt_by_id)
        kept = []
        for config_id in sorted(by_task.get(task_id, {})):
            recs = by_task[task_id][config_id]
            pred = [recs[i].mapped_label if i in recs else None for i in ids]
            perf = performance_record(task_id, config_id, pred, [gt_by_id[i] for i in ids], threshold)
            performance.append(perf)
            if perf.excluded:
                exclusions.append({"task_id": task_id, "config_id": config_id, "na_fraction": perf.na_fraction})
            else:
                kept.append(config_id)
        for h in sorted(hyps_by_task.get(task_id, []), key=lambda h: h.hypothesis_id):
            hids = [i for i in ids if i in h.x_assignment]
            x = np.array([h.x_assignment[i] for i in hids])
            y = np.array([gt_by_id[i] == h.target_label for i in hids], dtype=int)
            try:
                gt = fit_logistic(y, x, alpha)
            except ValidationError as exc:
                skipped.append({"task_id": task_id, "hypothesis_id": h.hypothesis_id, "reason": str(exc)})
                continue
            for config_id in kept:
                recs = by_task[task_id][config_id]
                pairs = [(recs[i].mapped_label == h.target_label, g) for i, g in zip(hids, x)
                         if i in recs and not recs[i].is_na]
                ly, lx = (np.array(v, dtype=int) for v in zip(*pairs)) if pairs else (np.array([]), np.array([]))
                try:
                    llm = fit_logistic(ly, lx, alpha)
                except ValidationError as exc:
                    skipped.append({"task_id": task_id, "hypothesis_id": h.hypothesis_id,
                                    "config_id": config_id, "reason": str(exc)})
                    continue
                o = Outcome.from_results(task_id, h.hypothesis_id, config_id, gt, llm)
                outcomes.append(o)
                rows.append(_row(task_id, h.hypothesis_id, config_id, o, gt, llm, len(pairs)))
    return AuditResult(outcomes, rows, performance, exclusions, skipped)


def _parse(value, kind):
    if value is None or value == "":
        return None
    if kind is bool:
        if value in (True, False):
            return value
        if value not in ("true", "false"):
            raise ValidationError(f"expected true/false, got {value!r}")
        return value == "true"
    return kind(value)


def outcome_from_row(row):
    """Rebuild an :class:`Outcome` from an outcome CSV row (strings) or dict."""
    try:
        return Outcome(
            task_id=row["task_id"],
            hypothesis_id=row["hypothesis_id"],
            config_id=row["config_id"],
            gt_significant=_parse(row["gt_significant"], bool),
            kind=row["kind"],
            type_m_ratio=_parse(row["type_m_ratio"], float),
            gt_p=_parse(row["gt_p_value"], float),
            llm_p=_parse(row["llm_p_value"], float),
            llm_degenerate=_parse(row["llm_degenerate"], bool),
        )
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"bad outcome row: {exc}") from None


def emit_multiverse(rows, hypothesis_id, performance=None):
    """Per-configuration results for one hypothesis plus a distribution summary.

    ``rows`` are outcome rows (dicts as written by the audit); ``performance``
    optionally maps ``(task_id, config_id)`` to weighted F1. The sign of a
    cell is the sign of its LLM coefficient (of the rate difference for
    degenerate fits).
    """
    mine = [r for r in rows if r["hypothesis_id"] == hypothesis_id]
    if not mine:
        raise ValidationError(f"unknown hypothesis {hypothesis_id!r}")
    if len(mine) < 2:
        raise ValidationError(f"hypothesis {hypothesis_id!r} was audited under fewer than 2 configurations")
    performance = performance or {}
    out = []
    for r in sorted(mine, key=lambda r: r["config_id"]):
        out.append(
            {
                "hypothesis_id": hypothesis_id,
                "config_id": r["config_id"],
                "beta": _parse(r["llm_beta"], float),
                "p": _parse(r["llm_p_value"], float),
                "significant": _parse(r["llm_significant"], bool),
                "sign": int(_parse(r["llm_sign"], int)),
                "delta_p": _parse(r["llm_delta_p"], float),
                "weighted_f1": performance.get((r["task_id"], r["config_id"])),
                "kind": r["kind"],
            }
        )
    k = len(out)
    ps = [o["p"] for o in out]
    if any(math.isnan(p) for p in ps):
        raise ValidationError(f"hypothesis {hypothesis_id!r} has missing p-values")
    summary = {
        "hypothesis_id": hypothesis_id,
        "n_configs": k,
        "share_significant": sum(o["significant"] for o in out) / k,
        "share_positive": sum(o["sign"] > 0 for o in out) / k,
        "share_negative": sum(o["sign"] < 0 for o in out) / k,
        "share_zero": sum(o["sign"] == 0 for o in out) / k,
        "min_p": min(ps),
        "median_p": float(statistics.median(ps)),
        "max_p": max(ps),
    }
    return out, summary
