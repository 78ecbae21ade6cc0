"""Tasks, configurations and annotation records."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .exceptions import ValidationError
from .seeding import derive_rng

AGGREGATION_RULES = ("majority", "unanimity")
_PLACEHOLDER = "{text}"


@dataclass(frozen=True)
class Datapoint:
    datapoint_id: str
    text: str
    metadata: dict = field(default_factory=dict)
    gt_label: Optional[str] = None
    raw_annotations: Optional[tuple] = None

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text:
            raise ValidationError(f"datapoint {self.datapoint_id!r}: text must be a non-empty string")
        if self.raw_annotations is not None:
            object.__setattr__(
                self, "raw_annotations", tuple((str(a), str(c)) for a, c in self.raw_annotations)
            )

    def field_value(self, name):
        """Look up ``gt_label`` or a metadata field (``metadata.x`` or bare ``x``)."""
        if name == "gt_label":
            return self.gt_label
        if name.startswith("metadata."):
            name = name[len("metadata."):]
        return self.metadata.get(name)


def aggregate_ground_truth(raw, rule="majority", label_set=None):
    """Collapse per-annotator labels into one ground-truth label.

    Returns ``None`` when the rule does not produce a label (majority tie,
    disagreement under unanimity); such datapoints are left out of audits.
    """
    if not raw:
        raise ValidationError("raw annotations must be non-empty")
    if rule not in AGGREGATION_RULES:
        raise ValidationError(f"unknown aggregation rule {rule!r}")
    labels = [c for _, c in raw]
    if label_set is not None:
        unknown = sorted(set(labels) - set(label_set))
        if unknown:
            raise ValidationError(f"unknown categories in raw annotations: {unknown}")
    counts = Counter(labels)
    if rule == "unanimity":
        return labels[0] if len(counts) == 1 else None
    ranked = counts.most_common()
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return None
    return ranked[0][0]


@dataclass(frozen=True)
class AnnotationTask:
    task_id: str
    label_set: tuple
    datapoints: tuple
    notes: str = ""
    aggregation_rule: str = "majority"

    def __post_init__(self):
        object.__setattr__(self, "label_set", tuple(self.label_set))
        object.__setattr__(self, "datapoints", tuple(self.datapoints))
        if len(self.label_set) < 2 or len(set(self.label_set)) != len(self.label_set):
            raise ValidationError(f"task {self.task_id!r}: label_set needs >= 2 distinct labels")
        if self.aggregation_rule not in AGGREGATION_RULES:
            raise ValidationError(f"task {self.task_id!r}: unknown aggregation rule")
        seen = set()
        labels = set(self.label_set)
        for dp in self.datapoints:
            if dp.datapoint_id in seen:
                raise ValidationError(f"task {self.task_id!r}: duplicate datapoint id {dp.datapoint_id!r}")
            seen.add(dp.datapoint_id)
            if dp.gt_label is not None and dp.gt_label not in labels:
                raise ValidationError(
                    f"datapoint {dp.datapoint_id!r}: gt_label {dp.gt_label!r} not in label_set"
                )
            if dp.raw_annotations:
                derived = aggregate_ground_truth(dp.raw_annotations, self.aggregation_rule, self.label_set)
                if dp.gt_label is not None and derived != dp.gt_label:
                    raise ValidationError(
                        f"datapoint {dp.datapoint_id!r}: gt_label does not follow from raw_annotations"
                    )

    @property
    def included(self):
        """Datapoints with a ground-truth label, i.e. the ones that get audited."""
        return tuple(dp for dp in self.datapoints if dp.gt_label is not None)

    def by_id(self):
        return {dp.datapoint_id: dp for dp in self.datapoints}

    def with_datapoints(self, datapoints):
        return replace(self, datapoints=tuple(datapoints))

    @classmethod
    def from_dict(cls, data):
        rule = data.get("aggregation_rule", "majority")
        label_set = tuple(data["label_set"])
        dps = []
        for i, raw in enumerate(data["datapoints"]):
            try:
                ann = raw.get("raw_annotations")
                gt = raw.get("gt_label")
                if ann and gt is None:
                    gt = aggregate_ground_truth([tuple(a) for a in ann], rule, label_set)
                dps.append(
                    Datapoint(
                        datapoint_id=str(raw["datapoint_id"]),
                        text=raw["text"],
                        metadata={str(k): str(v) for k, v in (raw.get("metadata") or {}).items()},
                        gt_label=gt,
                        raw_annotations=[tuple(a) for a in ann] if ann else None,
                    )
                )
            except KeyError as exc:
                raise ValidationError(f"datapoints[{i}]: missing field {exc.args[0]!r}") from None
            except ValidationError as exc:
                raise ValidationError(f"datapoints[{i}]: {exc}") from None
        return cls(
            task_id=str(data["task_id"]),
            label_set=label_set,
            datapoints=dps,
            notes=data.get("notes", ""),
            aggregation_rule=rule,
        )

    def to_dict(self):
        out = {
            "task_id": self.task_id,
            "label_set": list(self.label_set),
            "aggregation_rule": self.aggregation_rule,
            "notes": self.notes,
            "datapoints": [],
        }
        for dp in self.datapoints:
            d = {
                "datapoint_id": dp.datapoint_id,
                "text": dp.text,
                "metadata": dict(dp.metadata),
                "gt_label": dp.gt_label,
            }
            if dp.raw_annotations is not None:
                d["raw_annotations"] = [list(a) for a in dp.raw_annotations]
            out["datapoints"].append(d)
        return out


def dedupe_texts(task):
    """Drop datapoints whose text exactly repeats an earlier datapoint's text."""
    seen = set()
    kept = []
    for dp in task.datapoints:
        if dp.text in seen:
            continue
        seen.add(dp.text)
        kept.append(dp)
    return task.with_datapoints(kept)


def subsample_stratified(task, max_n, strata=("gt_label",), seed=0):
    """Draw a proportionally allocated stratified subsample.

    Cells are formed by the joint values of ``strata`` (``gt_label`` or
    metadata field names). Each cell receives the floor of its proportional
    share and the remaining slots go to the cells with the largest
    fractional remainders, so every cell is within one datapoint of exact
    proportionality. Order of the original task is preserved.
    """
    dps = task.datapoints
    if not dps:
        raise ValidationError(f"task {task.task_id!r} is empty")
    n = len(dps)
    if max_n >= n:
        return task
    cells = {}
    for i, dp in enumerate(dps):
        key = tuple("" if dp.field_value(s) is None else str(dp.field_value(s)) for s in strata)
        cells.setdefault(key, []).append(i)
    if max_n < len(cells):
        raise ValidationError(f"max_n={max_n} is smaller than the number of strata cells ({len(cells)})")
    keys = sorted(cells)
    quotas = np.array([len(cells[k]) * max_n / n for k in keys])
    alloc = np.floor(quotas).astype(int)
    remainder = quotas - alloc
    # largest remainders first; ties resolved by cell order for determinism
    order = sorted(range(len(keys)), key=lambda j: (-remainder[j], j))
    for j in order[: max_n - alloc.sum()]:
        alloc[j] += 1
    rng = derive_rng(seed, "subsample", task.task_id)
    chosen = []
    for k, m in zip(keys, alloc):
        members = cells[k]
        pick = rng.choice(len(members), size=int(m), replace=False)
        chosen.extend(members[p] for p in pick)
    chosen.sort()
    return task.with_datapoints(dps[i] for i in chosen)


@dataclass(frozen=True)
class LlmConfig:
    config_id: str
    model_name: str
    endpoint_ref: str
    prompt_template: str
    output_mapping: tuple
    prompt_kind: str = "zero_shot"
    prompt_detail: str = "brief"
    temperature: float = 0.0
    max_tokens: int = 20
    confidence_template: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "output_mapping", tuple((str(p), str(lab)) for p, lab in self.output_mapping))
        if self.prompt_template.count(_PLACEHOLDER) != 1:
            raise ValidationError(f"config {self.config_id!r}: prompt_template must contain {{text}} exactly once")
        if not self.output_mapping:
            raise ValidationError(f"config {self.config_id!r}: output_mapping is empty")
        for pattern, _ in self.output_mapping:
            try:
                re.compile(pattern)
            except re.error as exc:
                raise ValidationError(f"config {self.config_id!r}: bad pattern {pattern!r}: {exc}") from None
        if self.prompt_kind not in ("zero_shot", "few_shot"):
            raise ValidationError(f"config {self.config_id!r}: prompt_kind must be zero_shot or few_shot")
        if self.prompt_detail not in ("brief", "detailed"):
            raise ValidationError(f"config {self.config_id!r}: prompt_detail must be brief or detailed")
        if not self.temperature >= 0:
            raise ValidationError(f"config {self.config_id!r}: temperature must be >= 0")
        if int(self.max_tokens) < 1:
            raise ValidationError(f"config {self.config_id!r}: max_tokens must be >= 1")

    def check_labels(self, label_set):
        bad = [lab for _, lab in self.output_mapping if lab not in label_set]
        if bad:
            raise ValidationError(f"config {self.config_id!r}: mapping labels {bad} not in label_set")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["output_mapping"] = [tuple(m) for m in data["output_mapping"]]
        return cls(**data)

    def to_dict(self):
        d = asdict(self)
        d["output_mapping"] = [list(m) for m in self.output_mapping]
        return d


@dataclass(frozen=True)
class AnnotationRecord:
    task_id: str
    datapoint_id: str
    config_id: str
    raw_output: str
    mapped_label: Optional[str]
    is_na: bool
    confidence: Optional[float] = None
    timestamp: str = ""

    def __post_init__(self):
        if self.is_na != (self.mapped_label is None):
            raise ValidationError(
                f"record {self.key}: is_na must be true exactly when mapped_label is absent"
            )
        if self.confidence is not None:
            c = float(self.confidence)
            if math.isnan(c) or not 0.0 <= c <= 1.0:
                raise ValidationError(f"record {self.key}: confidence must lie in [0, 1]")

    @property
    def key(self):
        return (self.task_id, self.datapoint_id, self.config_id)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(
            task_id=str(data["task_id"]),
            datapoint_id=str(data["datapoint_id"]),
            config_id=str(data["config_id"]),
            raw_output=data["raw_output"],
            mapped_label=data["mapped_label"],
            is_na=bool(data["is_na"]),
            confidence=data.get("confidence"),
            timestamp=data.get("timestamp", ""),
        )
