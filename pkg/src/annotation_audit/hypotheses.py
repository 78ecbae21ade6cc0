"""Binary groupings of a task's datapoints (the hypotheses being tested)."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .exceptions import ValidationError
from .seeding import derive_rng

MAX_KEYWORD_CLASSES = 15
MIN_METADATA_COVERAGE = 0.05
_TOKEN_SPLIT = re.compile(r"[\W_]+")


@lru_cache(maxsize=1)
def default_stopwords():
    text = resources.files("annotation_audit").joinpath("data/stopwords_en.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def tokenize(text):
    """Lowercase and split on anything that is not a letter or digit."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


@dataclass(frozen=True)
class Hypothesis:
    hypothesis_id: str
    task_id: str
    target_label: str
    rule: dict
    x_assignment: dict = field(repr=False)
    provenance: str = "generated"

    def __post_init__(self):
        values = set(self.x_assignment.values())
        if not values <= {0, 1}:
            raise ValidationError(f"hypothesis {self.hypothesis_id!r}: assignment must be 0/1")
        if values != {0, 1}:
            raise ValidationError(f"hypothesis {self.hypothesis_id!r}: both groups must be non-empty")
        if self.provenance not in ("original_metadata", "generated"):
            raise ValidationError(f"hypothesis {self.hypothesis_id!r}: unknown provenance")

    @property
    def group1(self):
        return sorted(k for k, v in self.x_assignment.items() if v == 1)

    @property
    def group0(self):
        return sorted(k for k, v in self.x_assignment.items() if v == 0)

    def x_for(self, ids):
        return np.array([self.x_assignment[i] for i in ids], dtype=float)

    def to_dict(self):
        return {
            "task_id": self.task_id,
            "target_label": self.target_label,
            "rule": dict(self.rule),
            "provenance": self.provenance,
            "group1": self.group1,
            "group0": self.group0,
        }

    @classmethod
    def from_dict(cls, hypothesis_id, data):
        assignment = {str(i): 1 for i in data["group1"]}
        overlap = assignment.keys() & set(map(str, data["group0"]))
        if overlap:
            raise ValidationError(f"hypothesis {hypothesis_id!r}: ids in both groups: {sorted(overlap)[:3]}")
        assignment.update({str(i): 0 for i in data["group0"]})
        return cls(
            hypothesis_id=hypothesis_id,
            task_id=data["task_id"],
            target_label=data["target_label"],
            rule=dict(data["rule"]),
            x_assignment=assignment,
            provenance=data.get("provenance", "generated"),
        )


def hypotheses_to_json(hypotheses):
    return {h.hypothesis_id: h.to_dict() for h in hypotheses}


def hypotheses_from_json(data):
    return [Hypothesis.from_dict(hid, d) for hid, d in data.items()]


def binarize_labels(labels, target_label):
    """Map labels to 1 (== target) / 0, keeping ``None`` (NA) as ``None``."""
    return [None if lab is None else int(lab == target_label) for lab in labels]


def binarize(task, target_label):
    """Binary ground-truth view of ``task`` keyed by datapoint id."""
    if target_label not in task.label_set:
        raise ValidationError(f"target label {target_label!r} not in label_set of {task.task_id!r}")
    dps = task.included
    return dict(zip((dp.datapoint_id for dp in dps), binarize_labels([dp.gt_label for dp in dps], target_label)))


def _default_target(task, target_label):
    target = task.label_set[-1] if target_label is None else target_label
    if target not in task.label_set:
        raise ValidationError(f"target label {target!r} not in label_set of {task.task_id!r}")
    return target


def _make(task, target, hid, rule, assignment, provenance="generated"):
    if len(set(assignment.values())) < 2:
        return None
    return Hypothesis(hid, task.task_id, target, rule, assignment, provenance)


def contains_word(text, word):
    return word in set(tokenize(text))


def _keyword_hypothesis(task, target, word, source):
    assignment = {dp.datapoint_id: int(contains_word(dp.text, word)) for dp in task.included}
    return _make(
        task, target, f"{task.task_id}:kw:{word}:{target}", {"kind": "keyword", "word": word, "source": source}, assignment
    )


def most_discriminative_word(task, target_label, stopwords=None):
    """Word whose presence maximises |delta p| of the target class.

    Scans every non-stopword that splits the included datapoints into two
    non-empty sides. Ties go to the alphabetically first word. Returns
    ``(word, abs_delta_p)`` or ``(None, 0.0)`` if no word splits the task.
    """
    stopwords = default_stopwords() if stopwords is None else frozenset(stopwords)
    dps = task.included
    n = len(dps)
    y = np.array([dp.gt_label == target_label for dp in dps], dtype=float)
    total_pos = y.sum()
    docs_with = {}
    for i, dp in enumerate(dps):
        for w in set(tokenize(dp.text)) - stopwords:
            docs_with.setdefault(w, []).append(i)
    best, best_gap = None, -1.0
    for w in sorted(docs_with):
        idx = docs_with[w]
        k = len(idx)
        if k == n:
            continue
        pos_in = y[idx].sum()
        gap = abs(pos_in / k - (total_pos - pos_in) / (n - k))
        if gap > best_gap + 1e-15:
            best, best_gap = w, gap
    return (best, best_gap) if best is not None else (None, 0.0)


def gen_keyword_groupings(task, top_k=3, stopword_list=None, target_label=None):
    """Keyword-presence groupings.

    Emits the ``top_k`` most frequent corpus words, the ``top_k`` most
    frequent words within each ground-truth class (for at most the 15 most
    frequent classes), and the single most discriminative word for
    ``target_label`` (default: last label in ``label_set``). Frequency is
    the token count; ties break alphabetically. A word chosen by more than
    one rule yields one hypothesis. Groupings with an empty side are dropped.
    """
    target = _default_target(task, target_label)
    stopwords = default_stopwords() if stopword_list is None else frozenset(stopword_list)
    dps = task.included
    if len(dps) < 2:
        raise ValidationError(f"task {task.task_id!r} needs at least 2 labelled datapoints")

    def top_words(texts):
        counts = Counter(t for text in texts for t in tokenize(text) if t not in stopwords)
        return [w for w, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]]

    picks = [(w, "corpus_top") for w in top_words(dp.text for dp in dps)]
    class_counts = Counter(dp.gt_label for dp in dps)
    order = {lab: i for i, lab in enumerate(task.label_set)}
    classes = sorted(class_counts, key=lambda c: (-class_counts[c], order[c]))[:MAX_KEYWORD_CLASSES]
    for cls in classes:
        picks.extend((w, f"class_top:{cls}") for w in top_words(dp.text for dp in dps if dp.gt_label == cls))
    word, _ = most_discriminative_word(task, target, stopwords)
    if word is not None:
        picks.append((word, "max_delta_p"))

    out, seen = [], set()
    for w, source in picks:
        if w in seen:
            continue
        seen.add(w)
        h = _keyword_hypothesis(task, target, w, source)
        if h is not None:
            out.append(h)
    return out


def gen_length_grouping(task, target_label=None):
    """Long-vs-short split; strictly above the median length is group 1.

    Returns ``None`` when every text has the same length.
    """
    target = _default_target(task, target_label)
    dps = task.included
    if len(dps) < 2:
        raise ValidationError(f"task {task.task_id!r} needs at least 2 labelled datapoints")
    lengths = np.array([len(dp.text) for dp in dps])
    median = float(np.median(lengths))
    assignment = {dp.datapoint_id: int(n > median) for dp, n in zip(dps, lengths)}
    return _make(
        task, target, f"{task.task_id}:length:{target}", {"kind": "length_median", "median": median}, assignment
    )


def gen_random_groupings(task, specs=((0.5, 0), (0.4, 0), (0.2, 0)), target_label=None):
    """Seeded random splits; ``specs`` is a sequence of ``(ratio, seed)``."""
    target = _default_target(task, target_label)
    ids = [dp.datapoint_id for dp in task.included]
    n = len(ids)
    out = []
    for ratio, seed in specs:
        if not 0.0 < ratio < 1.0:
            raise ValidationError(f"random split ratio must lie in (0, 1), got {ratio}")
        k = int(np.floor(ratio * n + 0.5))
        rng = derive_rng(seed, "random_grouping", task.task_id, repr(float(ratio)))
        chosen = set(rng.permutation(n)[:k].tolist())
        assignment = {i: int(j in chosen) for j, i in enumerate(ids)}
        h = _make(
            task,
            target,
            f"{task.task_id}:random:{ratio:g}:{seed}:{target}",
            {"kind": "random", "ratio": float(ratio), "seed": int(seed)},
            assignment,
        )
        if h is not None:
            out.append(h)
    return out


def gen_metadata_groupings(task, fields, target_label=None, min_coverage=MIN_METADATA_COVERAGE):
    """One ``value vs rest`` grouping per metadata value covering >= 5% of rows."""
    target = _default_target(task, target_label)
    dps = task.included
    n = len(dps)
    out = []
    for name in fields:
        values = Counter(dp.metadata.get(name) for dp in dps if dp.metadata.get(name) is not None)
        for value in sorted(values):
            if values[value] < min_coverage * n:
                continue
            assignment = {dp.datapoint_id: int(dp.metadata.get(name) == value) for dp in dps}
            h = _make(
                task,
                target,
                f"{task.task_id}:meta:{name}={value}:{target}",
                {"kind": "metadata", "field": name, "value": value},
                assignment,
                provenance="original_metadata",
            )
            if h is not None:
                out.append(h)
    return out


def generate_all(task, target_labels=None, metadata_fields=(), top_k=3, random_specs=((0.5, 0), (0.4, 0), (0.2, 0))):
    """Every grouping family for each binarization target."""
    targets = task.label_set[-1:] if target_labels is None else target_labels
    if len(task.label_set) > 2 and target_labels is None:
        targets = task.label_set
    out = []
    for t in targets:
        out.extend(gen_metadata_groupings(task, metadata_fields, t))
        out.extend(gen_keyword_groupings(task, top_k, target_label=t))
        length = gen_length_grouping(task, t)
        if length is not None:
            out.append(length)
        out.extend(gen_random_groupings(task, random_specs, t))
    return out
