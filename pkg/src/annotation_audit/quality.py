"""Annotation quality: weighted F1, NA gate and Krippendorff's alpha."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import permutations

import numpy as np
from sklearn.metrics import accuracy_score, f1_score

from .exceptions import ValidationError

NA_THRESHOLD = 0.01
PERFORMANCE_COLUMNS = ("task_id", "config_id", "weighted_f1", "accuracy", "na_fraction", "excluded")


def _drop_na(pred, gt):
    if len(pred) != len(gt):
        raise ValidationError("pred and gt must have equal length")
    pairs = [(p, g) for p, g in zip(pred, gt) if p is not None]
    if not pairs:
        raise ValidationError("no non-NA predictions to score")
    na_fraction = 1 - len(pairs) / len(pred)
    p, g = zip(*pairs)
    return list(p), list(g), na_fraction


def weighted_f1(pred, gt):
    """Support-weighted mean of per-class F1 over the ground-truth classes.

    ``None`` predictions (NA) are dropped pairwise before scoring. Classes
    that occur only in the predictions get zero weight; a per-class F1 with
    a zero denominator counts as 0.
    """
    p, g, _ = _drop_na(pred, gt)
    return float(f1_score(g, p, labels=sorted(set(g)), average="weighted", zero_division=0))


def accuracy(pred, gt):
    p, g, _ = _drop_na(pred, gt)
    return float(accuracy_score(g, p))


def is_excluded(n_na, n_total, threshold=NA_THRESHOLD):
    """True when the NA share strictly exceeds ``threshold``."""
    if n_total <= 0:
        return True
    return n_na / n_total > threshold


def na_filter(groups, threshold=NA_THRESHOLD):
    """Partition ``{key: records}`` into kept and excluded keys.

    Returns ``(kept, excluded)`` where ``excluded`` maps each dropped key to
    its NA fraction, so callers can report every exclusion.
    """
    kept, excluded = [], {}
    for key, records in groups.items():
        records = list(records)
        n_na = sum(bool(r.is_na) for r in records)
        if is_excluded(n_na, len(records), threshold):
            excluded[key] = n_na / len(records) if records else 1.0
        else:
            kept.append(key)
    return kept, excluded


@dataclass(frozen=True)
class PerformanceRecord:
    task_id: str
    config_id: str
    weighted_f1: float
    accuracy: float
    na_fraction: float
    excluded: bool

    def row(self):
        return dict(self.__dict__)


def performance_record(task_id, config_id, pred, gt, threshold=NA_THRESHOLD):
    na = sum(p is None for p in pred)
    if na == len(pred):
        return PerformanceRecord(task_id, config_id, float("nan"), float("nan"), 1.0, True)
    return PerformanceRecord(
        task_id,
        config_id,
        weighted_f1(pred, gt),
        accuracy(pred, gt),
        na / len(pred),
        is_excluded(na, len(pred), threshold),
    )


def coincidence_matrix(units):
    """Nominal coincidence matrix from ``units`` (iterables of values, ``None`` = missing).

    Units with fewer than two values are not pairable and are skipped.
    Returns ``(categories, matrix)``.
    """
    pairable = []
    for unit in units:
        vals = [v for v in unit if v is not None and not (isinstance(v, float) and np.isnan(v))]
        if len(vals) >= 2:
            pairable.append(vals)
    cats = sorted({v for vals in pairable for v in vals}, key=repr)
    index = {c: i for i, c in enumerate(cats)}
    o = np.zeros((len(cats), len(cats)))
    for vals in pairable:
        m = len(vals)
        for a, b in permutations(vals, 2):
            o[index[a], index[b]] += 1.0 / (m - 1)
    return cats, o


def krippendorff_alpha(units):
    """Krippendorff's alpha for nominal data.

    ``units`` is a units-by-annotators matrix (list of rows); ``None`` or
    NaN marks a missing rating.
    """
    _, o = coincidence_matrix(units)
    n = o.sum()
    if n < 2:
        raise ValidationError("need at least two pairable values")
    n_c = o.sum(axis=1)
    d_o = (n - np.trace(o)) / n
    d_e = (n * n - (n_c**2).sum()) / (n * (n - 1))
    if d_e == 0:
        # a single category overall: agreement is perfect by construction
        return 1.0
    return float(1.0 - d_o / d_e)


def krippendorff_alpha_per_category(units, categories):
    """Binary one-vs-rest alpha per category, plus their mean under ``"mean"``."""
    out = {}
    for cat in categories:
        binary = [[None if v is None else int(v == cat) for v in unit] for unit in units]
        out[cat] = krippendorff_alpha(binary)
    out["mean"] = float(np.mean([out[c] for c in categories]))
    return out


def pairwise_agreement(units):
    """Share of agreeing ordered pairs within units (percent agreement)."""
    agree = total = 0
    for unit in units:
        vals = [v for v in unit if v is not None]
        for a, b in permutations(vals, 2):
            total += 1
            agree += a == b
    if not total:
        raise ValidationError("no pairable values")
    return agree / total


def label_distribution(labels):
    counts = Counter(labels)
    n = sum(counts.values())
    return {k: v / n for k, v in sorted(counts.items())}
