"""Choosing which datapoints receive a human label.

Each sampler returns a :class:`HumanSample` recording the labelled ids,
their ground-truth labels and an inclusion probability ``pi`` for every
datapoint in the population. The array-level ``draw_*`` functions do the
work; the task-level wrappers map ids and labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import ValidationError
from ..seeding import derive_rng
from .learner import ErrorLearner

MAX_BUDGET_SHARE = 0.7
BATCH_SIZE = 25
UNIFORM_MIX = 0.1


@dataclass(frozen=True)
class HumanSample:
    ids: tuple
    labeled: tuple
    gt: dict
    pi: dict
    n_human: int
    strategy: str

    @property
    def labeled_mask(self):
        chosen = set(self.labeled)
        return np.array([i in chosen for i in self.ids])

    def pi_array(self, ids=None):
        return np.array([self.pi[i] for i in (self.ids if ids is None else ids)], dtype=float)


def check_budget(n_human, n):
    if n_human < 1:
        raise ValidationError("n_human must be at least 1")
    if n_human > MAX_BUDGET_SHARE * n:
        raise ValidationError(f"n_human={n_human} exceeds {MAX_BUDGET_SHARE:.0%} of the {n} datapoints")


def draw_random(n, n_human, rng):
    """Simple random sample without replacement; returns ``(indices, pi)``."""
    check_budget(n_human, n)
    idx = np.sort(rng.choice(n, size=n_human, replace=False))
    return idx, np.full(n, n_human / n)


def low_confidence_pi(confidence, n_human):
    """Mixture inclusion probabilities ``0.1*base + 0.9*(1-c)``, scaled to sum to the budget.

    Values pushed above 1 by the scaling are capped and the remaining mass
    is spread over the other rows until the sum matches ``n_human``.
    """
    c = np.nan_to_num(np.asarray(confidence, dtype=float), nan=0.0)
    n = c.size
    raw = UNIFORM_MIX * (n_human / n) + (1 - UNIFORM_MIX) * (1.0 - c)
    raw = np.maximum(raw, 1e-12)
    pi = np.zeros(n)
    capped = np.zeros(n, dtype=bool)
    for _ in range(n):
        free = ~capped
        pi[free] = raw[free] * (n_human - capped.sum()) / raw[free].sum()
        over = free & (pi > 1.0)
        if not over.any():
            break
        capped |= over
        pi[capped] = 1.0
    return pi


def draw_low_confidence(confidence, n_human, order_keys=None):
    """Deterministically take the ``n_human`` least confident rows.

    Missing confidence counts as 0. Ties break by ``order_keys`` (row
    order by default). Returns ``(indices, pi)``.
    """
    c = np.nan_to_num(np.asarray(confidence, dtype=float), nan=0.0)
    n = c.size
    if not 1 <= n_human <= n:
        raise ValidationError("n_human must lie in [1, n]")
    keys = np.arange(n) if order_keys is None else np.asarray(order_keys)
    order = np.lexsort((keys, c))
    return np.sort(order[:n_human]), low_confidence_pi(c, n_human)


def _active_features(confidence, llm_codes, x):
    cols = [np.nan_to_num(np.asarray(confidence, dtype=float), nan=0.0), np.asarray(llm_codes, dtype=float)]
    if x is not None:
        cols.append(np.asarray(x, dtype=float))
    return np.column_stack(cols)


def draw_active(confidence, llm_codes, gt_codes, n_human, seed, x=None, learner=None, batch_size=BATCH_SIZE, stream=()):
    """Error-driven sequential sampling.

    A uniform burn-in batch (re-drawn until it holds both ground-truth
    classes, unless the population has only one) is followed by batches
    drawn without replacement from ``q ∝ 0.1/m + 0.9 * e/sum(e)`` where
    ``e`` is the learner's predicted error for the ``m`` unlabelled rows.
    The recorded ``pi`` of a row is its inclusion probability in the batch
    that took it, ``min(1, batch * q)``; burn-in rows get ``batch / n``.

    ``llm_codes`` may hold -1 for NA annotations, which count as errors.
    Returns ``(indices_in_draw_order, pi)``.
    """
    llm_codes = np.asarray(llm_codes)
    gt_codes = np.asarray(gt_codes)
    n = gt_codes.size
    if n_human < batch_size:
        raise ValidationError(f"active sampling needs a budget of at least {batch_size}")
    check_budget(n_human, n)
    learner = ErrorLearner() if learner is None else learner
    features = _active_features(confidence, llm_codes, x)
    errors = (llm_codes != gt_codes).astype(float)
    single_class = np.unique(gt_codes).size < 2
    pi = np.full(n, batch_size / n)

    for attempt in range(10_000):
        burn = derive_rng(seed, *stream, "active_burn_in", attempt).choice(n, size=batch_size, replace=False)
        if single_class or np.unique(gt_codes[burn]).size == 2:
            break
    labeled = list(burn)
    rng = derive_rng(seed, *stream, "active_batches")
    taken = np.zeros(n, dtype=bool)
    taken[burn] = True
    while len(labeled) < n_human:
        b = min(batch_size, n_human - len(labeled))
        unlabeled = np.flatnonzero(~taken)
        m = unlabeled.size
        learner.fit(features[labeled], errors[labeled])
        e = learner.predict(features[unlabeled])
        total = e.sum()
        if total > 0:
            q = UNIFORM_MIX / m + (1 - UNIFORM_MIX) * e / total
        else:
            q = np.full(m, 1.0 / m)
        q = q / q.sum()
        pick = rng.choice(m, size=b, replace=False, p=q)
        rows = unlabeled[pick]
        pi[unlabeled] = np.minimum(1.0, b * q)
        taken[rows] = True
        labeled.extend(rows.tolist())
    return np.asarray(labeled), pi


def _population(task):
    dps = task.included
    return [dp.datapoint_id for dp in dps], {dp.datapoint_id: dp.gt_label for dp in dps}


def _sample(ids, gt, idx, pi, n_human, strategy):
    labeled = tuple(ids[i] for i in idx)
    return HumanSample(
        tuple(ids), labeled, {i: gt[i] for i in labeled}, dict(zip(ids, map(float, pi))), n_human, strategy
    )


def sample_random(task, n_human, seed=0):
    ids, gt = _population(task)
    idx, pi = draw_random(len(ids), n_human, derive_rng(seed, "sample_random", task.task_id))
    return _sample(ids, gt, idx, pi, n_human, "random")


def _confidences(ids, records):
    by_id = {r.datapoint_id: r for r in records}
    return np.array(
        [np.nan if by_id.get(i) is None or by_id[i].confidence is None else by_id[i].confidence for i in ids],
        dtype=float,
    )


def sample_low_confidence(task, records, n_human):
    """Label the least confident datapoints of one configuration's records."""
    ids, gt = _population(task)
    check_budget(n_human, len(ids))
    conf = _confidences(ids, records)
    rank = np.argsort(np.argsort(ids, kind="stable"), kind="stable")
    idx, pi = draw_low_confidence(conf, n_human, order_keys=rank)
    return _sample(ids, gt, idx, pi, n_human, "low_confidence")


def sample_active(task, records, n_human, seed=0, x=None, learner=None):
    """Active sampling driven by predicted annotation errors.

    ``x`` optionally maps datapoint ids to a group indicator that is added
    to the learner's features.
    """
    ids, gt = _population(task)
    codes = {lab: k for k, lab in enumerate(task.label_set)}
    by_id = {r.datapoint_id: r for r in records}
    llm = np.array(
        [-1 if by_id.get(i) is None or by_id[i].mapped_label is None else codes[by_id[i].mapped_label] for i in ids]
    )
    gt_codes = np.array([codes[gt[i]] for i in ids])
    xs = None if x is None else np.array([x[i] for i in ids], dtype=float)
    idx, pi = draw_active(
        _confidences(ids, records), llm, gt_codes, n_human, seed, x=xs, learner=learner, stream=(task.task_id,)
    )
    return _sample(ids, gt, idx, pi, n_human, "active")
