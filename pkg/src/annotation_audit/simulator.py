"""Synthetic two-group data with known truth, label corruption and Monte Carlo risk.

Randomness for replication ``r`` of a scenario with seed ``s`` comes from
``derive_rng(s, "replication", r)``; within a replication the ground truth
is drawn first and the corruption second from that one stream.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ValidationError
from .hypotheses import Hypothesis
from .inference import fit_logistic
from .model import AnnotationRecord, AnnotationTask, Datapoint, LlmConfig
from .quality import krippendorff_alpha
from .risk import classify_outcome
from .seeding import derive_rng

BINARY_LABELS = ("negative", "positive")
CURVE_COLUMNS = ("point", "metric", "rate", "mc_se", "reps")
CURVE_METRICS = ("type_i", "type_ii", "type_s", "truth_type_i", "truth_type_ii", "truth_type_s")
FIXED_TIMESTAMP = "2000-01-01T00:00:00+00:00"


@dataclass(frozen=True)
class ConfusionSpec:
    """Row ``i`` gives the output distribution for true class ``labels[i]``; the last column is NA."""

    labels: tuple
    matrix: tuple

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        m = np.asarray(self.matrix, dtype=float)
        k = len(self.labels)
        if m.shape != (k, k + 1):
            raise ValidationError(f"confusion matrix must be {k}x{k + 1}, got {m.shape}")
        if (m < 0).any() or (m > 1).any():
            raise ValidationError("confusion entries must lie in [0, 1]")
        if np.abs(m.sum(axis=1) - 1).max() > 1e-12:
            raise ValidationError("confusion rows must sum to 1")
        object.__setattr__(self, "matrix", tuple(tuple(float(v) for v in row) for row in m))

    @classmethod
    def identity(cls, labels=BINARY_LABELS):
        k = len(labels)
        return cls(labels, np.hstack([np.eye(k), np.zeros((k, 1))]))

    @classmethod
    def symmetric(cls, flip, labels=BINARY_LABELS, na=0.0):
        """Keep a label with probability ``1 - flip - na``, else spread ``flip`` evenly over the others."""
        k = len(labels)
        m = np.full((k, k), flip / (k - 1))
        np.fill_diagonal(m, 1.0 - flip - na)
        return cls(labels, np.hstack([m, np.full((k, 1), na)]))

    @classmethod
    def one_sided(cls, flip, labels=BINARY_LABELS):
        """Binary confusion that turns the first label into the second with probability ``flip``."""
        if len(labels) != 2:
            raise ValidationError("one_sided confusion is binary")
        return cls(labels, [[1 - flip, flip, 0.0], [0.0, 1.0, 0.0]])

    @property
    def array(self):
        return np.asarray(self.matrix)

    def to_dict(self):
        return {"labels": list(self.labels), "matrix": [list(r) for r in self.matrix]}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data["labels"]), data["matrix"])


@dataclass(frozen=True)
class Scenario:
    n0: int
    n1: int
    p0: float
    p1: float
    confusion0: ConfusionSpec
    confusion1: ConfusionSpec
    replications: int = 1000
    seed: int = 0

    def __post_init__(self):
        if min(self.n0, self.n1) < 2:
            raise ValidationError("group sizes must be >= 2")
        if not (0 <= self.p0 <= 1 and 0 <= self.p1 <= 1):
            raise ValidationError("p0 and p1 must lie in [0, 1]")
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")
        if len(self.confusion0.labels) != 2 or self.confusion0.labels != self.confusion1.labels:
            raise ValidationError("scenarios use one binary label set for both groups")

    @property
    def labels(self):
        return self.confusion0.labels

    @property
    def true_beta(self):
        return _logit(self.p1) - _logit(self.p0)

    def to_dict(self):
        d = asdict(self)
        d["confusion0"] = self.confusion0.to_dict()
        d["confusion1"] = self.confusion1.to_dict()
        return d

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        for k in ("confusion0", "confusion1"):
            data[k] = ConfusionSpec.from_dict(data[k])
        return cls(**data)


def _logit(p):
    with np.errstate(divide="ignore"):
        return float(np.log(p) - np.log1p(-p)) if 0 < p < 1 else math.copysign(math.inf, p - 0.5)


def scenarios_from_json(text):
    data = json.loads(text)
    items = data if isinstance(data, list) else data.get("scenarios", [data])
    return [Scenario.from_dict(d) for d in items]


def scenarios_to_json(scenarios):
    return json.dumps({"scenarios": [s.to_dict() for s in scenarios]}, indent=2, sort_keys=True)


def draw_two_group(scenario, rng):
    """Return ``(x, y)`` arrays: group 0 rows first, then group 1."""
    x = np.concatenate([np.zeros(scenario.n0, dtype=int), np.ones(scenario.n1, dtype=int)])
    p = np.where(x == 1, scenario.p1, scenario.p0)
    return x, (rng.random(x.size) < p).astype(int)


def corrupt_codes(codes, x, confusions, rng):
    """Resample each class code from its group's confusion row; NA comes back as -1."""
    codes = np.asarray(codes)
    x = np.asarray(x)
    out = np.empty(codes.size, dtype=int)
    u = rng.random(codes.size)
    for g, spec in enumerate(confusions):
        cum = np.cumsum(spec.array, axis=1)
        k = len(spec.labels)
        in_g = x == g
        for c in range(k):
            rows = in_g & (codes == c)
            drawn = np.minimum(np.searchsorted(cum[c], u[rows], side="right"), k)
            out[rows] = np.where(drawn == k, -1, drawn)
    return out


def gen_two_group(scenario, seed=None):
    """Synthetic task plus the group hypothesis, with labels drawn at the scenario rates."""
    seed = scenario.seed if seed is None else seed
    x, y = draw_two_group(scenario, derive_rng(seed, "gen_two_group"))
    labels = scenario.labels
    ids = [f"s{i:06d}" for i in range(x.size)]
    dps = [
        Datapoint(i, f"synthetic datapoint {i}", {"group": int(g)}, labels[int(v)])
        for i, g, v in zip(ids, x, y)
    ]
    task = AnnotationTask(f"synthetic-{seed}", labels, dps, notes="simulated two-group task")
    hyp = Hypothesis(f"synthetic-{seed}:group", task.task_id, labels[1], {"kind": "metadata", "field": "group", "value": "1"},
                     dict(zip(ids, map(int, x))), "original_metadata")
    return task, hyp


def corrupt_labels(labels, groups, confusions, seed):
    """Corrupt string labels group-wise; returns a list with ``None`` for NA."""
    spec = confusions[0]
    index = {lab: i for i, lab in enumerate(spec.labels)}
    codes = np.array([index[lab] for lab in labels])
    out = corrupt_codes(codes, groups, confusions, derive_rng(seed, "corrupt_labels"))
    return [None if c < 0 else spec.labels[c] for c in out]


def synthetic_confidence(correct, rng):
    """Verbalized-confidence stand-in: higher on average for correct labels."""
    correct = np.asarray(correct, dtype=bool)
    c = np.where(correct, rng.beta(8, 2, correct.size), rng.beta(3, 3, correct.size))
    return np.round(c, 2)


def replicate(scenario, rep, alpha=0.05):
    """One pipeline pass: GT and corrupted-label regressions and their classification."""
    rng = derive_rng(scenario.seed, "replication", rep)
    x, y = draw_two_group(scenario, rng)
    llm = corrupt_codes(y, x, (scenario.confusion0, scenario.confusion1), rng)
    keep = llm >= 0
    gt = fit_logistic(y, x, alpha)
    lr = fit_logistic(llm[keep], x[keep], alpha)
    return gt, lr, classify_outcome(gt, lr).kind


def _rate(hits, n):
    if n == 0:
        return None, None
    r = hits / n
    return r, math.sqrt(r * (1 - r) / n)


def summarize_replications(scenario, results):
    """Per-metric ``(rate, mc_se, denominator)`` from a list of ``replicate`` results.

    ``type_*`` rates are conditional on the ground-truth decision. The
    ``truth_*`` rates compare the corrupted-label decision with the true
    parameters: rejection under equal rates, non-rejection or a wrong-signed
    rejection under unequal rates.
    """
    kinds = [k for _, _, k in results]
    n_null = sum(k in ("correct_null", "type_I") for k in kinds)
    n_alt = len(kinds) - n_null
    out = {
        "type_i": (kinds.count("type_I"), n_null),
        "type_ii": (kinds.count("type_II"), n_alt),
        "type_s": (kinds.count("type_S"), n_alt),
    }
    sig = [lr.significant for _, lr, _ in results]
    reps = len(results)
    true_sign = int(np.sign(scenario.p1 - scenario.p0))
    if true_sign == 0:
        out["truth_type_i"] = (sum(sig), reps)
        out["truth_type_ii"] = out["truth_type_s"] = (0, 0)
    else:
        out["truth_type_i"] = (0, 0)
        out["truth_type_ii"] = (reps - sum(sig), reps)
        out["truth_type_s"] = (sum(lr.significant and lr.sign != true_sign for _, lr, _ in results), reps)
    return {m: (*_rate(h, n), n) for m, (h, n) in out.items()}


def monte_carlo_risk(grid, alpha=0.05, replications=None, n_jobs=1):
    """Empirical risk curves over a grid of scenarios.

    Returns long-format rows ``{point, metric, rate, mc_se, reps}`` where
    ``reps`` is the number of replications in the metric's denominator and
    ``rate``/``mc_se`` are ``None`` when it is zero. Replications are
    independent given their derived seeds, so ``n_jobs > 1`` threads give
    identical results.
    """
    rows = []
    for point, sc in enumerate(grid):
        n = sc.replications if replications is None else replications
        if n_jobs > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                results = list(pool.map(lambda r: replicate(sc, r, alpha), range(n)))
        else:
            results = [replicate(sc, r, alpha) for r in range(n)]
        summary = summarize_replications(sc, results)
        for metric in CURVE_METRICS:
            rate, se, denom = summary[metric]
            rows.append({"point": point, "metric": metric, "rate": rate, "mc_se": se, "reps": denom})
    return rows


def curve_lookup(rows):
    """``{(point, metric): rate}`` view of ``monte_carlo_risk`` output."""
    return {(r["point"], r["metric"]): r["rate"] for r in rows}


def estimate_alpha_from_agreement(distribution, agreement, n_sims=10_000, seed=0):
    """Krippendorff's alpha of simulated annotation pairs with a target agreement.

    First labels follow ``distribution`` (weights, normalized). The second
    label copies the first except on exactly ``round((1 - agreement) * n_sims)``
    pairs chosen uniformly, where it moves to one of the other classes
    uniformly at random.
    """
    if not 0 <= agreement <= 1:
        raise ValidationError("agreement must lie in [0, 1]")
    p = np.asarray(distribution, dtype=float)
    if p.ndim != 1 or p.size < 2 or (p < 0).any() or p.sum() <= 0:
        raise ValidationError("distribution needs >= 2 non-negative weights")
    p = p / p.sum()
    k = p.size
    rng = derive_rng(seed, "agreement_pairs")
    first = rng.choice(k, size=n_sims, p=p)
    second = first.copy()
    flip = rng.choice(n_sims, size=int(round((1 - agreement) * n_sims)), replace=False)
    # shift by 1..k-1 lands uniformly on the other classes
    second[flip] = (first[flip] + rng.integers(1, k, size=flip.size)) % k
    return krippendorff_alpha(np.column_stack([first, second]).tolist())


def build_synthetic_audit(scenario, configs=None, seed=None):
    """Task, hypothesis, configurations and annotation records for an end-to-end run.

    ``configs`` maps a config id to its ``(confusion0, confusion1)`` pair;
    by default one accurate and one group-biased configuration are built.
    Records carry synthetic confidences and a fixed timestamp, so the
    output is a pure function of the inputs.
    """
    seed = scenario.seed if seed is None else seed
    task, hyp = gen_two_group(scenario, seed)
    labels = task.label_set
    if configs is None:
        configs = {
            "accurate": (ConfusionSpec.symmetric(0.05, labels), ConfusionSpec.symmetric(0.05, labels)),
            "biased": (ConfusionSpec.identity(labels), ConfusionSpec.one_sided(0.25, labels)),
        }
    index = {lab: i for i, lab in enumerate(labels)}
    codes = np.array([index[dp.gt_label] for dp in task.datapoints])
    x = np.array([hyp.x_assignment[dp.datapoint_id] for dp in task.datapoints])
    llm_configs, records = [], {}
    for cid in sorted(configs):
        llm_configs.append(
            LlmConfig(cid, f"sim-{cid}", "simulated", "Label the text.\n{text}", [(lab, lab) for lab in labels])
        )
        rng = derive_rng(seed, "synthetic_annotations", cid)
        out = corrupt_codes(codes, x, configs[cid], rng)
        conf = synthetic_confidence(out == codes, rng)
        records[cid] = [
            AnnotationRecord(
                task.task_id,
                dp.datapoint_id,
                cid,
                "unparseable" if c < 0 else labels[c],
                None if c < 0 else labels[c],
                bool(c < 0),
                None if c < 0 else float(cf),
                FIXED_TIMESTAMP,
            )
            for dp, c, cf in zip(task.datapoints, out, conf)
        ]
    return task, [hyp], llm_configs, records
