"""Command-line entry point: ``annotation-audit <command> [options]``.

Every command writes into the ``--out`` directory with atomic renames and
exits non-zero with a ``path:line: message`` diagnostic when an input fails
validation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

from . import fileio
from .audit import (
    MULTIVERSE_COLUMNS,
    MULTIVERSE_SUMMARY_COLUMNS,
    OUTCOME_COLUMNS,
    emit_multiverse,
    outcome_from_row,
    run_audit,
)
from .client import AnnotationClient, EndpointConfig, ResponseCache
from .exceptions import AuthenticationError, EstimationError, StoreFormatError, ValidationError
from .hypotheses import generate_all, hypotheses_from_json, hypotheses_to_json
from .mitigation import MITIGATION_COLUMNS, STRATEGIES, run_strategy
from .model import AnnotationTask, LlmConfig
from .quality import PERFORMANCE_COLUMNS
from .risk import (
    FEASIBILITY_FLAGS,
    FEASIBILITY_RATES,
    RISK_COLUMNS,
    feasibility_report,
    p_binned_risks,
    risk_report,
    risk_reports_by,
)
from .simulator import CURVE_COLUMNS, build_synthetic_audit, monte_carlo_risk, scenarios_from_json
from .store import AnnotationStore, load_annotations

logger = logging.getLogger("annotation_audit")

MODEL_SELECTION = {"random": "random", "default": "fixed_default", "best": "best_performing"}
P_BIN_COLUMNS = ("p_low", "p_high", "type_i_risk", "type_ii_risk", "type_s_risk", "flip_rate", "n_cells", "n_hypotheses")


# ---- input loading ---------------------------------------------------------

def load_tasks(paths):
    tasks = {}
    for path in paths or ():
        task = fileio.load_json(path, AnnotationTask.from_dict)
        if task.task_id in tasks:
            raise ValidationError(f"{path}: duplicate task id {task.task_id!r}")
        tasks[task.task_id] = task
    if not tasks:
        raise ValidationError("at least one --task is required")
    return tasks


def _parse_configs(data):
    items = data["configs"] if isinstance(data, dict) else data
    configs = [LlmConfig.from_dict(d) for d in items]
    ids = [c.config_id for c in configs]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate config_id in configuration file")
    endpoints = {}
    if isinstance(data, dict):
        endpoints = {k: EndpointConfig(**v) for k, v in data.get("endpoints", {}).items()}
    return configs, endpoints


def load_configs(path):
    return fileio.load_json(path, _parse_configs)


def load_hypotheses(path):
    return fileio.load_json(path, hypotheses_from_json)


def _restrict(args):
    return None if not args.restrict_configs else set(args.restrict_configs.split(","))


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise ValidationError(f"{args.command}: missing --{missing[0].replace('_', '-')}")


def _out(args, name):
    return os.path.join(args.out, name)


def _outcomes(args):
    """Outcome rows from ``--outcomes`` or, failing that, a fresh audit."""
    if args.outcomes:
        rows = fileio.read_csv(args.outcomes)
        for lineno, row in enumerate(rows, start=2):
            try:
                outcome_from_row(row)
            except ValidationError as exc:
                raise ValidationError(f"{args.outcomes}:{lineno}: {exc}") from None
        return rows, None
    result = _audit(args)
    return result.rows, result


def _audit(args):
    _require(args, "hypotheses", "annotations")
    return run_audit(
        load_tasks(args.task),
        load_hypotheses(args.hypotheses),
        load_annotations(args.annotations),
        alpha=args.alpha,
        restrict_configs=_restrict(args),
    )


def _run_id(args, *names):
    payload = json.dumps({n: getattr(args, n, None) for n in names}, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ---- commands --------------------------------------------------------------

def cmd_annotate(args, transport=None):
    _require(args, "configs", "annotations")
    tasks = load_tasks(args.task)
    configs, endpoints = load_configs(args.configs)
    restrict = _restrict(args)
    store = AnnotationStore(args.annotations)
    cache = ResponseCache(args.cache or args.annotations + ".cache")
    for config in configs:
        if restrict is not None and config.config_id not in restrict:
            continue
        if config.endpoint_ref not in endpoints:
            raise ValidationError(f"{args.configs}: config {config.config_id!r} names unknown endpoint {config.endpoint_ref!r}")
        with AnnotationClient(endpoints[config.endpoint_ref], cache=cache, transport=transport) as client:
            for task in tasks.values():
                config.check_labels(task.label_set)
                logger.info("annotating %s with %s", task.task_id, config.config_id)
                store.append(client.annotate(task.task_id, config, task.datapoints))
    return 0


def cmd_confidence(args, transport=None):
    _require(args, "configs", "annotations")
    tasks = load_tasks(args.task)
    configs, endpoints = load_configs(args.configs)
    restrict = _restrict(args)
    store = AnnotationStore(args.annotations)
    for config in configs:
        if restrict is not None and config.config_id not in restrict:
            continue
        with AnnotationClient(endpoints[config.endpoint_ref], transport=transport) as client:
            for task in tasks.values():
                texts = {dp.datapoint_id: dp.text for dp in task.datapoints}
                records = store.load(task.task_id, config.config_id)
                store.append(client.add_confidences(config, records, texts))
    return 0


def cmd_hypotheses(args):
    _require(args, "out")
    hyps = []
    specs = tuple((ratio, args.seed) for ratio in (0.5, 0.4, 0.2))
    fields = tuple(args.metadata_fields.split(",")) if args.metadata_fields else ()
    targets = tuple(args.target_labels.split(",")) if args.target_labels else None
    for task in load_tasks(args.task).values():
        hyps.extend(generate_all(task, targets, fields, args.top_k, specs))
    fileio.write_json(_out(args, "hypotheses.json"), hypotheses_to_json(hyps))
    return 0


def cmd_audit(args):
    _require(args, "out")
    result = _audit(args)
    fileio.write_csv(_out(args, "outcomes.csv"), result.rows, OUTCOME_COLUMNS)
    fileio.write_csv(_out(args, "performance.csv"), [p.row() for p in result.performance], PERFORMANCE_COLUMNS)
    summary = result.summary()
    summary.update(
        run_id=_run_id(args, "task", "hypotheses", "annotations", "alpha", "restrict_configs", "seed"),
        alpha=args.alpha,
        seed=args.seed,
        tasks=sorted(load_tasks(args.task)),
        restrict_configs=sorted(_restrict(args) or []),
        outputs=["outcomes.csv", "performance.csv", "audit_summary.json"],
    )
    fileio.write_json(_out(args, "audit_summary.json"), summary)
    for ex in result.exclusions:
        logger.warning("excluded %s/%s: NA share %.4f", ex["task_id"], ex["config_id"], ex["na_fraction"])
    return 0


def cmd_risk(args):
    _require(args, "out")
    rows, _ = _outcomes(args)
    outcomes = [outcome_from_row(r) for r in rows]
    reports = [risk_report(outcomes, "all")]
    reports += risk_reports_by(outcomes, lambda o: f"task:{o.task_id}")
    reports += risk_reports_by(outcomes, lambda o: f"config:{o.config_id}")
    fileio.write_csv(_out(args, "risk.csv"), [r.row() for r in reports], RISK_COLUMNS)
    fileio.write_csv(_out(args, "risk_by_p.csv"), p_binned_risks(outcomes), P_BIN_COLUMNS)
    return 0


def cmd_feasibility(args):
    _require(args, "out")
    rows, _ = _outcomes(args)
    rep = feasibility_report([outcome_from_row(r) for r in rows], _restrict(args))
    flag_cols = ("task_id", "hypothesis_id", "null", "n_configs", *FEASIBILITY_FLAGS)
    fileio.write_csv(_out(args, "feasibility_flags.csv"), rep.flags, flag_cols)
    rate_rows = [{"scope": "all", **rep.rates}]
    rate_rows += [{"scope": f"task:{t}", **rep.per_task[t]} for t in sorted(rep.per_task)]
    fileio.write_csv(_out(args, "feasibility.csv"), rate_rows, ("scope", *FEASIBILITY_RATES))
    return 0


def cmd_mitigate(args):
    _require(args, "out", "hypotheses", "annotations", "budget")
    tasks = load_tasks(args.task)
    hyps = load_hypotheses(args.hypotheses)
    restrict = _restrict(args)
    priority = ()
    if args.configs:
        priority = tuple(c.config_id for c in load_configs(args.configs)[0])
    strategies = args.strategy or sorted(STRATEGIES)
    rows = []
    for h in sorted(hyps, key=lambda h: (h.task_id, h.hypothesis_id)):
        if h.task_id not in tasks:
            raise ValidationError(f"{args.hypotheses}: hypothesis {h.hypothesis_id!r} references unknown task")
        by_config = {}
        for r in load_annotations(args.annotations, task_id=h.task_id):
            if restrict is None or r.config_id in restrict:
                by_config.setdefault(r.config_id, []).append(r)
        if not by_config:
            raise ValidationError(f"no annotations for task {h.task_id!r}")
        prio = tuple(c for c in priority if c in by_config)
        for sid in strategies:
            logger.info("mitigating %s with %s", h.hypothesis_id, sid)
            est = run_strategy(
                sid,
                tasks[h.task_id],
                h,
                by_config,
                args.budget,
                MODEL_SELECTION[args.model_selection],
                default_config=prio[0] if prio else None,
                priority=prio,
                seed=args.seed,
                alpha=args.alpha,
            )
            rows.append(est.row())
    fileio.write_csv(_out(args, "mitigation.csv"), rows, MITIGATION_COLUMNS)
    return 0


def cmd_simulate(args):
    _require(args, "out", "scenario")
    with open(args.scenario, encoding="utf-8") as fh:
        text = fh.read()
    try:
        grid = scenarios_from_json(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{args.scenario}:{exc.lineno}: {exc.msg}") from None
    except (KeyError, TypeError, ValidationError) as exc:
        raise ValidationError(f"{args.scenario}: {exc}") from None
    if args.replications != 0:
        rows = monte_carlo_risk(grid, args.alpha, args.replications)
        fileio.write_csv(_out(args, "curves.csv"), rows, CURVE_COLUMNS)
    if args.bundle:
        task, hyps, configs, records = build_synthetic_audit(grid[0], seed=args.seed)
        fileio.write_json(_out(args, "task.json"), task.to_dict())
        fileio.write_json(_out(args, "hypotheses.json"), hypotheses_to_json(hyps))
        fileio.write_json(_out(args, "configs.json"), {"configs": [c.to_dict() for c in configs]})
        path = _out(args, "annotations.jsonl")
        with fileio.atomic_open(path) as fh:
            for cid in sorted(records):
                for r in records[cid]:
                    fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")
    return 0


def cmd_multiverse(args):
    _require(args, "out", "hypothesis_id")
    rows, result = _outcomes(args)
    perf = {}
    if result is not None:
        perf = {(p.task_id, p.config_id): p.weighted_f1 for p in result.performance}
    elif args.performance:
        perf = {(r["task_id"], r["config_id"]): float(r["weighted_f1"]) for r in fileio.read_csv(args.performance)}
    per_config, summary = emit_multiverse(rows, args.hypothesis_id, perf)
    fileio.write_csv(_out(args, "multiverse.csv"), per_config, MULTIVERSE_COLUMNS)
    fileio.write_csv(_out(args, "multiverse_summary.csv"), [summary], MULTIVERSE_SUMMARY_COLUMNS)
    return 0


COMMANDS = {
    "annotate": cmd_annotate,
    "confidence": cmd_confidence,
    "hypotheses": cmd_hypotheses,
    "audit": cmd_audit,
    "risk": cmd_risk,
    "feasibility": cmd_feasibility,
    "mitigate": cmd_mitigate,
    "simulate": cmd_simulate,
    "multiverse": cmd_multiverse,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="annotation-audit", description="Audit conclusions drawn from LLM annotations.")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--task", action="append", help="task JSON (repeatable)")
        p.add_argument("--configs", help="configuration JSON")
        p.add_argument("--hypotheses", help="hypotheses JSON")
        p.add_argument("--annotations", help="annotation store (JSON lines)")
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--restrict-configs", help="comma-separated config ids")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output directory")
        if name in ("risk", "feasibility", "multiverse"):
            p.add_argument("--outcomes", help="outcome CSV from a previous audit")
        if name == "annotate":
            p.add_argument("--cache", help="response cache path (default: <annotations>.cache)")
        if name == "hypotheses":
            p.add_argument("--metadata-fields", help="comma-separated metadata fields")
            p.add_argument("--target-labels", help="comma-separated binarization targets")
            p.add_argument("--top-k", type=int, default=3)
        if name == "mitigate":
            p.add_argument("--budget", type=int, help="number of human labels")
            p.add_argument("--strategy", action="append", choices=sorted(STRATEGIES))
            p.add_argument("--model-selection", choices=sorted(MODEL_SELECTION), default="default")
        if name == "simulate":
            p.add_argument("--scenario", help="scenario JSON")
            p.add_argument("--replications", type=int, help="override replications; 0 skips the curves")
            p.add_argument("--bundle", action="store_true", help="also write a synthetic audit bundle")
        if name == "multiverse":
            p.add_argument("--hypothesis-id")
            p.add_argument("--performance", help="performance CSV from a previous audit")
    return parser


def main(argv=None, transport=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    if not 0 < args.alpha < 1:
        print("error: --alpha must lie in (0, 1)", file=sys.stderr)
        return 2
    fn = COMMANDS[args.command]
    try:
        if args.command in ("annotate", "confidence"):
            return fn(args, transport=transport)
        return fn(args)
    except AuthenticationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, StoreFormatError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
