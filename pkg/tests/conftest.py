import json

import pytest

from annotation_audit.hypotheses import Hypothesis, hypotheses_to_json
from annotation_audit.model import AnnotationRecord, AnnotationTask, Datapoint, LlmConfig

TS = "2024-01-01T00:00:00+00:00"
LABELS = ("neg", "pos")


def _record(task_id, dp_id, config_id, label):
    return AnnotationRecord(task_id, dp_id, config_id, label or "no idea", label, label is None, None, TS)


def toy_bundle():
    """400 rows, a null and an alternative grouping, two configurations.

    Ground truth: first half 60% positive, second half 20%, evens and odds
    balanced. Config ``b`` reproduces the truth. Config ``a`` labels 70% of
    even rows and 20% of odd rows positive in both halves, so it invents
    the even/odd effect and erases the half/half effect.
    """
    n = 400
    gt = [("pos" if (i % 5 < 3 if i < 200 else i % 5 == 0) else "neg") for i in range(n)]
    a = [("pos" if ((i // 2) % 10 < 7 if i % 2 == 0 else (i // 2) % 5 == 0) else "neg") for i in range(n)]
    ids = [f"d{i:03d}" for i in range(n)]
    task = AnnotationTask("toy", LABELS, [Datapoint(i, f"text {i}", {}, g) for i, g in zip(ids, gt)])
    h_alt = Hypothesis("toy:half", "toy", "pos", {"kind": "scripted"}, {d: int(k < 200) for k, d in enumerate(ids)})
    h_null = Hypothesis("toy:parity", "toy", "pos", {"kind": "scripted"}, {d: int(k % 2 == 0) for k, d in enumerate(ids)})
    records = [_record("toy", d, "a", lab) for d, lab in zip(ids, a)]
    records += [_record("toy", d, "b", lab) for d, lab in zip(ids, gt)]
    configs = [
        LlmConfig("b", "model-b", "local", "Label: {text}", [("pos", "pos"), ("neg", "neg")]),
        LlmConfig("a", "model-a", "local", "Label: {text}", [("pos", "pos"), ("neg", "neg")]),
    ]
    return task, [h_null, h_alt], records, configs


def write_bundle(directory, task, hyps, records, configs=None):
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "task": directory / "task.json",
        "hypotheses": directory / "hypotheses.json",
        "annotations": directory / "annotations.jsonl",
        "configs": directory / "configs.json",
    }
    paths["task"].write_text(json.dumps(task.to_dict(), indent=2))
    paths["hypotheses"].write_text(json.dumps(hypotheses_to_json(hyps), indent=2))
    paths["annotations"].write_text("".join(json.dumps(r.to_dict()) + "\n" for r in records))
    if configs is not None:
        paths["configs"].write_text(json.dumps({"configs": [c.to_dict() for c in configs]}, indent=2))
    return {k: str(v) for k, v in paths.items()}


def na_bundle(n_na_by_config, n=1000):
    """``n`` rows with one grouping; config ``c`` has its first ``n_na_by_config[c]`` rows NA."""
    ids = [f"p{i:04d}" for i in range(n)]
    gt = ["pos" if (i % 10 < (6 if i < n // 2 else 2)) else "neg" for i in range(n)]
    task = AnnotationTask("natask", LABELS, [Datapoint(i, f"row {i}", {}, g) for i, g in zip(ids, gt)])
    h = Hypothesis("natask:half", "natask", "pos", {"kind": "scripted"}, {d: int(k < n // 2) for k, d in enumerate(ids)})
    records = []
    for cid, n_na in n_na_by_config.items():
        records += [_record("natask", d, cid, None if k < n_na else g) for k, (d, g) in enumerate(zip(ids, gt))]
    return task, [h], records


@pytest.fixture
def toy():
    return toy_bundle()


@pytest.fixture
def toy_files(tmp_path, toy):
    return write_bundle(tmp_path / "toy", *toy)


# acceptance criteria append their one-line verdicts here
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
