import csv
import json

import httpx
import pytest

from annotation_audit.cli import main
from annotation_audit.model import AnnotationRecord
from conftest import TS, na_bundle, toy_bundle, write_bundle


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def audit_args(files, out, *extra):
    return ["audit", "--task", files["task"], "--hypotheses", files["hypotheses"],
            "--annotations", files["annotations"], "--out", str(out), *extra]


class TestAudit:
    def test_toy_outcomes_and_risks(self, toy_files, tmp_path):
        out = tmp_path / "out"
        assert main(audit_args(toy_files, out)) == 0
        rows = read_csv(out / "outcomes.csv")
        kinds = {(r["hypothesis_id"], r["config_id"]): r["kind"] for r in rows}
        assert kinds == {
            ("toy:half", "a"): "type_II",
            ("toy:half", "b"): "correct_alt",
            ("toy:parity", "a"): "type_I",
            ("toy:parity", "b"): "correct_null",
        }
        assert main(["risk", "--outcomes", str(out / "outcomes.csv"), "--out", str(out)]) == 0
        overall = next(r for r in read_csv(out / "risk.csv") if r["scope"] == "all")
        assert float(overall["type_i_risk"]) == 0.5
        assert float(overall["type_ii_risk"]) == 0.5
        assert float(overall["type_s_risk"]) == 0.0
        assert float(overall["llm_hacking_risk"]) == 0.5

    def test_risk_runs_audit_when_no_outcomes_given(self, toy_files, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(audit_args(toy_files, a))
        main(["risk", "--outcomes", str(a / "outcomes.csv"), "--out", str(a)])
        args = audit_args(toy_files, b)
        args[0] = "risk"
        assert main(args) == 0
        assert (a / "risk.csv").read_bytes() == (b / "risk.csv").read_bytes()

    def test_na_exclusion_in_summary(self, tmp_path):
        files = write_bundle(tmp_path / "na", *na_bundle({"x": 11, "y": 10}))
        out = tmp_path / "out"
        assert main(audit_args(files, out)) == 0
        summary = json.loads((out / "audit_summary.json").read_text())
        assert [(e["config_id"], e["na_fraction"]) for e in summary["excluded_configs"]] == [("x", 0.011)]
        assert {r["config_id"] for r in read_csv(out / "outcomes.csv")} == {"y"}

    def test_rerun_is_byte_identical(self, toy_files, tmp_path):
        for name in ("r1", "r2"):
            out = tmp_path / name
            main(audit_args(toy_files, out))
            main(["risk", "--outcomes", str(out / "outcomes.csv"), "--out", str(out)])
            main(["feasibility", "--outcomes", str(out / "outcomes.csv"), "--out", str(out)])
        for f in ("outcomes.csv", "performance.csv", "audit_summary.json", "risk.csv", "risk_by_p.csv",
                  "feasibility.csv", "feasibility_flags.csv"):
            assert (tmp_path / "r1" / f).read_bytes() == (tmp_path / "r2" / f).read_bytes()

    def test_inputs_not_mutated(self, toy_files, tmp_path):
        before = {k: open(v, "rb").read() for k, v in toy_files.items()}
        main(audit_args(toy_files, tmp_path / "out"))
        assert before == {k: open(v, "rb").read() for k, v in toy_files.items()}

    def test_malformed_store_line(self, toy_files, tmp_path, capsys):
        with open(toy_files["annotations"], "a") as fh:
            fh.write("{not json\n")
        assert main(audit_args(toy_files, tmp_path / "out")) == 2
        err = capsys.readouterr().err
        assert f"{toy_files['annotations']}:801" in err
        assert not (tmp_path / "out" / "outcomes.csv").exists()

    def test_bad_task_json_reports_line(self, toy_files, tmp_path, capsys):
        with open(toy_files["task"], "w") as fh:
            fh.write('{\n  "task_id": "toy",\n  oops\n}')
        assert main(audit_args(toy_files, tmp_path / "out")) == 2
        assert f"{toy_files['task']}:3:" in capsys.readouterr().err

    def test_bad_alpha(self, toy_files, tmp_path):
        assert main(audit_args(toy_files, tmp_path / "out", "--alpha", "1.5")) == 2

    def test_missing_file(self, toy_files, tmp_path, capsys):
        files = dict(toy_files, hypotheses=str(tmp_path / "nope.json"))
        assert main(audit_args(files, tmp_path / "out")) == 2
        assert "nope.json" in capsys.readouterr().err


class TestFeasibility:
    def test_restriction(self, toy_files, tmp_path):
        out = tmp_path / "out"
        main(audit_args(toy_files, out))
        assert main(["feasibility", "--outcomes", str(out / "outcomes.csv"), "--out", str(out),
                     "--restrict-configs", "b"]) == 0
        flags = read_csv(out / "feasibility_flags.csv")
        assert all(r["n_configs"] == "1" for r in flags)
        rates = read_csv(out / "feasibility.csv")[0]
        assert rates["scope"] == "all"


class TestMultiverse:
    @staticmethod
    def reversed_records(records):
        # config c swaps the half effect by relabelling the second half as the first and vice versa
        gt = {r.datapoint_id: r.mapped_label for r in records if r.config_id == "b"}
        ids = sorted(gt)
        swapped = {ids[k]: gt[ids[(k + 200) % 400]] for k in range(400)}
        out = [AnnotationRecord("toy", i, "c", lab, lab, False, None, TS) for i, lab in swapped.items()]
        out += [AnnotationRecord("toy", i, "d", lab, lab, False, None, TS) for i, lab in gt.items()]
        return out

    def test_sign_shares(self, tmp_path):
        task, hyps, records, configs = toy_bundle()
        files = write_bundle(tmp_path / "mv", task, hyps, records + self.reversed_records(records))
        out = tmp_path / "out"
        assert main(audit_args(files, out, "--restrict-configs", "b,c,d")) == 0
        kinds = {r["config_id"]: r["kind"] for r in read_csv(out / "outcomes.csv") if r["hypothesis_id"] == "toy:half"}
        assert kinds == {"b": "correct_alt", "c": "type_S", "d": "correct_alt"}
        assert main(["multiverse", "--outcomes", str(out / "outcomes.csv"), "--performance",
                     str(out / "performance.csv"), "--hypothesis-id", "toy:half", "--out", str(out)]) == 0
        (summary,) = read_csv(out / "multiverse_summary.csv")
        assert float(summary["share_positive"]) == pytest.approx(2 / 3)
        assert float(summary["share_negative"]) == pytest.approx(1 / 3)
        per = read_csv(out / "multiverse.csv")
        assert [r["config_id"] for r in per] == ["b", "c", "d"]
        assert float(per[0]["weighted_f1"]) == 1.0

    def test_agreeing_configs_give_extreme_shares(self, tmp_path):
        task, hyps, records, _ = toy_bundle()
        files = write_bundle(tmp_path / "mv", task, hyps, records + self.reversed_records(records))
        out = tmp_path / "out"
        main(audit_args(files, out, "--restrict-configs", "b,d"))
        main(["multiverse", "--outcomes", str(out / "outcomes.csv"), "--hypothesis-id", "toy:half", "--out", str(out)])
        (summary,) = read_csv(out / "multiverse_summary.csv")
        assert float(summary["share_significant"]) == 1.0
        assert float(summary["share_positive"]) == 1.0 and float(summary["share_negative"]) == 0.0
        assert summary["min_p"] == summary["max_p"]

    def test_unknown_hypothesis(self, toy_files, tmp_path):
        out = tmp_path / "out"
        main(audit_args(toy_files, out))
        assert main(["multiverse", "--outcomes", str(out / "outcomes.csv"), "--hypothesis-id", "nope", "--out", str(out)]) == 2


class TestSimulateAndMitigate:
    def scenario_file(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps({
            "n0": 150, "n1": 150, "p0": 0.3, "p1": 0.45, "replications": 20, "seed": 1,
            "confusion0": {"labels": ["negative", "positive"], "matrix": [[1, 0, 0], [0, 1, 0]]},
            "confusion1": {"labels": ["negative", "positive"], "matrix": [[0.8, 0.2, 0], [0.2, 0.8, 0]]},
        }))
        return str(path)

    def test_simulate_bundle_then_mitigate(self, tmp_path):
        sim = tmp_path / "sim"
        assert main(["simulate", "--scenario", self.scenario_file(tmp_path), "--bundle", "--out", str(sim)]) == 0
        curves = read_csv(sim / "curves.csv")
        assert {r["metric"] for r in curves} >= {"type_i", "type_ii", "type_s"}
        assert main(["mitigate", "--task", str(sim / "task.json"), "--hypotheses", str(sim / "hypotheses.json"),
                     "--annotations", str(sim / "annotations.jsonl"), "--configs", str(sim / "configs.json"),
                     "--budget", "50", "--strategy", "M1", "--strategy", "M3", "--strategy", "M9",
                     "--model-selection", "best", "--out", str(sim)]) == 0
        rows = read_csv(sim / "mitigation.csv")
        assert [r["strategy_id"] for r in rows] == ["M1", "M3", "M9"]
        assert list(rows[0])[:11] == ["strategy_id", "budget", "model_selection", "beta", "se", "p", "significant",
                                      "lambda", "folds", "splits", "fallback_used"]
        assert rows[1]["folds"] and not rows[1]["lambda"] and rows[2]["lambda"]

    def test_budget_over_cap(self, tmp_path):
        sim = tmp_path / "sim"
        main(["simulate", "--scenario", self.scenario_file(tmp_path), "--bundle", "--replications", "0", "--out", str(sim)])
        assert not (sim / "curves.csv").exists()
        code = main(["mitigate", "--task", str(sim / "task.json"), "--hypotheses", str(sim / "hypotheses.json"),
                     "--annotations", str(sim / "annotations.jsonl"), "--budget", "250", "--strategy", "M1",
                     "--out", str(sim)])
        assert code == 2

    def test_hypotheses_command(self, toy_files, tmp_path):
        assert main(["hypotheses", "--task", toy_files["task"], "--out", str(tmp_path)]) == 0
        data = json.loads((tmp_path / "hypotheses.json").read_text())
        assert data and all({"group0", "group1"} <= set(v) for v in data.values())


class TestAnnotateCommand:
    def test_annotate_with_fake_endpoint(self, toy_files, tmp_path, monkeypatch):
        monkeypatch.setenv("FAKE_KEY", "k")
        configs = tmp_path / "configs.json"
        configs.write_text(json.dumps({
            "configs": [{"config_id": "fake", "model_name": "m", "endpoint_ref": "local",
                         "prompt_template": "Label: {text}", "output_mapping": [["pos", "pos"], ["neg", "neg"]]}],
            "endpoints": {"local": {"base_url": "http://fake.local/v1", "api_key_env_var": "FAKE_KEY"}},
        }))
        calls = []

        def handle(request):
            calls.append(1)
            return httpx.Response(200, json={"choices": [{"message": {"content": "pos"}}]})

        store = tmp_path / "ann.jsonl"
        args = ["annotate", "--task", toy_files["task"], "--configs", str(configs), "--annotations", str(store)]
        assert main(args, transport=httpx.MockTransport(handle)) == 0
        assert len(calls) == 400 and len(store.read_text().splitlines()) == 400
        first = store.read_bytes()
        assert main(args, transport=httpx.MockTransport(handle)) == 0
        assert len(calls) == 400 and store.read_bytes() == first

    def test_missing_key_exit_code(self, toy_files, tmp_path, monkeypatch):
        monkeypatch.delenv("FAKE_KEY", raising=False)
        configs = tmp_path / "configs.json"
        configs.write_text(json.dumps({
            "configs": [{"config_id": "fake", "model_name": "m", "endpoint_ref": "local",
                         "prompt_template": "Label: {text}", "output_mapping": [["pos", "pos"]]}],
            "endpoints": {"local": {"base_url": "http://fake.local/v1", "api_key_env_var": "FAKE_KEY"}},
        }))
        args = ["annotate", "--task", toy_files["task"], "--configs", str(configs), "--annotations", str(tmp_path / "a.jsonl")]
        assert main(args) == 3
