import csv
import json

import pytest

from scot import cli
from scot.core import CotSource
from scot.pipeline import read_trace_file, write_trace_file
from simsupport import make_trace, write_sim_scripts


def json_line(captured: str) -> dict:
    return json.loads(next(l for l in captured.splitlines() if l.startswith("{")))


class TestRun:
    def test_scot_run_writes_traces_and_reports(self, workdir, capsys, tmp_path):
        wd = workdir(count=12, hard_rate=0.25)
        out = tmp_path / "traces.jsonl"
        code = cli.main([
            "run", "--config", str(wd.config),
            "--dataset", str(wd.dataset), "--out", str(out),
        ])
        captured = capsys.readouterr().out
        assert code == 0
        assert "latency split:" in captured
        assert f"12 trace(s) written to {out}" in captured
        flat = json_line(captured)
        assert flat["mode"] == "scot"
        assert flat["num_questions"] == 12
        assert flat["accuracy"] == 1.0
        header, records = read_trace_file(out)
        assert header["mode"] == "scot" and header["dataset"] == "dataset"
        assert len(records) == 12

    def test_vanilla_run(self, workdir, capsys, tmp_path):
        wd = workdir(count=4)
        out = tmp_path / "traces.jsonl"
        code = cli.main([
            "run", "--config", str(wd.config), "--dataset", str(wd.dataset),
            "--mode", "vanilla", "--out", str(out),
        ])
        assert code == 0
        flat = json_line(capsys.readouterr().out)
        assert flat["mode"] == "vanilla"
        assert flat["latency_fractions"] == {
            "target": 1.0, "draft": 0.0, "selection": 0.0,
        }

    def test_empty_dataset_exits_all_failed(self, workdir, capsys, tmp_path):
        wd = workdir(count=0)
        code = cli.main([
            "run", "--config", str(wd.config),
            "--dataset", str(wd.dataset), "--out", str(tmp_path / "t.jsonl"),
        ])
        assert code == 3
        assert "no question produced a trace" in capsys.readouterr().err

    def test_missing_dataset_is_a_config_error(self, workdir, capsys, tmp_path):
        wd = workdir(count=1)
        code = cli.main([
            "run", "--config", str(wd.config),
            "--dataset", str(wd.root / "nope.jsonl"),
            "--out", str(tmp_path / "t.jsonl"),
        ])
        assert code == 2
        assert "config error" in capsys.readouterr().err


def scot_trace_file(path):
    trace = make_trace(
        drafting_ms=11000.0, selection_ms=700.0, answering_ms=100.0,
        draft_tokens=265, correct=True,
    )
    write_trace_file(path, [trace], dataset="ds", mode="scot")


def vanilla_trace_file(path):
    trace = make_trace(
        source=CotSource.VANILLA_TARGET, l_m=302, thinking_ms=26500.0,
        answering_ms=100.0, correct=True,
    )
    write_trace_file(path, [trace], dataset="ds", mode="vanilla")


class TestReport:
    def test_paired_report_computes_the_speedup(self, tmp_path, capsys):
        scot_path, vanilla_path = tmp_path / "s.jsonl", tmp_path / "v.jsonl"
        scot_trace_file(scot_path)
        vanilla_trace_file(vanilla_path)
        code = cli.main([
            "report", "--traces", str(scot_path), "--vanilla", str(vanilla_path),
        ])
        assert code == 0
        flat = json_line(capsys.readouterr().out)
        assert flat["speedup_r"] == 2.26

    def test_csv_row_flattens_the_fractions(self, tmp_path, capsys):
        scot_path, out_csv = tmp_path / "s.jsonl", tmp_path / "report.csv"
        scot_trace_file(scot_path)
        code = cli.main([
            "report", "--traces", str(scot_path), "--csv", str(out_csv),
        ])
        assert code == 0
        assert f"report row written to {out_csv}" in capsys.readouterr().out
        with open(out_csv, newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 1
        row = rows[0]
        assert row["mode"] == "scot"
        assert float(row["fraction_draft"]) + float(row["fraction_selection"]) + \
            float(row["fraction_target"]) == pytest.approx(1.0)

    def test_schema_mismatch_exit_code(self, tmp_path, capsys):
        path = tmp_path / "old.jsonl"
        path.write_text(
            json.dumps({"record": "header", "schema_version": "99"}) + "\n",
            encoding="utf-8",
        )
        assert cli.main(["report", "--traces", str(path)]) == 4
        assert "schema error" in capsys.readouterr().err

    def test_missing_trace_file_is_a_config_error(self, tmp_path, capsys):
        assert cli.main(["report", "--traces", str(tmp_path / "nope.jsonl")]) == 2
        assert "config error" in capsys.readouterr().err


class TestBenchChains:
    def test_sweep_writes_one_row_per_chain_count(self, workdir, tmp_path):
        wd = workdir(count=8, hard_rate=0.25)
        out = tmp_path / "sweep.csv"
        code = cli.main([
            "bench-chains", "--config", str(wd.config),
            "--dataset", str(wd.dataset), "--n-values", "1,3", "--out", str(out),
        ])
        assert code == 0
        with open(out, newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["n", "accuracy", "mean_latency_s"]
        assert [row[0] for row in rows[1:]] == ["1", "3"]
        assert all(len(row) == 3 for row in rows[1:])

    def test_sweep_defaults_to_stdout(self, workdir, capsys):
        wd = workdir(count=2)
        code = cli.main([
            "bench-chains", "--config", str(wd.config),
            "--dataset", str(wd.dataset), "--n-values", "2",
        ])
        assert code == 0
        assert capsys.readouterr().out.startswith("n,accuracy,mean_latency_s")

    @pytest.mark.parametrize("values,fragment", [
        ("10", "outside 1..9"),
        ("abc", "bad --n-values"),
        ("", "--n-values is empty"),
    ])
    def test_bad_chain_counts(self, workdir, capsys, values, fragment):
        wd = workdir(count=1)
        code = cli.main([
            "bench-chains", "--config", str(wd.config),
            "--dataset", str(wd.dataset), "--n-values", values,
        ])
        assert code == 2
        assert fragment in capsys.readouterr().err


class TestMakeAlignData:
    def test_builds_and_writes_pairs(self, workdir, capsys, tmp_path):
        wd = workdir(count=10)
        out = tmp_path / "align.jsonl"
        code = cli.main([
            "make-align-data", "--config", str(wd.config),
            "--dataset", str(wd.dataset), "--out", str(out),
        ])
        captured = capsys.readouterr().out
        assert code == 0
        assert "10 records written" in captured
        assert "skipped 0 open think block(s), 0 failure(s)" in captured
        lines = out.read_text(encoding="utf-8").splitlines()
        assert json.loads(lines[0])["kind"] == "alignment_data"
        assert len(lines) == 11

    def test_manifest_overlap_exit_code(self, workdir, capsys, tmp_path):
        wd = workdir(count=6)
        manifest = tmp_path / "eval.txt"
        manifest.write_text("q00002\nq00004\n", encoding="utf-8")
        code = cli.main([
            "make-align-data", "--config", str(wd.config),
            "--dataset", str(wd.dataset), "--out", str(tmp_path / "a.jsonl"),
            "--manifest", str(manifest),
        ])
        assert code == 5
        assert "manifest error" in capsys.readouterr().err


class TestMakeSelectData:
    def test_builds_and_writes_examples(self, workdir, capsys, tmp_path):
        wd = workdir(count=6, hard_rate=0.5)
        out = tmp_path / "select.jsonl"
        code = cli.main([
            "make-select-data", "--config", str(wd.config),
            "--dataset", str(wd.dataset), "--out", str(out),
        ])
        captured = capsys.readouterr().out
        assert code == 0
        assert "6 records written" in captured
        assert "0 question(s) failed" in captured
        lines = out.read_text(encoding="utf-8").splitlines()
        assert json.loads(lines[0])["kind"] == "selection_data"
        labels = [frozenset(json.loads(l)["label_set"]) for l in lines[1:]]
        assert frozenset({6}) in labels  # hard questions defeat every draft

    def test_dataset_without_answers_is_a_config_error(self, workdir, capsys, tmp_path):
        wd = workdir(count=3, with_answers=False)
        code = cli.main([
            "make-select-data", "--config", str(wd.config),
            "--dataset", str(wd.dataset), "--out", str(tmp_path / "s.jsonl"),
        ])
        assert code == 2
        assert "gold answers" in capsys.readouterr().err

    def test_empty_dataset_writes_a_bare_header(self, workdir, capsys, tmp_path):
        wd = workdir(count=0)
        out = tmp_path / "select.jsonl"
        code = cli.main([
            "make-select-data", "--config", str(wd.config),
            "--dataset", str(wd.dataset), "--out", str(out),
        ])
        assert code == 0
        assert "0 records written" in capsys.readouterr().out
        assert len(out.read_text(encoding="utf-8").splitlines()) == 1


class TestConfigErrors:
    def run_with_config(self, tmp_path, config: dict, capsys) -> str:
        write_sim_scripts(tmp_path / "sim_scripts.json")
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config), encoding="utf-8")
        dataset = tmp_path / "d.jsonl"
        dataset.write_text(
            json.dumps({"id": "q1", "question": "Q? [gold=4]", "answer": 4}) + "\n",
            encoding="utf-8",
        )
        code = cli.main([
            "run", "--config", str(config_path), "--dataset", str(dataset),
            "--out", str(tmp_path / "t.jsonl"),
        ])
        assert code == 2
        return capsys.readouterr().err

    def sim_backends_entry(self):
        entry = {"kind": "sim", "script": "sim_scripts.json"}
        return {
            "draft": dict(entry, scenario="draft_gsm"),
            "target": dict(entry, scenario="target_gsm"),
            "selector": dict(entry, scenario="target_gsm"),
        }

    def test_unknown_pipeline_key_is_named(self, tmp_path, capsys):
        err = self.run_with_config(tmp_path, {
            "backends": self.sim_backends_entry(),
            "pipeline": {"bogus": 1},
        }, capsys)
        assert "unknown key 'bogus'" in err

    def test_unknown_backend_kind(self, tmp_path, capsys):
        err = self.run_with_config(tmp_path, {
            "backends": {"draft": {"kind": "carrier-pigeon"}},
        }, capsys)
        assert "carrier-pigeon" in err

    def test_unresolved_endpoint(self, tmp_path, capsys):
        backends = self.sim_backends_entry()
        del backends["selector"]
        err = self.run_with_config(
            tmp_path, {"backends": backends}, capsys
        )
        assert "endpoint 'selector' names no configured backend" in err

    def test_unknown_top_level_key(self, tmp_path, capsys):
        err = self.run_with_config(tmp_path, {
            "backends": self.sim_backends_entry(), "extras": {},
        }, capsys)
        assert "unknown key 'extras'" in err

    def test_bad_params_section(self, tmp_path, capsys):
        err = self.run_with_config(tmp_path, {
            "backends": self.sim_backends_entry(),
            "pipeline": {"draft_params": {"temperature": 0.6, "beam": 4}},
        }, capsys)
        assert "pipeline.draft_params: unknown key 'beam'" in err
