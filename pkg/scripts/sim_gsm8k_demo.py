#!/usr/bin/env python3
"""Desk-scale demo: speculative vs vanilla reasoning on simulated backends.

Builds a small synthetic workload in --out, runs the engine in both modes
through the regular CLI, and prints the paired report.  The simulated
deployment pairs a 50 tok/s drafter with a 10 tok/s target, so the printed
speedup and latency split are deterministic.
"""

import argparse
import json
import sys
from pathlib import Path

from scot import cli
from scot.backends import synthetic_questions

SCENARIOS = {
    "draft_gsm": {
        "token_rate_tps": 50.0,
        "rules": [
            {"match": "[hard]", "think_tokens": 265, "answer_tokens": 10,
             "correct_rate": 0.0},
            {"think_tokens": 265, "answer_tokens": 10, "correct_rate": 1.0},
        ],
    },
    "target_gsm": {
        "token_rate_tps": 10.0,
        "rules": [
            {"think_tokens": 302, "answer_tokens": 314, "correct_rate": 1.0},
        ],
        "selection": {"mode": "oracle", "latency_ms": 520.0},
    },
}


def write_workload(out: Path, count: int, hard_rate: float, parallelism: int) -> tuple[Path, Path]:
    out.mkdir(parents=True, exist_ok=True)
    (out / "sim_scripts.json").write_text(json.dumps(SCENARIOS, indent=2), "utf-8")
    config = {
        "backends": {
            name: {"kind": "sim", "script": "sim_scripts.json", "scenario": scenario}
            for name, scenario in (
                ("draft", "draft_gsm"),
                ("selector", "target_gsm"),
                ("target", "target_gsm"),
            )
        },
        "pipeline": {"question_parallelism": parallelism},
    }
    config_path = out / "config.json"
    config_path.write_text(json.dumps(config, indent=2), "utf-8")
    dataset_path = out / "questions.jsonl"
    with open(dataset_path, "w", encoding="utf-8") as fh:
        for q in synthetic_questions(count, hard_rate=hard_rate, seed=7):
            fh.write(json.dumps(
                {"id": q.id, "question": q.text, "answer": q.gold_answer}
            ) + "\n")
    return config_path, dataset_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_run", help="working directory")
    parser.add_argument("--count", type=int, default=200)
    parser.add_argument("--hard-rate", type=float, default=0.098,
                        help="share of questions no draft can solve")
    parser.add_argument("--parallelism", type=int, default=8)
    args = parser.parse_args(argv)

    out = Path(args.out)
    config, dataset = write_workload(out, args.count, args.hard_rate, args.parallelism)
    scot_traces = out / "traces_scot.jsonl"
    vanilla_traces = out / "traces_vanilla.jsonl"

    for mode, path in (("scot", scot_traces), ("vanilla", vanilla_traces)):
        print(f"== {mode} run ==")
        code = cli.main([
            "run", "--config", str(config), "--dataset", str(dataset),
            "--mode", mode, "--out", str(path),
        ])
        if code != 0:
            return code
        print()

    print("== paired report ==")
    return cli.main([
        "report", "--traces", str(scot_traces), "--vanilla", str(vanilla_traces),
        "--csv", str(out / "report.csv"),
    ])


if __name__ == "__main__":
    sys.exit(main())
