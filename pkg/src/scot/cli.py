"""Command-line entry points: run, report, bench-chains, and data builders.

Exit codes: 0 success, 2 configuration problem, 3 every question failed,
4 trace schema mismatch, 5 evaluation-manifest overlap.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .backends import Backend, backend_from_config
from .core import GenerationParams, ReasoningTrace
from .data import (
    ManifestOverlap,
    ParseError,
    DuplicateId,
    build_alignment_data,
    build_selection_data,
    load_dataset,
    read_eval_manifest,
    write_alignment_file,
    write_selection_file,
)
from .drafting import MAX_DRAFTS
from .metrics import aggregate, format_report, report_to_dict
from .pipeline import (
    FailureRecord,
    PipelineConfig,
    SchemaMismatch,
    read_trace_file,
    run_batch,
    write_trace_file,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ALL_FAILED = 3
EXIT_SCHEMA = 4
EXIT_MANIFEST = 5


class ConfigError(ValueError):
    pass


def _params_from_dict(raw: dict, where: str) -> GenerationParams:
    known = {"temperature", "max_new_tokens", "seed", "stop_sequences"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{where}: unknown key {key!r}")
    cleaned = dict(raw)
    if "stop_sequences" in cleaned:
        cleaned["stop_sequences"] = tuple(cleaned["stop_sequences"])
    try:
        return GenerationParams(**cleaned)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_PIPELINE_KEYS = {
    "n", "draft_params", "target_params", "single_draft", "error_correction",
    "draft_endpoint", "selector_endpoint", "answer_endpoint",
    "think_open", "think_close", "special_option_text",
    "base_seed", "question_parallelism",
}


def load_run_setup(config_path: str) -> tuple[PipelineConfig, dict[str, Backend]]:
    """Parse the declarative run configuration into a config and backends.

    The file is JSON with a ``backends`` map and an optional ``pipeline``
    section; relative script paths resolve against the file's directory.
    """
    path = Path(config_path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {config_path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {config_path}: expected a JSON object")
    for key in raw:
        if key not in ("backends", "pipeline"):
            raise ConfigError(f"config {config_path}: unknown key {key!r}")

    backend_entries = raw.get("backends")
    if not isinstance(backend_entries, dict) or not backend_entries:
        raise ConfigError(f"config {config_path}: missing or empty 'backends'")
    backends = {}
    for name, entry in backend_entries.items():
        try:
            backends[name] = backend_from_config(entry, base_dir=path.parent)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"backends.{name}: {exc}") from exc

    pipeline_raw = dict(raw.get("pipeline") or {})
    for key in pipeline_raw:
        if key not in _PIPELINE_KEYS:
            raise ConfigError(f"pipeline: unknown key {key!r}")
    for params_key in ("draft_params", "target_params"):
        if params_key in pipeline_raw:
            pipeline_raw[params_key] = _params_from_dict(
                pipeline_raw[params_key], f"pipeline.{params_key}"
            )
    try:
        cfg = PipelineConfig(**pipeline_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"pipeline: {exc}") from exc

    for endpoint in (cfg.draft_endpoint, cfg.selector_endpoint, cfg.answer_endpoint):
        if endpoint not in backends:
            raise ConfigError(f"endpoint {endpoint!r} names no configured backend")
    return cfg, backends


def _dataset_name(dataset_path: str) -> str:
    return Path(dataset_path).stem


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg, backends = load_run_setup(args.config)
        questions = load_dataset(args.dataset)
    except (ConfigError, ParseError, DuplicateId, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    dataset = _dataset_name(args.dataset)
    records = run_batch(questions, cfg, backends, mode=args.mode, dataset=dataset)
    traces = [r for r in records if isinstance(r, ReasoningTrace)]
    failures = [r for r in records if isinstance(r, FailureRecord)]
    if failures:
        logger.warning("%d question(s) failed", len(failures))
    if not traces:
        print("error: no question produced a trace", file=sys.stderr)
        return EXIT_ALL_FAILED
    write_trace_file(args.out, records, dataset=dataset, mode=args.mode)
    report = aggregate(traces)
    print(format_report(report))
    print(json.dumps(report_to_dict(report)))
    print(f"{len(traces)} trace(s) written to {args.out}")
    return EXIT_OK


def _load_traces(path: str) -> list[ReasoningTrace]:
    _, records = read_trace_file(path)
    return [r for r in records if isinstance(r, ReasoningTrace)]


def cmd_report(args: argparse.Namespace) -> int:
    try:
        traces = _load_traces(args.traces)
        vanilla = _load_traces(args.vanilla) if args.vanilla else None
    except SchemaMismatch as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = aggregate(traces, paired_vanilla=vanilla)
    print(format_report(report))
    print(json.dumps(report_to_dict(report)))
    if args.csv:
        flat = report_to_dict(report)
        fractions = flat.pop("latency_fractions")
        for key, value in fractions.items():
            flat[f"fraction_{key}"] = value
        with open(args.csv, "w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(flat))
            writer.writeheader()
            writer.writerow(flat)
        print(f"report row written to {args.csv}")
    return EXIT_OK


def cmd_bench_chains(args: argparse.Namespace) -> int:
    try:
        values = [int(v) for v in args.n_values.split(",") if v.strip()]
    except ValueError as exc:
        print(f"config error: bad --n-values: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not values:
        print("config error: --n-values is empty", file=sys.stderr)
        return EXIT_CONFIG
    bad = [v for v in values if not 1 <= v <= MAX_DRAFTS]
    if bad:
        print(
            f"config error: chain counts {bad} outside 1..{MAX_DRAFTS}",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    try:
        cfg, backends = load_run_setup(args.config)
        questions = load_dataset(args.dataset)
    except (ConfigError, ParseError, DuplicateId, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    dataset = _dataset_name(args.dataset)
    rows = []
    for n in values:
        sized = replace(cfg, n=n, single_draft=False)
        records = run_batch(questions, sized, backends, mode="scot", dataset=dataset)
        traces = [r for r in records if isinstance(r, ReasoningTrace)]
        if not traces:
            print(f"error: n={n} produced no traces", file=sys.stderr)
            return EXIT_ALL_FAILED
        report = aggregate(traces)
        rows.append((n, report.accuracy, report.mean_latency_s))
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(["n", "accuracy", "mean_latency_s"])
        for n, accuracy, latency in rows:
            writer.writerow([n, f"{accuracy:.4f}", f"{latency:.4f}"])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _manifest_from_args(args: argparse.Namespace):
    return read_eval_manifest(args.manifest) if args.manifest else None


def cmd_make_align_data(args: argparse.Namespace) -> int:
    try:
        cfg, backends = load_run_setup(args.config)
        questions = load_dataset(args.dataset)
        manifest = _manifest_from_args(args)
    except (ConfigError, ParseError, DuplicateId, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = build_alignment_data(
            questions,
            backends[cfg.answer_endpoint],
            cfg.target_params,
            think_open=cfg.think_open,
            think_close=cfg.think_close,
            base_seed=cfg.base_seed,
            eval_manifest=manifest,
            parallelism=cfg.question_parallelism,
        )
    except ManifestOverlap as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST
    write_alignment_file(args.out, result)
    print(f"{len(result.records)} records written")
    print(f"skipped {result.skipped_open} open think block(s), {result.failed} failure(s)")
    return EXIT_OK


def cmd_make_select_data(args: argparse.Namespace) -> int:
    try:
        cfg, backends = load_run_setup(args.config)
        questions = load_dataset(args.dataset)
        manifest = _manifest_from_args(args)
    except (ConfigError, ParseError, DuplicateId, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = build_selection_data(
            questions,
            backends[cfg.draft_endpoint],
            cfg.n,
            cfg.draft_params,
            think_open=cfg.think_open,
            think_close=cfg.think_close,
            special_text=cfg.special_option_text,
            base_seed=cfg.base_seed,
            eval_manifest=manifest,
            parallelism=cfg.question_parallelism,
        )
    except ManifestOverlap as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_selection_file(args.out, result)
    print(f"{len(result.records)} records written")
    print(f"{result.failed} question(s) failed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scot",
        description="Speculative chain-of-thought runner and tooling",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="answer a dataset and write traces")
    run.add_argument("--config", required=True)
    run.add_argument("--dataset", required=True)
    run.add_argument("--mode", choices=["scot", "vanilla"], default="scot")
    run.add_argument("--out", required=True)
    run.set_defaults(fn=cmd_run)

    report = sub.add_parser("report", help="aggregate a trace file")
    report.add_argument("--traces", required=True)
    report.add_argument("--vanilla", help="paired vanilla trace file")
    report.add_argument("--csv", help="also write the report as one CSV row")
    report.set_defaults(fn=cmd_report)

    bench = sub.add_parser("bench-chains", help="sweep the draft chain count")
    bench.add_argument("--config", required=True)
    bench.add_argument("--dataset", required=True)
    bench.add_argument("--n-values", default="1,2,3,4,5,6,7,8")
    bench.add_argument("--out", help="CSV path (default: stdout)")
    bench.set_defaults(fn=cmd_bench_chains)

    align = sub.add_parser("make-align-data", help="build alignment pairs")
    align.add_argument("--config", required=True)
    align.add_argument("--dataset", required=True)
    align.add_argument("--out", required=True)
    align.add_argument("--manifest", help="held-out evaluation ids")
    align.set_defaults(fn=cmd_make_align_data)

    select = sub.add_parser("make-select-data", help="build selection examples")
    select.add_argument("--config", required=True)
    select.add_argument("--dataset", required=True)
    select.add_argument("--out", required=True)
    select.add_argument("--manifest", help="held-out evaluation ids")
    select.set_defaults(fn=cmd_make_select_data)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
