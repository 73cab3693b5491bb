"""Orchestration: draft in parallel, select once, answer or rethink.

The target backend is touched at most twice per question: one optional
thinking pass (when every draft was rejected, or in vanilla mode) and one
answer pass that continues from a closed think block.  Keeping the phases as
separate calls is what lets every stage carry backend-reported token counts
and durations.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Mapping, Optional, Sequence, Union

from .backends import Backend, FinishReason
from .core import (
    DEFAULT_THINK_CLOSE,
    DEFAULT_THINK_OPEN,
    CotDraft,
    CotSource,
    GenerationParams,
    Question,
    ReasoningTrace,
    SelectionOutcome,
    StageLatencies,
    extract_think_block,
)
from .data import extract_candidate_answer, grade_answer
from .drafting import (
    AllDraftsFailed,
    closed_think_block,
    draft_chains,
    longest_draft_tokens,
    MAX_DRAFTS,
)
from .selection import (
    SPECIAL_OPTION_TEXT,
    SelectionFailed,
    decide,
    render_selection_prompt,
    select_draft,
)

logger = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = "1"

RunMode = Literal["scot", "vanilla"]


class SchemaMismatch(ValueError):
    """A trace file declares a schema this build cannot read."""


def _default_draft_params() -> GenerationParams:
    return GenerationParams(temperature=0.6, max_new_tokens=5000)


def _default_target_params() -> GenerationParams:
    return GenerationParams(temperature=0.0, max_new_tokens=20480)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs besides the backends themselves.

    Endpoints are backend names resolved against the mapping passed to the
    run functions; the selector and answer endpoints may name the same
    backend.  ``single_draft`` forces ``n`` to 1; ``error_correction`` off
    removes the final escape option so a draft is always accepted.
    """

    n: int = 5
    draft_params: GenerationParams = field(default_factory=_default_draft_params)
    target_params: GenerationParams = field(default_factory=_default_target_params)
    single_draft: bool = False
    error_correction: bool = True
    draft_endpoint: str = "draft"
    selector_endpoint: str = "selector"
    answer_endpoint: str = "target"
    think_open: str = DEFAULT_THINK_OPEN
    think_close: str = DEFAULT_THINK_CLOSE
    special_option_text: str = SPECIAL_OPTION_TEXT
    base_seed: int = 0
    question_parallelism: int = 1

    def __post_init__(self) -> None:
        if self.single_draft:
            object.__setattr__(self, "n", 1)
        if not 1 <= self.n <= MAX_DRAFTS:
            raise ValueError(f"n must be in 1..{MAX_DRAFTS}, got {self.n}")
        if self.question_parallelism < 1:
            raise ValueError("question_parallelism must be >= 1")
        if not self.think_open or not self.think_close:
            raise ValueError("think delimiters must be non-empty")
        if self.think_open == self.think_close:
            raise ValueError("think delimiters must be distinct")


@dataclass(frozen=True)
class FailureRecord:
    """A question that produced no trace; batches record these and continue."""

    question_id: str
    error: str


def _grade(question: Question, answer_text: str, flags: list[str]) -> Optional[bool]:
    if not question.gold_answer:
        return None
    if extract_candidate_answer(answer_text) is None:
        flags.append("no_answer_found")
        return False
    return grade_answer(answer_text, question.gold_answer)


def _answer_phase(
    question: Question,
    cot: str,
    answerer: Backend,
    cfg: PipelineConfig,
):
    """Generate the final answer as a continuation of a closed think block,
    with further thinking stopped at any reopened delimiter."""
    params = replace(cfg.target_params, seed=cfg.base_seed).with_stop(cfg.think_open)
    prefix = f"{cfg.think_open}{cot}{cfg.think_close}"
    return answerer.generate(question.text, params, assistant_prefix=prefix)


def _thinking_phase(question: Question, answerer: Backend, cfg: PipelineConfig):
    """One full thinking pass on the target; returns (cot, generation)."""
    params = replace(cfg.target_params, seed=cfg.base_seed).with_stop(cfg.think_close)
    generation = answerer.generate(question.text, params)
    cot, _, _ = extract_think_block(
        generation.text, cfg.think_open, cfg.think_close
    )
    return cot, generation


def run_scot(
    question: Question,
    cfg: PipelineConfig,
    backends: Mapping[str, Backend],
    dataset: str = "",
) -> ReasoningTrace:
    """Answer one question with speculative chains.

    Stages: draft ``n`` chains in parallel, render the option prompt, select
    in one constrained step, then either answer from the accepted draft or
    rethink from scratch on the target.  Accepting a draft means the target
    generates zero thinking tokens.
    """
    draft_backend = backends[cfg.draft_endpoint]
    selector = backends[cfg.selector_endpoint]
    answerer = backends[cfg.answer_endpoint]
    flags: list[str] = []

    selection: Optional[SelectionOutcome] = None
    drafts: Sequence[CotDraft] = ()
    try:
        drafts = draft_chains(
            question, cfg.n, cfg.draft_params, draft_backend,
            base_seed=cfg.base_seed,
            think_open=cfg.think_open, think_close=cfg.think_close,
        )
    except AllDraftsFailed:
        if not cfg.error_correction:
            # without the escape option there is no rethink to degrade to
            raise
        logger.warning("question %s: all drafts failed; rethinking", question.id)
        flags.append("all_drafts_failed")
        rethink = True
    else:
        prompt = render_selection_prompt(
            question, drafts, cfg.special_option_text,
            include_special=cfg.error_correction,
        )
        try:
            selection = select_draft(prompt, selector)
        except SelectionFailed as exc:
            logger.warning("question %s: %s", question.id, exc)
            flags.append("selection_failed")
            # conservative default: distrust the drafts when we may rethink
            fallback_index = cfg.n + 1 if cfg.error_correction else 1
            selection = SelectionOutcome(
                chosen_index=fallback_index, scores={}, latency_ms=0.0,
                fallback_used=True,
            )
        rethink = decide(selection, cfg.n).rethink

    drafting_ms = max((d.latency_ms for d in drafts), default=0.0)
    selection_ms = selection.latency_ms if selection is not None else 0.0

    if rethink:
        cot, thinking = _thinking_phase(question, answerer, cfg)
        source = CotSource.TARGET_RETHINK
        l_m = thinking.token_count
        thinking_ms = thinking.duration_ms
    else:
        chosen = drafts[selection.chosen_index - 1]
        cot = chosen.text
        source = CotSource.DRAFT_ACCEPTED
        l_m = 0
        thinking_ms = 0.0

    answer = _answer_phase(question, cot, answerer, cfg)
    stages = StageLatencies(
        drafting=drafting_ms,
        selection=selection_ms,
        target_thinking=thinking_ms,
        answering=answer.duration_ms,
    )
    return ReasoningTrace(
        question_id=question.id,
        dataset=dataset,
        drafts=tuple(drafts),
        selection=selection,
        cot_source=source,
        final_cot=cot,
        answer_text=answer.text,
        l_m=l_m,
        l_md=longest_draft_tokens(drafts),
        answer_tokens=answer.token_count,
        stage_latencies_ms=stages,
        total_latency_ms=stages.total(),
        correct=_grade(question, answer.text, flags),
        flags=tuple(flags),
    )


def run_vanilla(
    question: Question,
    cfg: PipelineConfig,
    backends: Mapping[str, Backend],
    dataset: str = "",
) -> ReasoningTrace:
    """Answer one question with the target alone: think once, then answer."""
    answerer = backends[cfg.answer_endpoint]
    flags: list[str] = []
    cot, thinking = _thinking_phase(question, answerer, cfg)
    answer = _answer_phase(question, cot, answerer, cfg)
    stages = StageLatencies(
        drafting=0.0,
        selection=0.0,
        target_thinking=thinking.duration_ms,
        answering=answer.duration_ms,
    )
    return ReasoningTrace(
        question_id=question.id,
        dataset=dataset,
        drafts=(),
        selection=None,
        cot_source=CotSource.VANILLA_TARGET,
        final_cot=cot,
        answer_text=answer.text,
        l_m=thinking.token_count,
        l_md=0,
        answer_tokens=answer.token_count,
        stage_latencies_ms=stages,
        total_latency_ms=stages.total(),
        correct=_grade(question, answer.text, flags),
        flags=tuple(flags),
    )


def run_batch(
    questions: Sequence[Question],
    cfg: PipelineConfig,
    backends: Mapping[str, Backend],
    mode: RunMode = "scot",
    dataset: str = "",
) -> list[Union[ReasoningTrace, FailureRecord]]:
    """Run every question, preserving input order.

    A question that fails even after backend retries becomes a FailureRecord
    instead of aborting the batch.
    """
    if mode not in ("scot", "vanilla"):
        raise ValueError(f"mode must be 'scot' or 'vanilla', got {mode!r}")
    run_one = run_scot if mode == "scot" else run_vanilla

    def guarded(question: Question) -> Union[ReasoningTrace, FailureRecord]:
        try:
            return run_one(question, cfg, backends, dataset=dataset)
        except Exception as exc:  # noqa: BLE001 - batch must survive any question
            logger.exception("question %s failed", question.id)
            return FailureRecord(question_id=question.id, error=str(exc))

    if cfg.question_parallelism <= 1 or len(questions) <= 1:
        return [guarded(q) for q in questions]
    with ThreadPoolExecutor(max_workers=cfg.question_parallelism) as pool:
        return list(pool.map(guarded, questions))


# ---------------------------------------------------------------------------
# Trace files (JSON-lines, schema versioned, timestamps only in the header)


def trace_to_dict(trace: ReasoningTrace) -> dict:
    selection = None
    if trace.selection is not None:
        selection = {
            "chosen_index": trace.selection.chosen_index,
            "scores": {
                str(k): trace.selection.scores[k]
                for k in sorted(trace.selection.scores)
            },
            "latency_ms": trace.selection.latency_ms,
            "fallback_used": trace.selection.fallback_used,
        }
    stages = trace.stage_latencies_ms
    return {
        "record": "trace",
        "question_id": trace.question_id,
        "dataset": trace.dataset,
        "drafts": [
            {
                "index": d.index,
                "text": d.text,
                "token_count": d.token_count,
                "latency_ms": d.latency_ms,
                "truncated": d.truncated,
            }
            for d in trace.drafts
        ],
        "selection": selection,
        "cot_source": trace.cot_source.value,
        "final_cot": trace.final_cot,
        "answer_text": trace.answer_text,
        "l_m": trace.l_m,
        "l_md": trace.l_md,
        "answer_tokens": trace.answer_tokens,
        "stage_latencies_ms": {
            "drafting": stages.drafting,
            "selection": stages.selection,
            "target_thinking": stages.target_thinking,
            "answering": stages.answering,
        },
        "total_latency_ms": trace.total_latency_ms,
        "correct": trace.correct,
        "flags": list(trace.flags),
    }


def trace_from_dict(record: dict) -> ReasoningTrace:
    selection = None
    if record.get("selection") is not None:
        raw = record["selection"]
        selection = SelectionOutcome(
            chosen_index=raw["chosen_index"],
            scores={int(k): v for k, v in raw["scores"].items()},
            latency_ms=raw["latency_ms"],
            fallback_used=raw["fallback_used"],
        )
    stages = record["stage_latencies_ms"]
    return ReasoningTrace(
        question_id=record["question_id"],
        dataset=record.get("dataset", ""),
        drafts=tuple(
            CotDraft(
                index=d["index"],
                text=d["text"],
                token_count=d["token_count"],
                latency_ms=d["latency_ms"],
                truncated=d["truncated"],
            )
            for d in record.get("drafts", [])
        ),
        selection=selection,
        cot_source=CotSource(record["cot_source"]),
        final_cot=record["final_cot"],
        answer_text=record["answer_text"],
        l_m=record["l_m"],
        l_md=record["l_md"],
        answer_tokens=record["answer_tokens"],
        stage_latencies_ms=StageLatencies(
            drafting=stages["drafting"],
            selection=stages["selection"],
            target_thinking=stages["target_thinking"],
            answering=stages["answering"],
        ),
        total_latency_ms=record["total_latency_ms"],
        correct=record.get("correct"),
        flags=tuple(record.get("flags", ())),
    )


def write_trace_file(
    path: Union[str, Path],
    records: Sequence[Union[ReasoningTrace, FailureRecord]],
    *,
    dataset: str,
    mode: RunMode,
) -> None:
    header = {
        "record": "header",
        "kind": "trace_file",
        "schema_version": TRACE_SCHEMA_VERSION,
        "dataset": dataset,
        "mode": mode,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(header) + "\n")
        for record in records:
            if isinstance(record, FailureRecord):
                row = {
                    "record": "failure",
                    "question_id": record.question_id,
                    "error": record.error,
                }
            else:
                row = trace_to_dict(record)
            handle.write(json.dumps(row) + "\n")


def read_trace_file(
    path: Union[str, Path],
) -> tuple[dict, list[Union[ReasoningTrace, FailureRecord]]]:
    """Parse a trace file; raises SchemaMismatch on a foreign schema."""
    with open(path, encoding="utf-8") as handle:
        lines = [line for line in (l.strip() for l in handle) if line]
    if not lines:
        raise SchemaMismatch(f"{path}: empty file")
    header = json.loads(lines[0])
    if header.get("record") != "header" or header.get("kind") != "trace_file":
        raise SchemaMismatch(f"{path}: missing trace file header")
    if header.get("schema_version") != TRACE_SCHEMA_VERSION:
        raise SchemaMismatch(
            f"{path}: schema_version {header.get('schema_version')!r} is not "
            f"{TRACE_SCHEMA_VERSION!r}"
        )
    records: list[Union[ReasoningTrace, FailureRecord]] = []
    for line in lines[1:]:
        record = json.loads(line)
        if record.get("record") == "failure":
            records.append(
                FailureRecord(
                    question_id=record["question_id"], error=record["error"]
                )
            )
        else:
            records.append(trace_from_dict(record))
    return header, records
