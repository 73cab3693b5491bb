"""Datasets, answer grading, and builders for alignment and selection data."""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

from .backends import Backend, BackendError
from .core import (
    DEFAULT_THINK_CLOSE,
    DEFAULT_THINK_OPEN,
    GenerationParams,
    Question,
    extract_think_block,
)
from .drafting import AllDraftsFailed, closed_think_block, draft_chains
from .selection import SPECIAL_OPTION_TEXT, render_selection_prompt

logger = logging.getLogger(__name__)

DATA_SCHEMA_VERSION = "1"


class ParseError(ValueError):
    """A dataset line could not be parsed; the message names the line."""


class DuplicateId(ValueError):
    pass


class ManifestOverlap(ValueError):
    """Build input ids collide with the held-out evaluation manifest."""


def load_dataset(path: Union[str, Path]) -> list[Question]:
    """Read a JSON-lines dataset of ``{id, question, answer}`` records.

    ``answer`` may be missing for ungraded corpora.  Order is preserved and
    ids must be unique.
    """
    questions: list[Question] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise ParseError(f"{path}: line {lineno}: expected an object")
            qid = record.get("id")
            text = record.get("question")
            if not qid or not isinstance(qid, str):
                raise ParseError(f"{path}: line {lineno}: missing or bad 'id'")
            if not text or not isinstance(text, str):
                raise ParseError(f"{path}: line {lineno}: missing or bad 'question'")
            if qid in seen:
                raise DuplicateId(f"{path}: line {lineno}: duplicate id {qid!r}")
            seen.add(qid)
            answer = record.get("answer")
            gold = str(answer).strip() if answer is not None else None
            questions.append(Question(id=qid, text=text, gold_answer=gold or None))
    return questions


# ---------------------------------------------------------------------------
# Answer grading


_NUMBER_RE = re.compile(r"-?\d[\d,]*(?:\.\d+)?(?:[ ]?/[ ]?-?\d+)?")


def extract_boxed(text: str) -> Optional[str]:
    """Content of the last ``\\boxed{...}`` in ``text``, brace-balanced."""
    marker = "\\boxed{"
    start = text.rfind(marker)
    if start < 0:
        return None
    depth = 1
    pos = start + len(marker)
    out = []
    while pos < len(text) and depth > 0:
        ch = text[pos]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                break
        out.append(ch)
        pos += 1
    if depth != 0:
        return None
    return "".join(out)


def extract_candidate_answer(text: str) -> Optional[str]:
    """Best-effort final answer: last boxed expression, else last number."""
    boxed = extract_boxed(text)
    if boxed is not None:
        return boxed
    matches = _NUMBER_RE.findall(text)
    return matches[-1] if matches else None


def normalize_answer(raw: str) -> str:
    out = raw.strip().strip("$").strip()
    out = out.replace(",", "").replace(" ", "")
    out = out.rstrip(".")
    return out


def _as_fraction(normalized: str) -> Optional[Fraction]:
    if "/" in normalized:
        parts = normalized.split("/")
        if len(parts) != 2:
            return None
        try:
            return Fraction(int(parts[0]), int(parts[1]))
        except (ValueError, ZeroDivisionError):
            return None
    try:
        return Fraction(normalized)
    except (ValueError, ZeroDivisionError):
        return None


def answers_equal(candidate: str, gold: str) -> bool:
    """Equality after normalization; rationals compare by exact value, so
    ``1/2`` matches ``0.5`` and trailing zeros are immaterial."""
    cand_norm = normalize_answer(candidate)
    gold_norm = normalize_answer(gold)
    cand_frac = _as_fraction(cand_norm)
    gold_frac = _as_fraction(gold_norm)
    if cand_frac is not None and gold_frac is not None:
        return cand_frac == gold_frac
    return cand_norm.casefold() == gold_norm.casefold()


def grade_answer(answer_text: str, gold: str) -> bool:
    """True when the final answer in ``answer_text`` matches ``gold``.

    Returns False when no candidate answer can be extracted.
    """
    if not gold:
        raise ValueError("gold answer must be non-empty")
    candidate = extract_candidate_answer(answer_text)
    if candidate is None:
        return False
    return answers_equal(candidate, gold)


# ---------------------------------------------------------------------------
# Evaluation manifest


def read_eval_manifest(path: Union[str, Path]) -> frozenset[str]:
    """Held-out question ids, one per line (bare or as JSON ``{"id": ...}``)."""
    ids = set()
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            if line.startswith("{"):
                ids.add(str(json.loads(line)["id"]))
            else:
                ids.add(line)
    return frozenset(ids)


def _check_manifest(
    questions: Sequence[Question], manifest: Optional[frozenset[str]]
) -> None:
    if not manifest:
        return
    overlap = sorted(q.id for q in questions if q.id in manifest)
    if overlap:
        shown = ", ".join(overlap[:5])
        raise ManifestOverlap(
            f"{len(overlap)} question id(s) appear in the evaluation manifest: "
            f"{shown}{'...' if len(overlap) > 5 else ''}"
        )


# ---------------------------------------------------------------------------
# Alignment data (question + target chain pairs)


@dataclass(frozen=True)
class AlignmentRecord:
    """One training pair: the question and the target's own delimited chain.

    ``prompt_len`` is the backend-reported token length of the question
    segment, recorded so trainers can split the concatenation.
    """

    question_text: str
    target_cot: str
    prompt_len: int


@dataclass(frozen=True)
class AlignmentBuildResult:
    records: tuple[AlignmentRecord, ...]
    skipped_open: int
    failed: int


def build_alignment_data(
    questions: Sequence[Question],
    target_backend: Backend,
    params: GenerationParams,
    *,
    think_open: str = DEFAULT_THINK_OPEN,
    think_close: str = DEFAULT_THINK_CLOSE,
    base_seed: int = 0,
    eval_manifest: Optional[frozenset[str]] = None,
    parallelism: int = 1,
) -> AlignmentBuildResult:
    """Collect ``(question, target chain)`` pairs from the target backend.

    Generations whose think block never closes are skipped and counted, since
    an unterminated chain makes an unusable training pair.
    """
    _check_manifest(questions, eval_manifest)
    gen_params = replace(params, seed=base_seed).with_stop(think_close)

    def one(question: Question) -> Optional[AlignmentRecord]:
        generation = target_backend.generate(question.text, gen_params)
        cot, _, closed = extract_think_block(generation.text, think_open, think_close)
        closed = closed_think_block(
            generation.text, closed, gen_params, generation.finish_reason,
            think_open, think_close,
        )
        if not closed:
            return None
        return AlignmentRecord(
            question_text=question.text,
            target_cot=f"{think_open}{cot}{think_close}",
            prompt_len=generation.prompt_tokens,
        )

    records: list[AlignmentRecord] = []
    skipped_open = 0
    failed = 0
    for outcome in _map_ordered(one, questions, parallelism):
        if isinstance(outcome, BackendError):
            failed += 1
        elif outcome is None:
            skipped_open += 1
        else:
            records.append(outcome)
    return AlignmentBuildResult(
        records=tuple(records), skipped_open=skipped_open, failed=failed
    )


# ---------------------------------------------------------------------------
# Selection data (rendered prompt + correct-option label sets)


@dataclass(frozen=True)
class SelectionRecord:
    """One selection training example over ``n`` drafts.

    ``label_set`` holds the indices of every correct draft, or ``{n + 1}``
    when none is correct.
    """

    question_id: str
    rendered_prompt: str
    label_set: frozenset[int]
    n: int
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class SelectionBuildResult:
    records: tuple[SelectionRecord, ...]
    failed: int


def label_set_from_mask(mask: Sequence[bool], n: int) -> frozenset[int]:
    """Indices (1-based) of true entries, or ``{n + 1}`` when all are false."""
    if len(mask) != n:
        raise ValueError(f"mask length {len(mask)} does not match n={n}")
    labels = frozenset(i + 1 for i, ok in enumerate(mask) if ok)
    return labels if labels else frozenset({n + 1})


def elicit_draft_answer(
    question: Question,
    draft_text: str,
    backend: Backend,
    *,
    think_open: str = DEFAULT_THINK_OPEN,
    think_close: str = DEFAULT_THINK_CLOSE,
    max_new_tokens: int = 256,
) -> str:
    """Short greedy answer completion conditioned on an already-closed chain."""
    params = GenerationParams(
        temperature=0.0, max_new_tokens=max_new_tokens, stop_sequences=(think_open,)
    )
    prefix = f"{think_open}{draft_text}{think_close}"
    return backend.generate(question.text, params, assistant_prefix=prefix).text


def build_selection_data(
    questions: Sequence[Question],
    draft_backend: Backend,
    n: int,
    params: GenerationParams,
    *,
    grader: Callable[[str, str], bool] = grade_answer,
    think_open: str = DEFAULT_THINK_OPEN,
    think_close: str = DEFAULT_THINK_CLOSE,
    special_text: str = SPECIAL_OPTION_TEXT,
    base_seed: int = 0,
    eval_manifest: Optional[frozenset[str]] = None,
    parallelism: int = 1,
) -> SelectionBuildResult:
    """Draft ``n`` chains per question and label which ones are correct.

    Each draft's implied answer is elicited from the draft backend as a short
    completion conditioned on the chain, then graded against the gold answer.
    The rendered prompt uses the same frozen template as inference, byte for
    byte.  Questions whose drafts all fail are still emitted, labeled
    ``{n + 1}`` and flagged.
    """
    _check_manifest(questions, eval_manifest)
    missing = [q.id for q in questions if not q.gold_answer]
    if missing:
        raise ValueError(
            f"selection data needs gold answers; missing for {missing[:5]}"
        )

    def one(question: Question) -> SelectionRecord:
        flags: list[str] = []
        try:
            drafts = draft_chains(
                question, n, params, draft_backend,
                base_seed=base_seed, think_open=think_open, think_close=think_close,
            )
        except AllDraftsFailed:
            from .core import CotDraft

            drafts = [CotDraft(i, "", 0, 0.0, truncated=True) for i in range(1, n + 1)]
            mask = [False] * n
            flags.append("all_drafts_failed")
        else:
            mask = []
            for draft in drafts:
                if not draft.text:
                    mask.append(False)
                    continue
                try:
                    answer = elicit_draft_answer(
                        question, draft.text, draft_backend,
                        think_open=think_open, think_close=think_close,
                    )
                except BackendError as exc:
                    logger.warning(
                        "question %s draft %d: answer elicitation failed: %s",
                        question.id, draft.index, exc,
                    )
                    flags.append(f"elicitation_failed:{draft.index}")
                    mask.append(False)
                    continue
                mask.append(grader(answer, question.gold_answer))
        prompt = render_selection_prompt(question, drafts, special_text)
        return SelectionRecord(
            question_id=question.id,
            rendered_prompt=prompt.rendered,
            label_set=label_set_from_mask(mask, n),
            n=n,
            flags=tuple(flags),
        )

    records: list[SelectionRecord] = []
    failed = 0
    for outcome in _map_ordered(one, questions, parallelism):
        if isinstance(outcome, BackendError):
            failed += 1
        else:
            records.append(outcome)
    return SelectionBuildResult(records=tuple(records), failed=failed)


def _map_ordered(fn, questions: Sequence[Question], parallelism: int):
    """Apply ``fn`` preserving input order; backend errors become values."""

    def guarded(question: Question):
        try:
            return fn(question)
        except BackendError as exc:
            logger.warning("question %s: skipped: %s", question.id, exc)
            return exc

    if parallelism <= 1 or len(questions) <= 1:
        return [guarded(q) for q in questions]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(guarded, questions))


# ---------------------------------------------------------------------------
# File formats (JSON-lines with a schema header)


def _write_jsonl(path: Union[str, Path], header: dict, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(header) + "\n")
        for row in rows:
            handle.write(json.dumps(row) + "\n")


def write_alignment_file(path: Union[str, Path], result: AlignmentBuildResult) -> None:
    header = {
        "record": "header",
        "kind": "alignment_data",
        "schema_version": DATA_SCHEMA_VERSION,
        "skipped_open": result.skipped_open,
        "failed": result.failed,
    }
    rows = (
        {
            "question_text": r.question_text,
            "target_cot": r.target_cot,
            "prompt_len": r.prompt_len,
        }
        for r in result.records
    )
    _write_jsonl(path, header, rows)


def write_selection_file(path: Union[str, Path], result: SelectionBuildResult) -> None:
    header = {
        "record": "header",
        "kind": "selection_data",
        "schema_version": DATA_SCHEMA_VERSION,
        "failed": result.failed,
    }
    rows = (
        {
            "question_id": r.question_id,
            "rendered_prompt": r.rendered_prompt,
            "label_set": sorted(r.label_set),
            "n": r.n,
            "flags": list(r.flags),
        }
        for r in result.records
    )
    _write_jsonl(path, header, rows)
