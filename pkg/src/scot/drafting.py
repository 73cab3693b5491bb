"""Parallel fan-out of candidate chains from the draft backend."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Sequence

from .backends import Backend, BackendError, FinishReason
from .core import (
    DEFAULT_THINK_CLOSE,
    DEFAULT_THINK_OPEN,
    CotDraft,
    GenerationParams,
    Question,
    extract_think_block,
)

logger = logging.getLogger(__name__)

MAX_DRAFTS = 9  # option labels stay single digits


class DraftingFailed(BackendError):
    """One draft slot failed; carries the slot index and the cause."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"draft {index} failed: {cause}")
        self.index = index
        self.cause = cause


class AllDraftsFailed(BackendError):
    """Every draft slot failed; the caller must fall back to the target."""


def closed_think_block(
    raw: str, closed: bool, params: GenerationParams, finish: FinishReason,
    think_open: str, think_close: str,
) -> bool:
    """Whether a generation's think block actually closed.

    Stop sequences are consumed by the backend, so a generation that opened a
    block and stopped on the close delimiter counts as closed even though the
    delimiter is absent from the text.
    """
    if closed:
        return True
    return (
        finish is FinishReason.STOP
        and think_close in params.stop_sequences
        and think_open in raw
    )


def draft_chains(
    question: Question,
    n: int,
    params: GenerationParams,
    backend: Backend,
    *,
    base_seed: int = 0,
    think_open: str = DEFAULT_THINK_OPEN,
    think_close: str = DEFAULT_THINK_CLOSE,
) -> list[CotDraft]:
    """Generate ``n`` candidate chains concurrently, indexed 1..n.

    Each slot gets its own seed (``base_seed + index``) so chains differ even
    against a deterministic backend.  A failed slot is replaced by an empty
    truncated draft; only when every slot fails is AllDraftsFailed raised.
    """
    if not 1 <= n <= MAX_DRAFTS:
        raise ValueError(f"n must be in 1..{MAX_DRAFTS}, got {n}")

    def one(index: int) -> CotDraft:
        slot_params = replace(params, seed=base_seed + index).with_stop(think_close)
        try:
            generation = backend.generate(question.text, slot_params)
        except BackendError as exc:
            raise DraftingFailed(index, exc) from exc
        cot, _, closed = extract_think_block(generation.text, think_open, think_close)
        closed = closed_think_block(
            generation.text, closed, slot_params, generation.finish_reason,
            think_open, think_close,
        )
        return CotDraft(
            index=index,
            text=cot,
            token_count=generation.token_count,
            latency_ms=generation.duration_ms,
            truncated=generation.finish_reason is FinishReason.LENGTH_CAP or not closed,
        )

    drafts: list[CotDraft] = [None] * n  # type: ignore[list-item]
    failures = 0
    if n == 1:
        futures = None
        try:
            drafts[0] = one(1)
        except DraftingFailed as exc:
            logger.warning("question %s: %s", question.id, exc)
            failures = 1
            drafts[0] = CotDraft(1, "", 0, 0.0, truncated=True)
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            futures = {pool.submit(one, i): i for i in range(1, n + 1)}
            for future, index in futures.items():
                try:
                    drafts[index - 1] = future.result()
                except DraftingFailed as exc:
                    logger.warning("question %s: %s", question.id, exc)
                    failures += 1
                    drafts[index - 1] = CotDraft(index, "", 0, 0.0, truncated=True)
    if failures == n:
        raise AllDraftsFailed(f"question {question.id}: all {n} drafts failed")
    return drafts


def longest_draft_tokens(drafts: Sequence[CotDraft]) -> int:
    """Token count of the longest draft chain; 0 for an empty set."""
    return max((d.token_count for d in drafts), default=0)
