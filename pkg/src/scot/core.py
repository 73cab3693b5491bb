"""Shared value types for the speculative chain-of-thought engine.

Everything here is an immutable record with its invariants checked at
construction time, so the rest of the engine can pass these around without
re-validating.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

DEFAULT_THINK_OPEN = "<think>"
DEFAULT_THINK_CLOSE = "</think>"


def extract_think_block(
    raw: str,
    open_delim: str = DEFAULT_THINK_OPEN,
    close_delim: str = DEFAULT_THINK_CLOSE,
) -> tuple[str, str, bool]:
    """Split ``raw`` around its first think block.

    Returns ``(cot, remainder, closed)`` where ``cot`` is the text strictly
    between the first ``open_delim`` and the first ``close_delim`` after it,
    and ``remainder`` is everything after that ``close_delim``.  If the close
    delimiter never appears, ``cot`` is everything after the open delimiter
    and ``remainder`` is empty.  If the open delimiter never appears, ``cot``
    is empty and ``remainder`` is all of ``raw``.  ``closed`` is true only in
    the first case.
    """
    if not open_delim or not close_delim:
        raise ValueError("think delimiters must be non-empty")
    if open_delim == close_delim:
        raise ValueError("think delimiters must be distinct")
    start = raw.find(open_delim)
    if start < 0:
        return "", raw, False
    body_start = start + len(open_delim)
    end = raw.find(close_delim, body_start)
    if end < 0:
        return raw[body_start:], "", False
    return raw[body_start:end], raw[end + len(close_delim):], True


@dataclass(frozen=True)
class Question:
    """A single evaluation item; ``gold_answer`` is optional for ungraded runs."""

    id: str
    text: str
    gold_answer: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("question id must be non-empty")
        if not self.text:
            raise ValueError(f"question {self.id!r} has empty text")


@dataclass(frozen=True)
class GenerationParams:
    temperature: float
    max_new_tokens: int
    seed: Optional[int] = None
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_new_tokens < 1:
            raise ValueError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))

    def with_stop(self, stop: str) -> "GenerationParams":
        """Copy of these params with ``stop`` appended if not already present."""
        if stop in self.stop_sequences:
            return self
        return GenerationParams(
            temperature=self.temperature,
            max_new_tokens=self.max_new_tokens,
            seed=self.seed,
            stop_sequences=self.stop_sequences + (stop,),
        )


@dataclass(frozen=True)
class CotDraft:
    """One candidate chain of thought produced by the draft backend.

    ``text`` is the chain body with the think delimiters stripped.
    ``token_count`` is the backend-reported generation length, never a local
    re-tokenization.
    """

    index: int
    text: str
    token_count: int
    latency_ms: float
    truncated: bool

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError(f"draft index must be >= 1, got {self.index}")
        if self.token_count < 0:
            raise ValueError("token_count must be non-negative")
        if self.token_count == 0 and self.text:
            raise ValueError("a zero-token draft cannot carry text")
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be non-negative")


@dataclass(frozen=True)
class SelectionOutcome:
    """Result of the single constrained selection step.

    ``scores`` maps option index to the backend's score for that option and
    may be partial (options outside the backend's top-k are simply absent).
    When ``scores`` is non-empty and the fallback parse was not used,
    ``chosen_index`` must be the argmax with ties broken toward the lowest
    index.
    """

    chosen_index: int
    scores: Mapping[int, float]
    latency_ms: float
    fallback_used: bool

    def __post_init__(self) -> None:
        if self.chosen_index < 1:
            raise ValueError(f"chosen_index must be >= 1, got {self.chosen_index}")
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be non-negative")
        object.__setattr__(self, "scores", dict(self.scores))
        if self.scores and not self.fallback_used:
            best = min(self.scores, key=lambda i: (-self.scores[i], i))
            if self.chosen_index != best:
                raise ValueError(
                    f"chosen_index {self.chosen_index} does not attain the best "
                    f"score (expected {best})"
                )


class CotSource(Enum):
    """Where the final chain of thought came from."""

    DRAFT_ACCEPTED = "draft_accepted"
    TARGET_RETHINK = "target_rethink"
    VANILLA_TARGET = "vanilla_target"


@dataclass(frozen=True)
class StageLatencies:
    """Per-stage wall time in milliseconds; absent stages are zero."""

    drafting: float
    selection: float
    target_thinking: float
    answering: float

    def __post_init__(self) -> None:
        for name in ("drafting", "selection", "target_thinking", "answering"):
            if getattr(self, name) < 0:
                raise ValueError(f"stage latency {name} must be non-negative")

    def total(self) -> float:
        return self.drafting + self.selection + self.target_thinking + self.answering


@dataclass(frozen=True)
class ReasoningTrace:
    """Complete record of answering one question.

    ``l_m`` counts target-generated thinking tokens and ``l_md`` the longest
    draft chain; both are backend-reported.  ``total_latency_ms`` must agree
    with the sum of the stage latencies (exactly under simulated backends,
    within 1% under live ones where stages are measured independently).
    """

    question_id: str
    dataset: str
    drafts: tuple[CotDraft, ...]
    selection: Optional[SelectionOutcome]
    cot_source: CotSource
    final_cot: str
    answer_text: str
    l_m: int
    l_md: int
    answer_tokens: int
    stage_latencies_ms: StageLatencies
    total_latency_ms: float
    correct: Optional[bool] = None
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "drafts", tuple(self.drafts))
        object.__setattr__(self, "flags", tuple(self.flags))
        if self.l_m < 0 or self.l_md < 0 or self.answer_tokens < 0:
            raise ValueError("token counts must be non-negative")
        indices = [d.index for d in self.drafts]
        if indices != list(range(1, len(self.drafts) + 1)):
            raise ValueError(f"draft indices must be 1..n contiguous, got {indices}")
        expected_l_md = max((d.token_count for d in self.drafts), default=0)
        if self.l_md != expected_l_md:
            raise ValueError(
                f"l_md {self.l_md} does not match longest draft {expected_l_md}"
            )
        stages = self.stage_latencies_ms
        if self.cot_source is CotSource.DRAFT_ACCEPTED:
            if self.selection is None:
                raise ValueError("an accepted draft requires a selection outcome")
            if not 1 <= self.selection.chosen_index <= len(self.drafts):
                raise ValueError(
                    f"accepted index {self.selection.chosen_index} out of range"
                )
            if self.l_m != 0 or stages.target_thinking != 0:
                raise ValueError(
                    "an accepted draft implies zero target thinking tokens and time"
                )
        elif self.cot_source is CotSource.TARGET_RETHINK:
            if self.selection is not None and self.drafts:
                if self.selection.chosen_index != len(self.drafts) + 1:
                    raise ValueError(
                        "a rethink with a selection outcome must have chosen the "
                        "final option"
                    )
        else:  # VANILLA_TARGET
            if self.drafts or self.selection is not None:
                raise ValueError("a vanilla trace carries no drafts or selection")
        total = stages.total()
        tolerance = max(1e-6, 0.01 * max(total, self.total_latency_ms))
        if abs(total - self.total_latency_ms) > tolerance:
            raise ValueError(
                f"stage latencies sum to {total}, not {self.total_latency_ms}"
            )


LATENCY_FRACTION_KEYS = ("target", "draft", "selection")


@dataclass(frozen=True)
class RunReport:
    """Aggregate metrics for one batch run over a single dataset."""

    dataset: str
    mode: str
    num_questions: int
    accuracy: float
    mean_latency_s: float
    mean_l_m: float
    mean_l_md: float
    mean_answer_tokens: float
    throughput_s: float
    latency_fractions: Mapping[str, float]
    speedup_r: Optional[float] = None

    def __post_init__(self) -> None:
        if self.mode not in ("scot", "vanilla"):
            raise ValueError(f"mode must be 'scot' or 'vanilla', got {self.mode!r}")
        if self.num_questions < 1:
            raise ValueError("a report covers at least one question")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy out of range: {self.accuracy}")
        if self.throughput_s < 0:
            raise ValueError("throughput must be non-negative")
        object.__setattr__(self, "latency_fractions", dict(self.latency_fractions))
        if set(self.latency_fractions) != set(LATENCY_FRACTION_KEYS):
            raise ValueError(
                f"latency_fractions must have keys {LATENCY_FRACTION_KEYS}"
            )
        if self.mode == "scot":
            total = sum(self.latency_fractions.values())
            if abs(total - 1.0) > 1e-6:
                raise ValueError(f"latency fractions sum to {total}, not 1")
