"""Single-pass draft selection over a frozen prompt template.

The template is a versioned package resource; its bytes are load-bearing
because a selector fine-tuned on rendered prompts must see the identical
rendering at inference time.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Optional, Sequence

from .backends import (
    Backend,
    BackendError,
    DistributionResult,
    GenerationParams,
    LogprobsUnsupported,
)
from .core import CotDraft, Question, SelectionOutcome

logger = logging.getLogger(__name__)

TEMPLATE_VERSION = "v1"
SPECIAL_OPTION_TEXT = "All reasoning paths are wrong."
FALLBACK_MAX_TOKENS = 4

_PLACEHOLDER_RE = re.compile(r"\{(question|options)\}")


class EmptyDraftSet(ValueError):
    """Selection needs at least one draft."""


class SelectionFailed(BackendError):
    """Both the distribution path and the fallback parse failed."""


@dataclass(frozen=True)
class SelectionPrompt:
    """A rendered selection prompt plus the option labels it offers."""

    rendered: str
    n: int
    option_labels: tuple[str, ...]


@lru_cache(maxsize=8)
def load_template(version: str = TEMPLATE_VERSION) -> str:
    path = resources.files("scot").joinpath(f"templates/selection_{version}.txt")
    return path.read_text(encoding="utf-8")


def render_selection_prompt(
    question: Question,
    drafts: Sequence[CotDraft],
    special_text: str = SPECIAL_OPTION_TEXT,
    *,
    include_special: bool = True,
    template_version: str = TEMPLATE_VERSION,
) -> SelectionPrompt:
    """Render the numbered-options prompt for ``drafts``.

    Options are ``1. <text>`` through ``n. <text>`` followed, unless
    ``include_special`` is off, by the special option labeled ``n + 1``.
    Rendering is deterministic; identical inputs give identical bytes.
    """
    drafts = list(drafts)
    if not drafts:
        raise EmptyDraftSet("cannot render a selection prompt with no drafts")
    indices = [d.index for d in drafts]
    if indices != list(range(1, len(drafts) + 1)):
        raise ValueError(f"draft indices must be 1..n contiguous, got {indices}")
    n = len(drafts)
    lines = [f"{d.index}. {d.text}" for d in drafts]
    labels = [str(i) for i in range(1, n + 1)]
    if include_special:
        lines.append(f"{n + 1}. {special_text}")
        labels.append(str(n + 1))
    fills = {"question": question.text, "options": "\n\n".join(lines)}
    # single-pass substitution so draft text containing a placeholder is inert
    rendered = _PLACEHOLDER_RE.sub(
        lambda m: fills[m.group(1)], load_template(template_version)
    )
    return SelectionPrompt(rendered=rendered, n=n, option_labels=tuple(labels))


def argmax_score(scores: dict[int, float]) -> int:
    """Highest-scoring index; ties break toward the lowest index."""
    if not scores:
        raise ValueError("scores must be non-empty")
    return min(scores, key=lambda i: (-scores[i], i))


def _first_index_in_range(text: str, max_label: int) -> Optional[int]:
    for match in re.finditer(r"\d+", text):
        value = int(match.group())
        if 1 <= value <= max_label:
            return value
    return None


def select_draft(
    prompt: SelectionPrompt,
    selector: Backend,
    *,
    fallback_params: Optional[GenerationParams] = None,
) -> SelectionOutcome:
    """Pick one option label with a single constrained forward step.

    Asks the selector for a next-token distribution over the option labels
    and takes the argmax.  If the backend cannot expose alternatives, or no
    label lands in its top-k, falls back to one short free-form generation
    parsed for the first in-range integer.  Raises SelectionFailed when both
    paths fail; the caller decides how conservative to be.
    """
    latency_ms = 0.0
    max_label = int(prompt.option_labels[-1])
    result: Optional[DistributionResult] = None
    try:
        result = selector.next_token_distribution(
            prompt.rendered, list(prompt.option_labels)
        )
    except LogprobsUnsupported:
        logger.debug("selector cannot report alternatives; using fallback parse")
    except BackendError as exc:
        logger.warning("distribution step failed (%s); using fallback parse", exc)
    if result is not None:
        latency_ms += result.duration_ms
        scores = {
            int(label): score
            for label, score in result.scores.items()
            if label in prompt.option_labels
        }
        if scores:
            return SelectionOutcome(
                chosen_index=argmax_score(scores),
                scores=scores,
                latency_ms=latency_ms,
                fallback_used=False,
            )
    params = fallback_params or GenerationParams(
        temperature=0.0, max_new_tokens=FALLBACK_MAX_TOKENS
    )
    try:
        generation = selector.generate(prompt.rendered, params)
    except BackendError as exc:
        raise SelectionFailed(f"fallback generation failed: {exc}") from exc
    latency_ms += generation.duration_ms
    chosen = _first_index_in_range(generation.text, max_label)
    if chosen is None:
        raise SelectionFailed(
            f"no option index in fallback text {generation.text!r}"
        )
    return SelectionOutcome(
        chosen_index=chosen, scores={}, latency_ms=latency_ms, fallback_used=True
    )


@dataclass(frozen=True)
class Decision:
    """Either accept draft ``draft_index`` or rethink from scratch."""

    rethink: bool
    draft_index: Optional[int] = None

    def __post_init__(self) -> None:
        if self.rethink == (self.draft_index is not None):
            raise ValueError("exactly one of rethink / draft_index must be set")


def decide(outcome: SelectionOutcome, n: int) -> Decision:
    """Map a selection outcome over ``n`` drafts to its routing decision."""
    if not 1 <= outcome.chosen_index <= n + 1:
        raise ValueError(
            f"chosen_index {outcome.chosen_index} outside 1..{n + 1}"
        )
    if outcome.chosen_index == n + 1:
        return Decision(rethink=True)
    return Decision(rethink=False, draft_index=outcome.chosen_index)
