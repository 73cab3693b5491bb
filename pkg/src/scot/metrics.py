"""Latency, throughput, and accuracy accounting over reasoning traces.

Conventions: "reasoning latency" for a trace is drafting + selection +
target thinking, the answer phase excluded.  "Valid" tokens are the tokens a
run actually keeps: target thinking tokens, the accepted draft's tokens, and
the single selection token; rejected sibling drafts never count.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import mean
from typing import Iterable, Optional, Sequence

from .core import CotSource, ReasoningTrace, RunReport


class NonPositiveLatency(ValueError):
    pass


class NonPositiveTime(ValueError):
    pass


class EmptyTraceSet(ValueError):
    pass


class ModeMismatch(ValueError):
    pass


class MixedDatasets(ValueError):
    pass


def speedup_ratio(
    vanilla_mean_t_s: float,
    scot_mean_t_s: float,
    *,
    round_to: Optional[int] = 2,
) -> float:
    """Mean-latency ratio vanilla / speculative, reported to 2 decimals.

    Pass ``round_to=None`` for the raw ratio.
    """
    if vanilla_mean_t_s <= 0 or scot_mean_t_s <= 0:
        raise NonPositiveLatency(
            f"latencies must be positive: {vanilla_mean_t_s}, {scot_mean_t_s}"
        )
    ratio = vanilla_mean_t_s / scot_mean_t_s
    return round(ratio, round_to) if round_to is not None else ratio


def throughput(valid_tokens: int, wall_time_s: float) -> float:
    """Valid tokens per second of wall time."""
    if wall_time_s <= 0:
        raise NonPositiveTime(f"wall_time_s must be positive: {wall_time_s}")
    if valid_tokens < 0:
        raise ValueError(f"valid_tokens must be non-negative: {valid_tokens}")
    return valid_tokens / wall_time_s


def trace_valid_tokens(trace: ReasoningTrace) -> int:
    """Kept tokens for one trace: l_M, plus the accepted draft's tokens, plus
    one token for the selection step when it ran."""
    accepted = 0
    if trace.cot_source is CotSource.DRAFT_ACCEPTED:
        accepted = trace.drafts[trace.selection.chosen_index - 1].token_count
    selection_token = 1 if trace.selection is not None else 0
    return trace.l_m + accepted + selection_token


def reasoning_latency_s(trace: ReasoningTrace) -> float:
    stages = trace.stage_latencies_ms
    return (stages.drafting + stages.selection + stages.target_thinking) / 1000.0


def latency_decomposition(traces: Sequence[ReasoningTrace]) -> dict[str, float]:
    """Fractions of summed reasoning latency spent per component.

    Returns ``{"target": ..., "draft": ..., "selection": ...}`` summing to 1.
    """
    if not traces:
        raise EmptyTraceSet("no traces to decompose")
    if any(t.cot_source is CotSource.VANILLA_TARGET for t in traces):
        raise ModeMismatch("latency decomposition is defined for speculative runs")
    target = sum(t.stage_latencies_ms.target_thinking for t in traces)
    draft = sum(t.stage_latencies_ms.drafting for t in traces)
    selection = sum(t.stage_latencies_ms.selection for t in traces)
    total = target + draft + selection
    if total <= 0:
        raise NonPositiveLatency("traces carry no reasoning latency")
    return {
        "target": target / total,
        "draft": draft / total,
        "selection": selection / total,
    }


@dataclass(frozen=True)
class SelectionJudgment:
    """One selection decision paired with its ground-truth label set."""

    label_set: frozenset[int]
    chosen_index: int
    n: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "label_set", frozenset(self.label_set))
        if not self.label_set:
            raise ValueError("label_set must be non-empty")
        bad = [l for l in self.label_set if not 1 <= l <= self.n + 1]
        if bad:
            raise ValueError(f"labels {bad} outside 1..{self.n + 1}")

    @property
    def some_draft_correct(self) -> bool:
        return self.label_set != frozenset({self.n + 1})

    @property
    def judged_correct(self) -> bool:
        if self.some_draft_correct:
            return self.chosen_index in self.label_set
        return self.chosen_index == self.n + 1


def selection_accuracy_by_class(
    judgments: Sequence[SelectionJudgment],
) -> dict[str, Optional[float]]:
    """Selection accuracy split by whether any draft was actually correct.

    Class 1 are items with at least one correct draft (a pick is right when
    it lands in the label set); class 2 are items where no draft is correct
    (only the final escape option is right).
    """
    class1 = [j for j in judgments if j.some_draft_correct]
    class2 = [j for j in judgments if not j.some_draft_correct]

    def accuracy(group: list[SelectionJudgment]) -> Optional[float]:
        if not group:
            return None
        return sum(j.judged_correct for j in group) / len(group)

    return {
        "class1_count": len(class1),
        "class2_count": len(class2),
        "class1_accuracy": accuracy(class1),
        "class2_accuracy": accuracy(class2),
    }


def aggregate(
    traces: Sequence[ReasoningTrace],
    paired_vanilla: Optional[Sequence[ReasoningTrace]] = None,
) -> RunReport:
    """Fold one run's traces into a RunReport.

    All traces must share one dataset and one mode.  ``paired_vanilla``
    supplies the matching vanilla run so the report can carry the speed-up
    ratio.
    """
    if not traces:
        raise EmptyTraceSet("cannot aggregate zero traces")
    datasets = {t.dataset for t in traces}
    if len(datasets) > 1:
        raise MixedDatasets(f"traces span datasets {sorted(datasets)}")
    vanilla_flags = {t.cot_source is CotSource.VANILLA_TARGET for t in traces}
    if len(vanilla_flags) > 1:
        raise ModeMismatch("traces mix vanilla and speculative modes")
    mode = "vanilla" if vanilla_flags.pop() else "scot"

    graded = [t.correct for t in traces if t.correct is not None]
    accuracy = (sum(graded) / len(graded)) if graded else 0.0
    latencies = [reasoning_latency_s(t) for t in traces]
    mean_latency_s = mean(latencies)

    total_time = sum(latencies)
    total_valid = sum(trace_valid_tokens(t) for t in traces)
    throughput_s = throughput(total_valid, total_time)

    speedup = None
    if paired_vanilla:
        vanilla_mean = mean(reasoning_latency_s(t) for t in paired_vanilla)
        speedup = speedup_ratio(vanilla_mean, mean_latency_s)

    if mode == "scot":
        fractions = latency_decomposition(traces)
    else:
        fractions = {"target": 1.0, "draft": 0.0, "selection": 0.0}

    return RunReport(
        dataset=datasets.pop(),
        mode=mode,
        num_questions=len(traces),
        accuracy=accuracy,
        mean_latency_s=mean_latency_s,
        mean_l_m=mean(t.l_m for t in traces),
        mean_l_md=mean(t.l_md for t in traces),
        mean_answer_tokens=mean(t.answer_tokens for t in traces),
        throughput_s=throughput_s,
        latency_fractions=fractions,
        speedup_r=speedup,
    )


def report_to_dict(report: RunReport) -> dict:
    return {
        "dataset": report.dataset,
        "mode": report.mode,
        "num_questions": report.num_questions,
        "accuracy": report.accuracy,
        "mean_latency_s": report.mean_latency_s,
        "mean_l_m": report.mean_l_m,
        "mean_l_md": report.mean_l_md,
        "mean_answer_tokens": report.mean_answer_tokens,
        "throughput_s": report.throughput_s,
        "latency_fractions": dict(report.latency_fractions),
        "speedup_r": report.speedup_r,
    }


def format_report(report: RunReport) -> str:
    """Small fixed-width table for terminals."""
    headers = [
        "dataset", "mode", "questions", "accuracy", "mean_t_s",
        "mean_l_M", "mean_l_Md", "tokens_per_s", "speedup_r",
    ]
    row = [
        report.dataset or "-",
        report.mode,
        str(report.num_questions),
        f"{report.accuracy:.3f}",
        f"{report.mean_latency_s:.3f}",
        f"{report.mean_l_m:.1f}",
        f"{report.mean_l_md:.1f}",
        f"{report.throughput_s:.2f}",
        "-" if report.speedup_r is None else f"{report.speedup_r:.2f}",
    ]
    widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join(v.ljust(w) for v, w in zip(row, widths)),
    ]
    fr = report.latency_fractions
    lines.append(
        "latency split: "
        f"target {fr['target']:.1%}  draft {fr['draft']:.1%}  "
        f"selection {fr['selection']:.1%}"
    )
    return "\n".join(lines)
