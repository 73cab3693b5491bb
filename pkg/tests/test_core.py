import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scot.core import (
    CotDraft,
    CotSource,
    GenerationParams,
    Question,
    ReasoningTrace,
    RunReport,
    SelectionOutcome,
    StageLatencies,
    extract_think_block,
)
from simsupport import make_trace


class TestExtractThinkBlock:
    def test_closed_block(self):
        assert extract_think_block("<think>abc</think>xyz") == ("abc", "xyz", True)

    def test_no_open_delimiter(self):
        assert extract_think_block("plain answer") == ("", "plain answer", False)

    def test_unclosed_block(self):
        assert extract_think_block("<think>still going") == ("still going", "", False)

    def test_empty_body(self):
        assert extract_think_block("<think></think>rest") == ("", "rest", True)

    def test_text_before_open_is_dropped(self):
        cot, rest, closed = extract_think_block("preamble<think>a</think>b")
        assert (cot, rest, closed) == ("a", "b", True)

    def test_first_close_wins(self):
        cot, rest, closed = extract_think_block("<think>a</think>b</think>c")
        assert (cot, rest, closed) == ("a", "b</think>c", True)

    def test_custom_delimiters(self):
        cot, rest, closed = extract_think_block("[[r]]x[[/r]]y", "[[r]]", "[[/r]]")
        assert (cot, rest, closed) == ("x", "y", True)

    def test_empty_delimiter_rejected(self):
        with pytest.raises(ValueError):
            extract_think_block("x", "", "</think>")

    def test_equal_delimiters_rejected(self):
        with pytest.raises(ValueError):
            extract_think_block("x", "@@", "@@")

    @given(body=st.text(max_size=200), rest=st.text(max_size=200))
    @settings(max_examples=300)
    def test_round_trip(self, body, rest):
        if "</think>" in body:
            return
        raw = f"<think>{body}</think>{rest}"
        assert extract_think_block(raw) == (body, rest, True)

    @given(raw=st.text(max_size=200))
    def test_openless_text_passes_through(self, raw):
        if "<think>" in raw:
            return
        assert extract_think_block(raw) == ("", raw, False)


class TestQuestion:
    def test_requires_id_and_text(self):
        with pytest.raises(ValueError):
            Question(id="", text="x")
        with pytest.raises(ValueError):
            Question(id="q", text="")

    def test_gold_optional(self):
        assert Question(id="q", text="x").gold_answer is None


class TestGenerationParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            GenerationParams(temperature=-0.1, max_new_tokens=10)
        with pytest.raises(ValueError):
            GenerationParams(temperature=0.5, max_new_tokens=0)

    def test_with_stop_appends_once(self):
        params = GenerationParams(temperature=0.0, max_new_tokens=5)
        stopped = params.with_stop("</think>")
        assert stopped.stop_sequences == ("</think>",)
        assert stopped.with_stop("</think>") is stopped
        assert params.stop_sequences == ()

    def test_stop_sequences_normalized_to_tuple(self):
        params = GenerationParams(0.0, 5, stop_sequences=["a", "b"])
        assert params.stop_sequences == ("a", "b")


class TestCotDraft:
    def test_zero_tokens_means_empty_text(self):
        with pytest.raises(ValueError):
            CotDraft(index=1, text="body", token_count=0, latency_ms=0.0, truncated=True)
        CotDraft(index=1, text="", token_count=0, latency_ms=0.0, truncated=True)

    def test_index_starts_at_one(self):
        with pytest.raises(ValueError):
            CotDraft(index=0, text="x", token_count=1, latency_ms=0.0, truncated=False)


class TestSelectionOutcome:
    def test_chosen_must_attain_best_score(self):
        with pytest.raises(ValueError):
            SelectionOutcome(
                chosen_index=2, scores={1: 0.9, 2: 0.1}, latency_ms=0.0,
                fallback_used=False,
            )

    def test_tie_breaks_toward_lowest_index(self):
        SelectionOutcome(
            chosen_index=1, scores={1: 0.5, 3: 0.5}, latency_ms=0.0,
            fallback_used=False,
        )
        with pytest.raises(ValueError):
            SelectionOutcome(
                chosen_index=3, scores={1: 0.5, 3: 0.5}, latency_ms=0.0,
                fallback_used=False,
            )

    def test_fallback_skips_argmax_check(self):
        SelectionOutcome(
            chosen_index=2, scores={1: 0.9}, latency_ms=0.0, fallback_used=True
        )


class TestStageLatencies:
    def test_total(self):
        stages = StageLatencies(1.0, 2.0, 3.0, 4.0)
        assert stages.total() == 10.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            StageLatencies(-1.0, 0.0, 0.0, 0.0)


class TestReasoningTrace:
    def test_factory_builds_valid_traces(self):
        for source in CotSource:
            trace = make_trace(source=source, thinking_ms=5.0, l_m=10)
            assert trace.cot_source is source

    def test_accepted_draft_forbids_target_thinking(self):
        trace = make_trace(source=CotSource.DRAFT_ACCEPTED)
        assert trace.l_m == 0
        assert trace.stage_latencies_ms.target_thinking == 0.0
        with pytest.raises(ValueError):
            ReasoningTrace(
                question_id="q", dataset="d", drafts=trace.drafts,
                selection=trace.selection, cot_source=CotSource.DRAFT_ACCEPTED,
                final_cot="c", answer_text="a", l_m=7, l_md=trace.l_md,
                answer_tokens=1, stage_latencies_ms=trace.stage_latencies_ms,
                total_latency_ms=trace.total_latency_ms,
            )

    def test_l_md_must_match_longest_draft(self):
        trace = make_trace(draft_tokens=120)
        assert trace.l_md == 120
        with pytest.raises(ValueError):
            ReasoningTrace(
                question_id="q", dataset="d", drafts=trace.drafts,
                selection=trace.selection, cot_source=trace.cot_source,
                final_cot="c", answer_text="a", l_m=0, l_md=999,
                answer_tokens=1, stage_latencies_ms=trace.stage_latencies_ms,
                total_latency_ms=trace.total_latency_ms,
            )

    def test_draft_indices_must_be_contiguous(self):
        drafts = (CotDraft(2, "x", 5, 0.0, False),)
        with pytest.raises(ValueError):
            ReasoningTrace(
                question_id="q", dataset="d", drafts=drafts, selection=None,
                cot_source=CotSource.TARGET_RETHINK, final_cot="c",
                answer_text="a", l_m=1, l_md=5, answer_tokens=1,
                stage_latencies_ms=StageLatencies(0, 0, 0, 0),
                total_latency_ms=0.0,
            )

    def test_rethink_with_selection_must_have_chosen_escape(self):
        trace = make_trace(source=CotSource.TARGET_RETHINK, n=3, thinking_ms=1.0, l_m=5)
        assert trace.selection.chosen_index == 4
        accepted = make_trace(source=CotSource.DRAFT_ACCEPTED, n=3, chosen=2)
        with pytest.raises(ValueError):
            ReasoningTrace(
                question_id="q", dataset="d", drafts=accepted.drafts,
                selection=accepted.selection, cot_source=CotSource.TARGET_RETHINK,
                final_cot="c", answer_text="a", l_m=5, l_md=accepted.l_md,
                answer_tokens=1, stage_latencies_ms=accepted.stage_latencies_ms,
                total_latency_ms=accepted.total_latency_ms,
            )

    def test_vanilla_carries_no_drafts_or_selection(self):
        trace = make_trace(source=CotSource.VANILLA_TARGET, thinking_ms=2.0, l_m=9)
        assert trace.drafts == () and trace.selection is None
        donor = make_trace()
        with pytest.raises(ValueError):
            ReasoningTrace(
                question_id="q", dataset="d", drafts=donor.drafts, selection=None,
                cot_source=CotSource.VANILLA_TARGET, final_cot="c",
                answer_text="a", l_m=1, l_md=donor.l_md, answer_tokens=1,
                stage_latencies_ms=StageLatencies(0, 0, 1.0, 0),
                total_latency_ms=1.0,
            )

    def test_stage_sum_must_match_total(self):
        with pytest.raises(ValueError):
            ReasoningTrace(
                question_id="q", dataset="d", drafts=(), selection=None,
                cot_source=CotSource.VANILLA_TARGET, final_cot="c",
                answer_text="a", l_m=1, l_md=0, answer_tokens=1,
                stage_latencies_ms=StageLatencies(0, 0, 100.0, 50.0),
                total_latency_ms=400.0,
            )


class TestRunReport:
    def _report(self, **overrides):
        base = dict(
            dataset="d", mode="scot", num_questions=10, accuracy=0.9,
            mean_latency_s=1.0, mean_l_m=0.0, mean_l_md=100.0,
            mean_answer_tokens=50.0, throughput_s=25.0,
            latency_fractions={"target": 0.3, "draft": 0.6, "selection": 0.1},
        )
        base.update(overrides)
        return RunReport(**base)

    def test_valid(self):
        report = self._report()
        assert report.speedup_r is None

    def test_mode_checked(self):
        with pytest.raises(ValueError):
            self._report(mode="hybrid")

    def test_fraction_keys_checked(self):
        with pytest.raises(ValueError):
            self._report(latency_fractions={"target": 1.0})

    def test_scot_fractions_must_sum_to_one(self):
        with pytest.raises(ValueError):
            self._report(
                latency_fractions={"target": 0.5, "draft": 0.1, "selection": 0.1}
            )

    def test_vanilla_fractions_unconstrained_sum(self):
        self._report(
            mode="vanilla",
            latency_fractions={"target": 1.0, "draft": 0.0, "selection": 0.0},
        )

    def test_accuracy_range_checked(self):
        with pytest.raises(ValueError):
            self._report(accuracy=1.2)
