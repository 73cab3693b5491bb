import time

import pytest

from scot.backends import FinishReason, SimBackend, SimRule, SimScript, TransportError
from scot.core import CotDraft, GenerationParams, Question
from scot.drafting import (
    AllDraftsFailed,
    MAX_DRAFTS,
    closed_think_block,
    draft_chains,
    longest_draft_tokens,
)
from simsupport import (
    DRAFT_STAGE_MS,
    FailingBackend,
    RecordingBackend,
    SeedKeyedBackend,
    draft_script,
    think_generation,
)

QUESTION = Question(id="q1", text="Sample problem 1: count. [gold=42]", gold_answer="42")
PARAMS = GenerationParams(temperature=0.6, max_new_tokens=5000)


def test_fans_out_n_indexed_chains():
    backend = SimBackend(draft_script())
    drafts = draft_chains(QUESTION, 5, PARAMS, backend)
    assert [d.index for d in drafts] == [1, 2, 3, 4, 5]
    for draft in drafts:
        assert draft.text
        assert draft.token_count == 265
        assert draft.latency_ms == DRAFT_STAGE_MS
        # the close delimiter was consumed as a stop, not emitted
        assert "</think>" not in draft.text
        assert not draft.truncated


def test_longest_draft_is_the_max_token_count():
    by_seed = {
        i: think_generation(f"chain {i}", tokens)
        for i, tokens in zip(range(1, 6), [265, 210, 180, 90, 250])
    }
    drafts = draft_chains(QUESTION, 5, PARAMS, SeedKeyedBackend(by_seed))
    assert longest_draft_tokens(drafts) == 265
    assert longest_draft_tokens(drafts) == max(d.token_count for d in drafts)


def test_longest_draft_tokens_edge_cases():
    assert longest_draft_tokens([]) == 0
    equal = [CotDraft(i, "x", 7, 0.0, False) for i in range(1, 4)]
    assert longest_draft_tokens(equal) == 7


def test_each_slot_gets_its_own_seed():
    recorder = RecordingBackend(SimBackend(draft_script()))
    draft_chains(QUESTION, 5, PARAMS, recorder)
    seeds = {params.seed for _, params, _ in recorder.generate_calls}
    assert seeds == {1, 2, 3, 4, 5}
    for _, params, prefix in recorder.generate_calls:
        assert "</think>" in params.stop_sequences
        assert params.temperature == 0.6
        assert prefix == ""


def test_base_seed_shifts_every_slot():
    recorder = RecordingBackend(SimBackend(draft_script()))
    draft_chains(QUESTION, 3, PARAMS, recorder, base_seed=100)
    seeds = {params.seed for _, params, _ in recorder.generate_calls}
    assert seeds == {101, 102, 103}


def test_deterministic_across_runs():
    backend = SimBackend(draft_script(easy_correct=0.5))
    first = draft_chains(QUESTION, 5, PARAMS, backend)
    second = draft_chains(QUESTION, 5, PARAMS, backend)
    assert first == second


def test_failed_slot_is_replaced_by_an_empty_truncated_draft():
    by_seed = {
        i: think_generation(f"chain {i}", 100) for i in range(1, 6)
    }
    by_seed[3] = TransportError("boom")
    drafts = draft_chains(QUESTION, 5, PARAMS, SeedKeyedBackend(by_seed))
    assert drafts[2] == CotDraft(3, "", 0, 0.0, truncated=True)
    assert [d.index for d in drafts] == [1, 2, 3, 4, 5]
    assert all(d.text for i, d in enumerate(drafts) if i != 2)


def test_all_slots_failing_raises():
    with pytest.raises(AllDraftsFailed):
        draft_chains(QUESTION, 4, PARAMS, FailingBackend())


def test_single_draft_failure_also_raises():
    with pytest.raises(AllDraftsFailed):
        draft_chains(QUESTION, 1, PARAMS, FailingBackend())


def test_chain_count_bounds():
    backend = SimBackend(draft_script())
    with pytest.raises(ValueError):
        draft_chains(QUESTION, 0, PARAMS, backend)
    with pytest.raises(ValueError):
        draft_chains(QUESTION, MAX_DRAFTS + 1, PARAMS, backend)


def test_capped_chains_are_marked_truncated():
    backend = SimBackend(draft_script())
    capped = GenerationParams(temperature=0.6, max_new_tokens=100)
    drafts = draft_chains(QUESTION, 3, capped, backend)
    assert all(d.truncated for d in drafts)
    assert all(d.token_count == 100 for d in drafts)


def test_single_chain_runs_inline():
    recorder = RecordingBackend(SimBackend(draft_script()))
    drafts = draft_chains(QUESTION, 1, PARAMS, recorder)
    assert len(drafts) == 1 and drafts[0].index == 1
    assert len(recorder.generate_calls) == 1


def test_fan_out_overlaps_in_wall_time():
    # 100 tokens at 100 tps is 1000 ms simulated; sleep_factor makes each
    # call really sleep 50 ms, so five serial calls would take ~250 ms.
    script = SimScript(
        token_rate_tps=100.0, rules=(SimRule(think_tokens=100, answer_tokens=5),)
    )
    backend = SimBackend(script, sleep_factor=0.05)
    started = time.perf_counter()
    drafts = draft_chains(QUESTION, 5, PARAMS, backend)
    elapsed = time.perf_counter() - started
    assert elapsed < 0.2
    assert all(d.latency_ms == 1000.0 for d in drafts)


def test_chain_text_commits_match_the_prediction_helper():
    backend = SimBackend(draft_script(easy_correct=0.5))
    drafts = draft_chains(QUESTION, 8, PARAMS, backend)
    for draft in drafts:
        predicted = backend.would_draft_correctly(QUESTION.text, draft.index)
        assert ("final answer is 42." in draft.text) == predicted


class TestClosedThinkBlock:
    PARAMS_WITH_STOP = GenerationParams(0.0, 10, stop_sequences=("</think>",))

    def test_explicitly_closed(self):
        assert closed_think_block(
            "<think>x</think>", True, self.PARAMS_WITH_STOP, FinishReason.STOP,
            "<think>", "</think>",
        )

    def test_stop_consumed_close_counts_as_closed(self):
        assert closed_think_block(
            "<think>x", False, self.PARAMS_WITH_STOP, FinishReason.STOP,
            "<think>", "</think>",
        )

    def test_never_opened_is_not_closed(self):
        assert not closed_think_block(
            "plain text", False, self.PARAMS_WITH_STOP, FinishReason.STOP,
            "<think>", "</think>",
        )

    def test_cap_hit_is_not_closed(self):
        assert not closed_think_block(
            "<think>x", False, self.PARAMS_WITH_STOP, FinishReason.LENGTH_CAP,
            "<think>", "</think>",
        )

    def test_other_stop_does_not_imply_closure(self):
        params = GenerationParams(0.0, 10, stop_sequences=("\n\n",))
        assert not closed_think_block(
            "<think>x", False, params, FinishReason.STOP, "<think>", "</think>"
        )
