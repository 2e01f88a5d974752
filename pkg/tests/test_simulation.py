import json

import pytest

from atcot.core import ALL_SCENARIOS, ALL_SCHEMES, Clarification, ClarificationKind, PromptScheme, Query, Scenario, UserIntent
from atcot.llm_backend import FunctionBackend, SamplingParams
from atcot.simulation import (
    RunRecord,
    RunStore,
    SimulationConfig,
    SimulationError,
    match_selection,
    record_key,
    simulate_conversation,
    simulate_matrix,
)

from helpers import script_reply, scripted_backend

Q = Query("q1", "jaguar")
I = UserIntent("i1", "q1", "Top speed of the jaguar cat")
OPTS = [Clarification(ClarificationKind.REFORMULATED_QUERY, t) for t in ("jaguar car", "jaguar cat", "jaguar os")]


@pytest.mark.parametrize("reply,expected", [
    ("jaguar cat", 1), ("  \"Jaguar Cat\" ", 1), ("2. jaguar cat", 1), ("3", 2), ("3.", 2),
    ("jaguar os\nbecause it is about software", 2), ("something else", None), ("7", None),
])
def test_match_selection(reply, expected):
    assert match_selection(reply, OPTS) == expected


def test_config_validation():
    assert SimulationConfig(Scenario.SELECT, PromptScheme.COT).n_outputs == 5
    assert SimulationConfig(Scenario.RESPOND, PromptScheme.COT).n_outputs == 1
    with pytest.raises(ValueError):
        SimulationConfig(Scenario.SELECT, PromptScheme.COT, n_outputs=1)
    with pytest.raises(ValueError):
        SimulationConfig(Scenario.RESPOND, PromptScheme.COT, max_turns=0)
    cfg = SimulationConfig("respond", "at-cot", sampling=SamplingParams(seed=4))
    assert SimulationConfig.from_dict(cfg.to_dict()) == cfg


def test_respond_run_shape():
    backend = scripted_backend()
    rec = simulate_conversation(Q, I, SimulationConfig(Scenario.RESPOND, PromptScheme.AT_COT), backend)
    assert rec.ok and len(rec.conversation.turns) == 3
    # three calls per turn: generate, answer, reformulate
    assert rec.provenance["calls"] == 9 == len(backend.calls)
    # the reformulation prefix is stripped
    assert rec.per_turn_effective_queries == ("jaguar", "jaguar second sense", "jaguar second sense", "jaguar second sense")
    assert rec.provenance["turn_notes"][0]["predicted_types"] == ["Semantic"]


def test_select_run_shape():
    rec = simulate_conversation(Q, I, SimulationConfig(Scenario.SELECT, PromptScheme.STANDARD), scripted_backend())
    turns = rec.conversation.turns
    assert [len(t.offered) for t in turns] == [5, 5, 5]
    assert turns[0].user_reply == "jaguar option 2"
    assert turns[1].user_reply == "jaguar option 2 option 2"
    assert rec.per_turn_effective_queries[1:] == tuple(t.user_reply for t in turns)


def test_selection_correction_and_fallback():
    replies = {"n": 0}

    def fn(messages, params):
        if "choose the reformulated query" in messages[0]["content"]:
            replies["n"] += 1
            return "I'd go with the jaguar option 3 one, thanks" if replies["n"] % 2 == 0 else "hmm"
        return script_reply(messages, params)

    rec = simulate_conversation(Q, I, SimulationConfig(Scenario.SELECT, PromptScheme.STANDARD, max_turns=1),
                                FunctionBackend(fn))
    assert rec.conversation.turns[0].user_reply == "jaguar option 3"
    assert rec.provenance["turn_notes"][0]["selection"] == "nearest-fallback"


def test_under_generation_noted_and_single_option_chosen():
    def fn(messages, params):
        if messages[0]["content"].startswith("Given a query"):
            return json.dumps({"clarifications": ["only one"]})
        raise AssertionError("no response call expected for a single option")

    rec = simulate_conversation(Q, I, SimulationConfig(Scenario.SELECT, PromptScheme.STANDARD, max_turns=1),
                                FunctionBackend(fn))
    note = rec.provenance["turn_notes"][0]
    assert note["generated"] == 1 and note["requested"] == 5 and note["selection"] == "only-option"


def test_per_output_generation_calls():
    backend = scripted_backend()
    cfg = SimulationConfig(Scenario.SELECT, PromptScheme.COT, n_outputs=3, max_turns=1, generation_calls="per_output",
                           sampling=SamplingParams(seed=10))
    rec = simulate_conversation(Q, I, cfg, backend)
    gens = [c for c in backend.calls if c[0]["content"].startswith("Given a query")]
    assert len(gens) == 3 and "Generate exactly 1 different" in gens[0][0]["content"]
    assert len(rec.conversation.turns[0].offered) == 3


def test_failure_raises_with_partial_record():
    calls = {"n": 0}

    def fn(messages, params):
        calls["n"] += 1
        if messages[0]["content"].startswith("Given a query") and calls["n"] > 3:
            return "not json"
        return script_reply(messages, params)

    cfg = SimulationConfig(Scenario.RESPOND, PromptScheme.STANDARD, max_retries=2)
    with pytest.raises(SimulationError) as exc:
        simulate_conversation(Q, I, cfg, FunctionBackend(fn))
    rec = exc.value.record
    assert not rec.ok and len(rec.conversation.turns) == 1
    assert "RetryExhaustedError" in rec.provenance["error"]


def test_record_roundtrip_is_byte_stable():
    rec = simulate_conversation(Q, I, SimulationConfig(Scenario.RESPOND, PromptScheme.COT), scripted_backend())
    again = RunRecord.from_dict(json.loads(rec.to_json()))
    assert again.to_json() == rec.to_json()
    assert rec.key == record_key("default", "cot", "respond", "q1", "i1")


def test_matrix_resume(tmp_path):
    pairs = [(Q, I), (Query("q2", "java"), UserIntent("i1", "q2", "the island"))]
    store = RunStore(tmp_path)
    base = SimulationConfig(Scenario.SELECT, PromptScheme.STANDARD)
    first = simulate_matrix(pairs, ALL_SCHEMES, ALL_SCENARIOS, base, scripted_backend(), store, "toy")
    assert len(first.records) == 16 and first.skipped == 0
    backend = scripted_backend()
    second = simulate_matrix(pairs, ALL_SCHEMES, ALL_SCENARIOS, base, backend, RunStore(tmp_path), "toy")
    assert second.skipped == 16 and backend.calls == []
    assert [r.to_json() for r in second.records] == [r.to_json() for r in first.records]
    rerun = simulate_matrix(pairs, ALL_SCHEMES, ALL_SCENARIOS, base, scripted_backend(), RunStore(tmp_path), "toy",
                            resume=False)
    assert rerun.skipped == 0


def test_matrix_parallel_matches_serial(tmp_path):
    pairs = [(Q, I), (Query("q2", "java"), UserIntent("i1", "q2", "the island"))]
    base = SimulationConfig(Scenario.RESPOND, PromptScheme.COT)
    serial = simulate_matrix(pairs, ALL_SCHEMES, ALL_SCENARIOS, base, scripted_backend())
    parallel = simulate_matrix(pairs, ALL_SCHEMES, ALL_SCENARIOS, base, scripted_backend(), parallelism=4)
    assert sorted(r.to_json() for r in serial.records) == sorted(r.to_json() for r in parallel.records)


def test_matrix_failures_are_persisted_but_not_manifested(tmp_path):
    def fn(messages, params):
        if "java" in messages[-1]["content"] and messages[0]["content"].startswith("Given a query"):
            return "garbage"
        return script_reply(messages, params)

    pairs = [(Q, I), (Query("q2", "java"), UserIntent("i1", "q2", "the island"))]
    store = RunStore(tmp_path)
    res = simulate_matrix(pairs, [PromptScheme.STANDARD], [Scenario.RESPOND],
                          SimulationConfig(Scenario.RESPOND, PromptScheme.STANDARD, max_retries=1), FunctionBackend(fn), store)
    assert list(res.failures) == ["default/standard/respond/q2.i1"]
    assert not store.has("default/standard/respond/q2.i1") and store.has("default/standard/respond/q1.i1")
    assert store.load("default/standard/respond/q2.i1").provenance["status"] == "failed"
