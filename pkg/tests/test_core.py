import pytest
from hypothesis import given, strategies as st

from atcot.core import (
    AT_DEFINITIONS,
    KIND_ORDER,
    AmbiguityKind,
    AmbiguityType,
    Clarification,
    ClarificationKind,
    Conversation,
    GenerationOutput,
    PromptScheme,
    Query,
    Scenario,
    Turn,
    UserIntent,
    effective_query,
    tokenize,
)

Q = Query("q1", "jaguar")
I = UserIntent("i1", "q1", "the big cat")


def rq(text):
    return Clarification(ClarificationKind.REFORMULATED_QUERY, text)


def cq(text):
    return Clarification(ClarificationKind.CLARIFYING_QUESTION, text)


def test_three_kinds_with_canonical_definitions():
    assert [k.value for k in KIND_ORDER] == ["Semantic", "Generalize", "Specify"]
    assert set(AT_DEFINITIONS) == set(AmbiguityKind)
    assert AT_DEFINITIONS[AmbiguityKind.SPECIFY].startswith("The query has a clear focus")
    assert [t.kind for t in AmbiguityType.all()] == list(KIND_ORDER)
    with pytest.raises(ValueError):
        AmbiguityType(AmbiguityKind.SEMANTIC, "something else")


@pytest.mark.parametrize("name,expected", [
    ("AT-CoT", PromptScheme.AT_COT), ("at_cot", PromptScheme.AT_COT), ("AT Standard", PromptScheme.AT_STANDARD),
    ("cot", PromptScheme.COT), ("Standard", PromptScheme.STANDARD),
])
def test_scheme_parse(name, expected):
    assert PromptScheme.parse(name) is expected


def test_scheme_flags():
    flags = {s: (s.uses_ambiguity_types, s.uses_reasoning) for s in PromptScheme}
    assert flags == {
        PromptScheme.STANDARD: (False, False), PromptScheme.AT_STANDARD: (True, False),
        PromptScheme.COT: (False, True), PromptScheme.AT_COT: (True, True),
    }
    assert PromptScheme.AT_COT.label == "AT-CoT"


def test_scheme_parse_rejects_unknown():
    with pytest.raises(ValueError):
        PromptScheme.parse("tree-of-thought")


def test_scenario_kind():
    assert Scenario.SELECT.clarification_kind is ClarificationKind.REFORMULATED_QUERY
    assert Scenario.RESPOND.clarification_kind is ClarificationKind.CLARIFYING_QUESTION


def test_query_validation():
    assert Query("a", "  x  ").text == "x"
    with pytest.raises(ValueError):
        Query("a", "   ")
    with pytest.raises(ValueError):
        Query("a", "x", 5)


def test_generation_output_rules():
    with pytest.raises(ValueError):
        GenerationOutput(())
    with pytest.raises(ValueError):
        GenerationOutput((cq("a?"),), predicted_types=(AmbiguityKind.SEMANTIC, AmbiguityKind.SEMANTIC))
    out = GenerationOutput((cq("a?"),))
    with pytest.raises(ValueError):
        out.check_scheme(PromptScheme.AT_COT)
    out.check_scheme(PromptScheme.STANDARD)
    assert GenerationOutput.from_dict(out.to_dict()) == out


def test_conversation_validation():
    with pytest.raises(ValueError):
        Conversation(Q, I, Scenario.RESPOND, PromptScheme.COT, (Turn(1, (rq("x"),), "yes", "x"),))
    with pytest.raises(ValueError):
        Conversation(Q, I, Scenario.SELECT, PromptScheme.COT, (Turn(1, (rq("a"), rq("b")), "c"),))
    with pytest.raises(ValueError):
        Conversation(Q, I, Scenario.SELECT, PromptScheme.COT, (Turn(2, (rq("a"), rq("b")), "a"),))
    conv = Conversation(Q, I, Scenario.SELECT, PromptScheme.COT, max_turns=1)
    conv = conv.with_turn(Turn(1, (rq("a"), rq("b")), "b"))
    with pytest.raises(ValueError):
        conv.with_turn(Turn(2, (rq("c"), rq("d")), "c"))
    assert Conversation.from_dict(conv.to_dict()) == conv


def test_effective_query():
    sel = Conversation(Q, I, Scenario.SELECT, PromptScheme.COT, (Turn(1, (rq("a"), rq("b")), "b"),))
    assert [effective_query(sel, t) for t in (0, 1)] == ["jaguar", "b"]
    res = Conversation(Q, I, Scenario.RESPOND, PromptScheme.COT, (Turn(1, (cq("animal?"),), "yes", "jaguar animal"),))
    assert effective_query(res, 1) == "jaguar animal"
    with pytest.raises(IndexError):
        effective_query(res, 2)


@given(st.text())
def test_tokenize_lowercase_alnum(text):
    for tok in tokenize(text):
        assert tok == tok.lower() and tok.isalnum() and "_" not in tok


def test_tokenize_example():
    assert tokenize("Jaguar's top-speed, 2024!") == ["jaguar", "s", "top", "speed", "2024"]
