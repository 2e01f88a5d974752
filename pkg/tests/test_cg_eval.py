import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from atcot.cg_eval import (
    CgReport,
    EmbeddingScorer,
    LexicalScorer,
    ScoreMatrix,
    at_distribution,
    clamp_unit,
    cosine_to_unit,
    evaluate_dataset,
    lexical_score,
    query_score,
    render_at_table,
    render_level_table,
    render_overall_table,
    score_matrix,
    stratify_by_level,
)
from atcot.core import AmbiguityKind, PromptScheme

words = st.lists(st.sampled_from("cat dog car red blue run".split()), max_size=6).map(" ".join)


def test_lexical_score_values():
    assert lexical_score("red car", "red car") == 1.0
    assert lexical_score("", "") == 1.0
    assert lexical_score("", "x") == 0.0
    # overlap 1, precision 1/2, recall 1/3 -> F1 = 0.4
    assert lexical_score("red car", "a red bike") == pytest.approx(0.4)


@given(words, words)
def test_lexical_symmetric_and_bounded(a, b):
    s = lexical_score(a, b)
    assert 0.0 <= s <= 1.0 and s == pytest.approx(lexical_score(b, a))


def test_cosine_to_unit():
    assert cosine_to_unit([1, 0], [1, 0]) == pytest.approx(1.0)
    assert cosine_to_unit([1, 0], [-1, 0]) == pytest.approx(0.0)
    assert cosine_to_unit([1, 0], [0, 1]) == pytest.approx(0.5)
    assert cosine_to_unit([0, 0], [1, 0]) == 0.5
    assert clamp_unit(1.2) == 1.0 and clamp_unit(-0.1) == 0.0


def test_embedding_scorer_batches():
    class Fake:
        def __init__(self):
            self.batches = []

        def embed(self, texts):
            self.batches.append(list(texts))
            return [[1.0, 0.0] if "cat" in t else [0.0, 1.0] for t in texts]

    fake = Fake()
    m = score_matrix(["a cat", "a car"], ["the cat"], EmbeddingScorer(fake))
    assert m.values.shape == (2, 1)
    assert m.values[0, 0] == pytest.approx(1.0) and m.values[1, 0] == pytest.approx(0.5)


def test_score_matrix_validation():
    with pytest.raises(ValueError):
        ScoreMatrix(("a",), ("b",), np.array([[1.5]]))
    with pytest.raises(ValueError):
        ScoreMatrix(("a", "b"), ("c",), np.array([[0.5]]))


def test_query_score_is_max():
    m = score_matrix(["red car", "blue dog"], ["red car now", "dog"], LexicalScorer())
    assert query_score(m) == pytest.approx(max(lexical_score(g, a) for g in m.generated for a in m.annotated))


@given(st.lists(words, min_size=1, max_size=4), st.lists(words, min_size=1, max_size=4), words)
def test_adding_a_generation_never_lowers_score(gen, ann, extra):
    s = LexicalScorer()
    assert query_score(score_matrix(gen + [extra], ann, s)) >= query_score(score_matrix(gen, ann, s))


def test_evaluate_dataset_skips_missing():
    ann = {"q1": ["red car?"], "q2": ["blue dog?"]}
    gens = {PromptScheme.STANDARD: {"q1": ["red car?"]}, "at-cot": {"q1": ["x"], "q2": ["blue dog?"]}}
    rep = evaluate_dataset(ann, gens, LexicalScorer(), "d")
    assert rep.skipped[PromptScheme.STANDARD] == ["q2"]
    assert rep.mean(PromptScheme.STANDARD) == pytest.approx(100.0)
    assert rep.mean(PromptScheme.AT_COT) == pytest.approx(50.0)
    assert CgReport.from_dict(rep.to_dict()).to_dict() == rep.to_dict()


def test_stratify_by_level():
    per = {"a": 0.5, "b": 0.7, "c": 0.2, "d": 0.9}
    out = stratify_by_level(per, {"a": 1, "b": 1, "c": 3, "d": None})
    assert out == {1: pytest.approx(60.0), 3: pytest.approx(20.0)}
    with pytest.raises(ValueError):
        stratify_by_level({"a": 0.1}, {"a": 9})


def test_at_distribution():
    preds = {"a": ["Semantic"], "b": ["Semantic", "Specify"], "c": []}
    table = at_distribution(preds, {"a": 0.8, "b": 0.6, "c": 0.1}, {"a": 0.7, "b": 0.7, "c": 0.1})
    freq, delta = table[AmbiguityKind.SEMANTIC]
    assert freq == pytest.approx(200 / 3) and delta == pytest.approx(0.0)
    assert table[AmbiguityKind.SPECIFY] == (pytest.approx(100 / 3), pytest.approx(-10.0))
    assert table[AmbiguityKind.GENERALIZE] == (0.0, None)


def test_rendering():
    rep = CgReport("qulac", "lexical", {PromptScheme.STANDARD: {"a": 0.5}, PromptScheme.AT_COT: {"a": 0.75}},
                   markers={PromptScheme.AT_COT: "*"},
                   levels={PromptScheme.STANDARD: {1: 50.0}, PromptScheme.AT_COT: {1: 75.0}},
                   at_table={k: (10.0, -1.0) for k in AmbiguityKind},
                   level_markers={PromptScheme.AT_COT: {1: "*"}})
    overall = render_overall_table([rep])
    assert "AT-CoT    75.0*" in overall.splitlines()
    assert "75.0*" in render_level_table(rep)
    assert "10.0 (↓ 1.0)" in render_at_table([rep])
    empty = CgReport("x", "lexical", {PromptScheme.COT: {}})
    assert math.isnan(empty.mean(PromptScheme.COT)) and "-" in render_overall_table([empty])


def test_spec_style_examples():
    s = LexicalScorer()
    assert score_matrix(["a"], ["a"], s).values.tolist() == [[1.0]]
    assert score_matrix(["a", "b"], ["a", "b", "c"], s).values.shape == (2, 3)
    assert score_matrix(["x y"], ["x z"], s).values.tolist() == [[0.5]]
    assert lexical_score("a b", "c d") == 0.0
    m = ScoreMatrix(("g1", "g2"), ("a1", "a2"), np.array([[0.2, 0.9], [0.5, 0.1]]))
    assert query_score(m) == 0.9
    with pytest.raises(ValueError):
        score_matrix([], ["a"], s)


@given(st.dictionaries(st.text(min_size=1, max_size=3), st.floats(0, 1), min_size=1))
def test_dataset_mean_ignores_query_order(scores):
    a = CgReport("d", "x", {PromptScheme.COT: dict(scores)})
    b = CgReport("d", "x", {PromptScheme.COT: dict(reversed(list(scores.items())))})
    assert a.mean(PromptScheme.COT) == pytest.approx(b.mean(PromptScheme.COT))


kinds = st.lists(st.sampled_from(["Semantic", "Generalize", "Specify"]), unique=True)


@given(st.dictionaries(st.text(min_size=1, max_size=3), kinds, min_size=1))
def test_at_distribution_counts(preds):
    table = at_distribution(preds, {}, {})
    n = len(preds)
    assert all(0.0 <= f <= 100.0 for f, _ in table.values())
    total = sum(round(f * n / 100) for f, _ in table.values())
    assert total == sum(len(v) for v in preds.values())


def test_service_scorer_clamps_and_picks_component():
    import httpx

    from atcot.cg_eval import ServiceScorer
    from atcot.llm_backend import EndpointConfig

    seen = []

    def handler(request):
        body = json.loads(request.content)
        seen.append(body)
        n = len(body["candidates"])
        return httpx.Response(200, json={"f1": [-0.2 + 0.5 * i for i in range(n)], "precision": [0.3] * n})

    cfg = EndpointConfig(url="http://score.test", model="bertscore", backoff=0.0)
    scorer = ServiceScorer(cfg, transport=httpx.MockTransport(handler))
    m = scorer.score_batch(["g1", "g2"], ["a1", "a2"])
    assert m.tolist() == [[0.0, 0.3], [0.8, 1.0]]
    assert seen[0]["candidates"] == ["g1", "g1", "g2", "g2"] and seen[0]["references"] == ["a1", "a2", "a1", "a2"]
    assert ServiceScorer(cfg, "precision", transport=httpx.MockTransport(handler)).score("x", "y") == 0.3
    with pytest.raises(ValueError):
        ServiceScorer(cfg, "accuracy")
