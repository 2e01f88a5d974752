import io
import math

import pytest
from hypothesis import given, strategies as st

from atcot.core import PromptScheme, Query, Scenario, UserIntent
from atcot.ir_eval import (
    Corpus,
    EmbeddingReranker,
    IdentityReranker,
    IrReport,
    NoRelevantDocuments,
    PipelineError,
    Qrels,
    Ranking,
    bm25_search,
    build_index,
    evaluate_runs,
    mrr_at_k,
    ndcg_at_k,
    render_ir_table,
    retrieve_rerank,
    write_trec_run,
)
from atcot.simulation import SimulationConfig, simulate_conversation

from helpers import scripted_backend

DOCS = {"d1": "cat", "d2": "dog", "d3": "cat cat dog", "d4": "bird"}


def test_bm25_hand_case():
    r = bm25_search(build_index({"d1": "cat", "d2": "dog"}), "cat")
    assert r.doc_ids == ["d1"]
    assert r.entries[0][1] == pytest.approx(math.log(2), abs=1e-12)


def test_bm25_excludes_zero_overlap_and_breaks_ties_by_id():
    idx = build_index({"b": "cat", "a": "cat", "c": "dog"})
    assert bm25_search(idx, "cat").doc_ids == ["a", "b"]
    assert bm25_search(idx, "fish").doc_ids == []
    assert len(bm25_search(build_index({f"d{i}": "x" for i in range(20)}), "x", k=5)) == 5


def test_corpus_stats():
    idx = build_index(DOCS)
    assert idx.n_docs == 4 and idx.avgdl == pytest.approx(1.5)
    assert idx.df("cat") == 2 and idx.tf("d3", "cat") == 2 and idx.tf("d4", "cat") == 0
    with pytest.raises(ValueError):
        Corpus({})


def test_ranking_validation():
    with pytest.raises(ValueError):
        Ranking((("a", 1.0), ("a", 0.5)))
    with pytest.raises(ValueError):
        Ranking((("a", 0.5), ("b", 1.0)))


def test_rerankers():
    idx = build_index(DOCS)

    class Flip:
        def rerank(self, query, ranking, corpus):
            return Ranking.from_scores({d: float(i) for i, d in enumerate(ranking.doc_ids)})

    class Lossy:
        def rerank(self, query, ranking, corpus):
            return Ranking(ranking.entries[:1])

    base = retrieve_rerank(idx, "cat dog", IdentityReranker())
    assert retrieve_rerank(idx, "cat dog", Flip()).doc_ids == list(reversed(base.doc_ids))
    with pytest.raises(PipelineError):
        retrieve_rerank(idx, "cat dog", Lossy())

    class Embed:
        def embed(self, texts):
            return [[1.0, 0.0] if "dog" in t and "cat" not in t else [0.0, 1.0] for t in texts]

    assert retrieve_rerank(idx, "dog", EmbeddingReranker(Embed())).doc_ids[0] == "d2"


def test_ndcg_and_mrr_cases():
    assert ndcg_at_k(["a", "x", "b"], {"a": 1, "b": 1}) == pytest.approx(0.9197, abs=1e-4)
    assert ndcg_at_k(["a"], {"a": 3, "b": 1}, gain="exponential") == pytest.approx(7 / (7 + 1 / math.log2(3)))
    assert ndcg_at_k([], {"a": 1}) == 0.0
    assert mrr_at_k(["x", "y", "a"], {"a": 1}) == pytest.approx(1 / 3)
    assert mrr_at_k(["x"] * 0 + [f"d{i}" for i in range(10)] + ["a"], {"a": 2}) == 0.0
    with pytest.raises(NoRelevantDocuments):
        ndcg_at_k(["a"], {"a": 0})


@given(st.permutations(list("abcdefgh")), st.dictionaries(st.sampled_from(list("abcdefghij")), st.integers(0, 3), min_size=1))
def test_ndcg_bounded_and_ideal_is_one(perm, grades):
    if not any(g > 0 for g in grades.values()):
        return
    assert 0.0 <= ndcg_at_k(perm, grades) <= 1.0 + 1e-12
    ideal = sorted(grades, key=lambda d: -grades[d])
    assert ndcg_at_k(ideal, grades) == pytest.approx(1.0)


def test_qrels():
    q = Qrels([("q1", "f1", "d1", 2), ("q1", "f1", "d2", -1)])
    assert q.grades("q1", "f1") == {"d1": 2, "d2": 0}
    assert q.has("q1", "f1") and not q.has("q1", "0")
    with pytest.raises(ValueError):
        q.add("q1", "f1", "d1", 1)


def test_trec_run_format():
    buf = io.StringIO()
    write_trec_run({"q1": Ranking((("d1", 2.0), ("d2", 1.0)))}, "tag", buf)
    assert buf.getvalue() == "q1 Q0 d1 1 2.000000 tag\nq1 Q0 d2 2 1.000000 tag\n"


def test_evaluate_runs_end_to_end():
    idx = build_index({"d1": "jaguar cat speed", "d2": "jaguar car", "d3": "second sense jaguar"})
    qrels = Qrels([("q1", "i1", "d3", 1), ("q1", "i2", "d2", 1)])
    recs = []
    for scenario in (Scenario.SELECT, Scenario.RESPOND):
        for iid in ("i1", "i2", "i3"):
            recs.append(simulate_conversation(Query("q1", "jaguar"), UserIntent(iid, "q1", "x"),
                                              SimulationConfig(scenario, PromptScheme.COT), scripted_backend()))
    report = evaluate_runs(recs, idx, qrels)
    assert sorted(report.skipped) == ["default/cot/respond/q1.i3", "default/cot/select/q1.i3"]
    cell = (PromptScheme.COT, Scenario.RESPOND, 1)
    # "jaguar second sense" ranks d3 first for i1; d2 second for i2
    assert report.per_conversation[cell]["q1.i1"] == pytest.approx(1.0)
    assert report.baseline[Scenario.RESPOND]["q1.i1"] < 1.0
    again = IrReport.from_dict(report.to_dict())
    assert again.to_dict() == report.to_dict()
    table = render_ir_table([("toy", report)])
    assert "w/o clarification" in table and "Turn-3" in table
    mrr = evaluate_runs(recs, idx, qrels, metric="mrr")
    assert mrr.metric == "mrr"
    with pytest.raises(ValueError):
        evaluate_runs(recs, idx, qrels, metric="map")
