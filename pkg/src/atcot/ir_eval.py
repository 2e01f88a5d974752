"""BM25 retrieval, reranking, nDCG@k / MRR@k and per-turn evaluation of
simulated conversations."""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Protocol, Sequence, Union

from .core import ALL_SCENARIOS, ALL_SCHEMES, PromptScheme, Scenario, tokenize

logger = logging.getLogger(__name__)

K1 = 0.9
B = 0.4


class Corpus:
    """Inverted index over a document collection.

    ``postings[term]`` maps doc_id to term frequency. Documents that tokenize
    to nothing still count towards ``n_docs`` and ``avgdl``.
    """

    def __init__(self, documents: Mapping[str, str]):
        if not documents:
            raise ValueError("cannot index an empty corpus")
        self.documents = dict(documents)
        self.doc_len: dict[str, int] = {}
        self.postings: dict[str, dict[str, int]] = defaultdict(dict)
        for doc_id, text in self.documents.items():
            tf = Counter(tokenize(text))
            self.doc_len[doc_id] = sum(tf.values())
            for term, count in tf.items():
                self.postings[term][doc_id] = count
        self.postings = dict(self.postings)
        self.n_docs = len(self.documents)
        self.avgdl = sum(self.doc_len.values()) / self.n_docs
        if self.avgdl <= 0:
            raise ValueError("every document is empty after tokenization")

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def tf(self, doc_id: str, term: str) -> int:
        return self.postings.get(term, {}).get(doc_id, 0)

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))


def build_index(documents: Mapping[str, str]) -> Corpus:
    return Corpus(documents)


@dataclass(frozen=True)
class Ranking:
    """Scored documents ordered by score descending, then doc_id ascending."""

    entries: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        entries = tuple((str(d), float(s)) for d, s in self.entries)
        object.__setattr__(self, "entries", entries)
        ids = [d for d, _ in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate doc_id in ranking")
        if list(entries) != sorted(entries, key=_order):
            raise ValueError("ranking entries are not in (score desc, doc_id asc) order")

    @classmethod
    def from_scores(cls, scores: Mapping[str, float], k: Optional[int] = None) -> "Ranking":
        items = sorted(scores.items(), key=_order)
        return cls(tuple(items if k is None else items[:k]))

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def _order(item: tuple[str, float]):
    return (-item[1], item[0])


def bm25_search(index: Corpus, query: str, k: int = 100) -> Ranking:
    """Top-``k`` BM25 ranking; documents sharing no term with the query are dropped."""
    terms = set(tokenize(query))
    scores: dict[str, float] = defaultdict(float)
    for term in terms:
        posting = index.postings.get(term)
        if not posting:
            continue
        idf = index.idf(term)
        for doc_id, tf in posting.items():
            norm = K1 * (1.0 - B + B * index.doc_len[doc_id] / index.avgdl)
            scores[doc_id] += idf * tf * (K1 + 1.0) / (tf + norm)
    return Ranking.from_scores(scores, k)


class Reranker(Protocol):
    def rerank(self, query: str, ranking: Ranking, corpus: Corpus) -> Ranking: ...


class IdentityReranker:
    identity = "identity"

    def rerank(self, query: str, ranking: Ranking, corpus: Corpus) -> Ranking:
        return ranking


class EmbeddingReranker:
    """Reorders candidates by query-passage embedding cosine from an external service."""

    def __init__(self, embedder, max_chars: int = 2000):
        self.embedder = embedder
        self.max_chars = max_chars
        self.identity = f"embedding:{getattr(embedder, 'identity', type(embedder).__name__)}"

    def rerank(self, query: str, ranking: Ranking, corpus: Corpus) -> Ranking:
        if not len(ranking):
            return ranking
        from .cg_eval import cosine_to_unit

        texts = [query] + [corpus.documents[d][: self.max_chars] or d for d in ranking.doc_ids]
        vecs = self.embedder.embed(texts)
        return Ranking.from_scores({d: cosine_to_unit(vecs[0], v) for d, v in zip(ranking.doc_ids, vecs[1:])})


class PipelineError(RuntimeError):
    pass


def retrieve_rerank(index: Corpus, query: str, reranker: Optional[Reranker] = None, k: int = 100) -> Ranking:
    first = bm25_search(index, query, k)
    if reranker is None:
        return first
    second = reranker.rerank(query, first, index)
    if sorted(second.doc_ids) != sorted(first.doc_ids):
        raise PipelineError("reranker output is not a permutation of its input")
    return second


# --- qrels ----------------------------------------------------------------------------

class Qrels:
    """Graded judgments keyed by (query_id, facet_id); facet "0" when unfaceted."""

    def __init__(self, entries: Iterable[tuple[str, str, str, int]] = ()):
        self._grades: dict[tuple[str, str], dict[str, int]] = defaultdict(dict)
        for qid, facet, doc, grade in entries:
            self.add(qid, facet, doc, grade)

    def add(self, query_id: str, facet_id: str, doc_id: str, grade: int) -> None:
        key = (str(query_id), str(facet_id))
        if doc_id in self._grades[key]:
            raise ValueError(f"duplicate judgment for {key + (doc_id,)}")
        if grade < 0:
            logger.warning("clamping negative grade %d for %s/%s/%s to 0", grade, query_id, facet_id, doc_id)
            grade = 0
        self._grades[key][str(doc_id)] = int(grade)

    def grades(self, query_id: str, facet_id: str = "0") -> dict[str, int]:
        return dict(self._grades.get((str(query_id), str(facet_id)), {}))

    def has(self, query_id: str, facet_id: str = "0") -> bool:
        return any(g > 0 for g in self._grades.get((str(query_id), str(facet_id)), {}).values())

    def query_ids(self) -> set[str]:
        return {q for q, _ in self._grades}

    def keys(self):
        return list(self._grades)

    def entries(self):
        for (q, f), docs in sorted(self._grades.items()):
            for d, g in sorted(docs.items()):
                yield q, f, d, g

    def __len__(self):
        return sum(len(v) for v in self._grades.values())


class NoRelevantDocuments(ValueError):
    """The metric is undefined: the judgments hold no positive grade."""


def _doc_ids(ranking: Union[Ranking, Sequence[str]]) -> list[str]:
    return ranking.doc_ids if isinstance(ranking, Ranking) else list(ranking)


def _gain(grade: int, gain: str) -> float:
    if gain == "linear":
        return float(grade)
    if gain == "exponential":
        return float(2 ** grade - 1)
    raise ValueError(f"unknown gain {gain!r}")


def ndcg_at_k(ranking, grades: Mapping[str, int], k: int = 10, gain: str = "linear") -> float:
    positives = sorted((g for g in grades.values() if g > 0), reverse=True)
    if not positives:
        raise NoRelevantDocuments("nDCG is undefined without a positive judgment")
    dcg = sum(_gain(grades.get(d, 0), gain) / math.log2(i + 2) for i, d in enumerate(_doc_ids(ranking)[:k]))
    idcg = sum(_gain(g, gain) / math.log2(i + 2) for i, g in enumerate(positives[:k]))
    return dcg / idcg


def mrr_at_k(ranking, grades: Mapping[str, int], k: int = 10) -> float:
    if not any(g > 0 for g in grades.values()):
        raise NoRelevantDocuments("MRR is undefined without a positive judgment")
    for i, d in enumerate(_doc_ids(ranking)[:k]):
        if grades.get(d, 0) >= 1:
            return 1.0 / (i + 1)
    return 0.0


METRICS = {"ndcg": ndcg_at_k, "mrr": mrr_at_k}


def write_trec_run(rankings: Mapping[str, Ranking], tag: str, fh) -> None:
    """Write ``qid Q0 docid rank score tag`` lines."""
    for qid in sorted(rankings):
        for rank, (doc, score) in enumerate(rankings[qid], start=1):
            fh.write(f"{qid} Q0 {doc} {rank} {score:.6f} {tag}\n")


# --- run evaluation -----------------------------------------------------------------

Cell = tuple[PromptScheme, Scenario, int]


@dataclass
class IrReport:
    metric: str
    k: int
    # (scheme, scenario, turn) -> conversation key -> score
    per_conversation: dict[Cell, dict[str, float]]
    # scenario -> conversation-unit (query.intent) -> turn-0 score
    baseline: dict[Scenario, dict[str, float]]
    skipped: list[str] = field(default_factory=list)
    markers: dict[Cell, str] = field(default_factory=dict)
    max_turns: int = 3

    def mean(self, cell: Cell) -> float:
        vals = self.per_conversation.get(cell, {})
        return sum(vals.values()) / len(vals) if vals else math.nan

    def baseline_mean(self, scenario: Scenario) -> float:
        vals = self.baseline.get(scenario, {})
        return sum(vals.values()) / len(vals) if vals else math.nan

    @property
    def schemes(self) -> list[PromptScheme]:
        present = {c[0] for c in self.per_conversation}
        return [s for s in ALL_SCHEMES if s in present]

    @property
    def scenarios(self) -> list[Scenario]:
        present = {c[1] for c in self.per_conversation} | set(self.baseline)
        return [s for s in ALL_SCENARIOS if s in present]

    def to_dict(self) -> dict:
        cells = []
        for (scheme, scenario, turn), vals in sorted(self.per_conversation.items(),
                                                     key=lambda kv: (kv[0][2], kv[0][1].value, kv[0][0].value)):
            cells.append({
                "scheme": scheme.value, "scenario": scenario.value, "turn": turn,
                "mean": self.mean((scheme, scenario, turn)), "n": len(vals),
                "marker": self.markers.get((scheme, scenario, turn), ""),
                "per_conversation": dict(sorted(vals.items())),
            })
        return {
            "metric": self.metric,
            "k": self.k,
            "max_turns": self.max_turns,
            "baseline": {s.value: {"mean": self.baseline_mean(s), "per_conversation": dict(sorted(v.items()))}
                         for s, v in self.baseline.items()},
            "cells": cells,
            "skipped": sorted(self.skipped),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IrReport":
        per, markers = {}, {}
        for c in d["cells"]:
            cell = (PromptScheme.parse(c["scheme"]), Scenario.parse(c["scenario"]), int(c["turn"]))
            per[cell] = c["per_conversation"]
            if c.get("marker"):
                markers[cell] = c["marker"]
        return cls(
            metric=d["metric"], k=d["k"], per_conversation=per,
            baseline={Scenario.parse(s): v["per_conversation"] for s, v in d["baseline"].items()},
            skipped=d.get("skipped", []), markers=markers, max_turns=d.get("max_turns", 3),
        )


def evaluate_runs(
    records: Iterable,
    index: Corpus,
    qrels: Qrels,
    reranker: Optional[Reranker] = None,
    metric: str = "ndcg",
    k: int = 10,
    depth: int = 100,
    gain: str = "linear",
    facet_from_intent: bool = True,
    t_test: str = "paired",
) -> IrReport:
    """Score every completed turn of every conversation against its facet's qrels.

    Turn 0 (the original query) feeds the no-clarification baseline.
    Conversations whose (query, facet) has no positive judgment are skipped.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {sorted(METRICS)}")
    score_fn = (lambda r, g: ndcg_at_k(r, g, k, gain)) if metric == "ndcg" else (lambda r, g: mrr_at_k(r, g, k))
    rankings: dict[str, Ranking] = {}

    def ranked(text: str) -> Ranking:
        if text not in rankings:
            rankings[text] = retrieve_rerank(index, text, reranker, depth)
        return rankings[text]

    per: dict[Cell, dict[str, float]] = defaultdict(dict)
    baseline: dict[Scenario, dict[str, float]] = defaultdict(dict)
    skipped: list[str] = []
    max_turns = 0
    for rec in records:
        conv = rec.conversation
        facet = conv.intent.intent_id if facet_from_intent else "0"
        grades = qrels.grades(conv.query.query_id, facet)
        if not any(g > 0 for g in grades.values()):
            skipped.append(rec.key)
            continue
        unit = f"{conv.query.query_id}.{conv.intent.intent_id}"
        queries = rec.per_turn_effective_queries
        baseline[rec.config.scenario][unit] = score_fn(ranked(queries[0]), grades)
        for t in range(1, len(queries)):
            per[(rec.config.scheme, rec.config.scenario, t)][unit] = score_fn(ranked(queries[t]), grades)
        max_turns = max(max_turns, rec.config.max_turns)
    if skipped:
        logger.warning("%d conversations skipped for lack of judgments", len(skipped))
    report = IrReport(metric, k, dict(per), dict(baseline), skipped, max_turns=max_turns or 3)
    report.markers = _cell_markers(report, t_test)
    return report


def _cell_markers(report: IrReport, t_test: str = "paired") -> dict[Cell, str]:
    from .stats import significance_markers

    markers = {}
    for scenario in report.scenarios:
        for turn in range(1, report.max_turns + 1):
            block = {s: report.per_conversation[(s, scenario, turn)] for s in report.schemes
                     if (s, scenario, turn) in report.per_conversation}
            if len(block) < 2:
                continue
            common = set.intersection(*(set(v) for v in block.values()))
            if len(common) < 2:
                continue
            aligned = {s: {u: v[u] for u in common} for s, v in block.items()}
            for s, m in significance_markers(aligned, test=t_test).items():
                if m:
                    markers[(s, scenario, turn)] = m
    return markers


def render_ir_table(reports: Sequence[tuple[str, IrReport]], decimals: int = 3) -> str:
    """Baseline row, then one block of scheme rows per turn; a select/respond column pair per dataset."""
    fmt = lambda x: "-" if x is None or math.isnan(x) else f"{x:.{decimals}f}"
    scenarios = list(ALL_SCENARIOS)
    header = [""] + [f"{name}:{sc.value}" for name, _ in reports for sc in scenarios]
    rows = [["w/o clarification"] + [fmt(r.baseline_mean(sc)) if sc in r.baseline else "-"
                                     for _, r in reports for sc in scenarios]]
    schemes = []
    for _, r in reports:
        schemes += [s for s in r.schemes if s not in schemes]
    max_turns = max(r.max_turns for _, r in reports)
    blocks = []
    for turn in range(1, max_turns + 1):
        block = []
        for s in schemes:
            row = [s.label]
            for _, r in reports:
                for sc in scenarios:
                    cell = (s, sc, turn)
                    row.append(fmt(r.mean(cell)) + r.markers.get(cell, "") if cell in r.per_conversation else "-")
            block.append(row)
        blocks.append((f"Turn-{turn}", block))
    widths = [max(len(x[i]) for x in [header] + rows + [b for _, bl in blocks for b in bl])
              for i in range(len(header))]
    line = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
    sep = "-" * len(line(header))
    out = [sep, line(header), sep, line(rows[0]), sep]
    for title, block in blocks:
        out.append(title)
        out.append(sep)
        out.extend(line(r) for r in block)
        out.append(sep)
    return "\n".join(out)
