"""Clarification-generation scoring.

A query's score is the best similarity between any generated question and any
annotated one. Dataset scores are means over queries on a 0-100 scale.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from .core import KIND_ORDER, ALL_SCHEMES, AmbiguityKind, PromptScheme, tokenize

logger = logging.getLogger(__name__)


class SimilarityScorer(Protocol):
    identity: str

    def score(self, candidate: str, reference: str) -> float: ...

    def score_batch(self, candidates: Sequence[str], references: Sequence[str]) -> np.ndarray: ...


def lexical_score(a: str, b: str) -> float:
    """Token-level F1 over lowercased alphanumeric tokens (multiset overlap)."""
    ta, tb = tokenize(a), tokenize(b)
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    common = sum((Counter(ta) & Counter(tb)).values())
    if common == 0:
        return 0.0
    precision = common / len(ta)
    recall = common / len(tb)
    return 2 * precision * recall / (precision + recall)


class LexicalScorer:
    identity = "lexical-token-f1"

    def score(self, candidate: str, reference: str) -> float:
        return lexical_score(candidate, reference)

    def score_batch(self, candidates, references) -> np.ndarray:
        return np.array([[lexical_score(c, r) for r in references] for c in candidates], dtype=float)


def cosine_to_unit(u, v) -> float:
    """Cosine similarity mapped from [-1, 1] onto [0, 1]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.5
    cos = float(np.dot(u, v) / (nu * nv))
    return min(1.0, max(0.0, (cos + 1.0) / 2.0))


class EmbeddingScorer:
    """Cosine similarity of embeddings from an external service.

    ``embedder`` is anything with ``embed(texts) -> vectors`` (for example
    :class:`atcot.llm_backend.EmbeddingClient`). Batches embed each distinct
    string once.
    """

    def __init__(self, embedder):
        self.embedder = embedder
        self.identity = f"embedding-cosine:{getattr(embedder, 'identity', type(embedder).__name__)}"

    def score(self, candidate: str, reference: str) -> float:
        if candidate == reference:
            return 1.0
        u, v = self.embedder.embed([candidate, reference])
        return cosine_to_unit(u, v)

    def score_batch(self, candidates, references) -> np.ndarray:
        unique = list(dict.fromkeys(list(candidates) + list(references)))
        vecs = dict(zip(unique, self.embedder.embed(unique)))
        return np.array([[cosine_to_unit(vecs[c], vecs[r]) for r in references] for c in candidates])


def embedding_score(a: str, b: str, embedder) -> float:
    return EmbeddingScorer(embedder).score(a, b)


def clamp_unit(x: float) -> float:
    """Clamp raw scores (e.g. a BERTScore F1 that can go negative) onto [0, 1]."""
    return min(1.0, max(0.0, float(x)))


class ServiceScorer:
    """Pairwise scores from an external scoring service (e.g. a BERTScore server).

    Request: ``{"model", "candidates": [...], "references": [...]}`` with the
    two lists aligned pairwise. Response: ``{"f1": [...], "precision": [...],
    "recall": [...]}`` or a bare list. ``component`` picks the field; raw
    values are clamped onto [0, 1].
    """

    def __init__(self, config, component: str = "f1", transport=None):
        import httpx

        if component not in ("f1", "precision", "recall"):
            raise ValueError("component must be f1, precision or recall")
        self.config = config
        self.component = component
        self.identity = f"service-{component}:{config.model}@{config.url}"
        self._client = httpx.Client(transport=transport)

    def _pairs(self, cands: Sequence[str], refs: Sequence[str]) -> list[float]:
        from .llm_backend import ProtocolError, _post_json

        data = _post_json(self._client, self.config,
                          {"model": self.config.model, "candidates": list(cands), "references": list(refs)})
        if isinstance(data, dict):
            data = data.get(self.component)
        if not isinstance(data, list) or len(data) != len(cands):
            raise ProtocolError(f"expected {len(cands)} scores under {self.component!r}")
        return [clamp_unit(x) for x in data]

    def score(self, candidate: str, reference: str) -> float:
        return self._pairs([candidate], [reference])[0]

    def score_batch(self, candidates, references) -> np.ndarray:
        cands = [c for c in candidates for _ in references]
        refs = [r for _ in candidates for r in references]
        return np.array(self._pairs(cands, refs), dtype=float).reshape(len(candidates), len(references))


@dataclass(frozen=True)
class ScoreMatrix:
    generated: tuple[str, ...]
    annotated: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if not self.generated or not self.annotated:
            raise ValueError("score matrix needs at least one generated and one annotated question")
        if self.values.shape != (len(self.generated), len(self.annotated)):
            raise ValueError("value shape does not match the question lists")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("similarity values must lie in [0, 1]")


def score_matrix(generated: Sequence[str], annotated: Sequence[str], scorer: SimilarityScorer) -> ScoreMatrix:
    generated, annotated = tuple(generated), tuple(annotated)
    if not generated or not annotated:
        raise ValueError("both question lists must be non-empty")
    values = np.asarray(scorer.score_batch(generated, annotated), dtype=float)
    return ScoreMatrix(generated, annotated, values)


def query_score(matrix: ScoreMatrix) -> float:
    return float(matrix.values.max())


@dataclass
class CgReport:
    """Per-scheme per-query scores for one dataset, plus optional analyses."""

    dataset: str
    scorer: str
    per_query: dict[PromptScheme, dict[str, float]]
    skipped: dict[PromptScheme, list[str]] = field(default_factory=dict)
    levels: Optional[dict[PromptScheme, dict[int, float]]] = None
    at_table: Optional[dict[AmbiguityKind, tuple[float, Optional[float]]]] = None
    markers: dict[PromptScheme, str] = field(default_factory=dict)
    level_markers: dict[PromptScheme, dict[int, str]] = field(default_factory=dict)

    def mean(self, scheme: PromptScheme) -> float:
        scores = self.per_query[scheme]
        if not scores:
            return math.nan
        return 100.0 * sum(scores.values()) / len(scores)

    @property
    def schemes(self) -> list[PromptScheme]:
        return [s for s in ALL_SCHEMES if s in self.per_query] + [s for s in self.per_query if s not in ALL_SCHEMES]

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "scorer": self.scorer,
            "means": {s.value: self.mean(s) for s in self.schemes},
            "per_query": {s.value: dict(sorted(v.items())) for s, v in self.per_query.items()},
            "skipped": {s.value: sorted(v) for s, v in self.skipped.items()},
            "levels": None if self.levels is None else {
                s.value: {str(k): v for k, v in sorted(lv.items())} for s, lv in self.levels.items()
            },
            "at_table": None if self.at_table is None else {
                k.value: {"frequency": f, "delta": d} for k, (f, d) in self.at_table.items()
            },
            "markers": {s.value: m for s, m in self.markers.items()},
            "level_markers": {s.value: {str(k): m for k, m in sorted(lm.items())}
                              for s, lm in self.level_markers.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CgReport":
        levels = d.get("levels")
        at_table = d.get("at_table")
        return cls(
            dataset=d["dataset"],
            scorer=d["scorer"],
            per_query={PromptScheme.parse(s): v for s, v in d["per_query"].items()},
            skipped={PromptScheme.parse(s): v for s, v in d.get("skipped", {}).items()},
            levels=None if levels is None else {
                PromptScheme.parse(s): {int(k): v for k, v in lv.items()} for s, lv in levels.items()
            },
            at_table=None if at_table is None else {
                AmbiguityKind.parse(k): (v["frequency"], v["delta"]) for k, v in at_table.items()
            },
            markers={PromptScheme.parse(s): m for s, m in d.get("markers", {}).items()},
            level_markers={PromptScheme.parse(s): {int(k): m for k, m in lm.items()}
                           for s, lm in d.get("level_markers", {}).items()},
        )


def evaluate_dataset(
    annotations: Mapping[str, Sequence[str]],
    generations: Mapping[PromptScheme, Mapping[str, Sequence[str]]],
    scorer: SimilarityScorer,
    dataset: str = "dataset",
) -> CgReport:
    """Score every scheme's generations against the annotated questions.

    Queries without generations (or without annotations) are skipped and
    listed in the report rather than counted as zero.
    """
    per_query: dict[PromptScheme, dict[str, float]] = {}
    skipped: dict[PromptScheme, list[str]] = {}
    for scheme, gens in generations.items():
        scheme = PromptScheme.parse(scheme)
        scores, missing = {}, []
        for qid in annotations:
            generated = gens.get(qid) or []
            refs = annotations[qid]
            if not generated or not refs:
                missing.append(qid)
                continue
            scores[qid] = query_score(score_matrix(generated, refs, scorer))
        if missing:
            logger.warning("%s: %d queries skipped for lack of generations", scheme.label, len(missing))
        per_query[scheme] = scores
        skipped[scheme] = missing
    return CgReport(dataset, scorer.identity, per_query, skipped)


def stratify_by_level(per_query: Mapping[str, float], levels: Mapping[str, Optional[int]]) -> dict[int, float]:
    """Mean score (x100) per ambiguity level; queries without a level are left out."""
    buckets: dict[int, list[float]] = {}
    for qid, score in per_query.items():
        level = levels.get(qid)
        if level is None:
            logger.warning("query %s has no ambiguity level; excluded from stratification", qid)
            continue
        if not 1 <= level <= 4:
            raise ValueError(f"query {qid}: ambiguity level {level} outside [1, 4]")
        buckets.setdefault(level, []).append(score)
    return {lvl: 100.0 * sum(v) / len(v) for lvl, v in sorted(buckets.items())}


def at_distribution(
    predictions: Mapping[str, Sequence[AmbiguityKind]],
    at_cot_scores: Mapping[str, float],
    cot_scores: Mapping[str, float],
) -> dict[AmbiguityKind, tuple[float, Optional[float]]]:
    """Share of queries predicted as each type and the AT-CoT minus CoT score gap.

    Returns ``kind -> (frequency %, delta)``; delta is x100 and ``None`` when no
    query with that type has scores under both schemes.
    """
    preds = {qid: {AmbiguityKind.parse(k) for k in kinds} for qid, kinds in predictions.items()}
    n = len(preds)
    table = {}
    for kind in KIND_ORDER:
        members = [qid for qid, kinds in preds.items() if kind in kinds]
        freq = 100.0 * len(members) / n if n else 0.0
        both = [q for q in members if q in at_cot_scores and q in cot_scores]
        if both:
            delta = 100.0 * (sum(at_cot_scores[q] for q in both) - sum(cot_scores[q] for q in both)) / len(both)
        else:
            delta = None
        table[kind] = (freq, delta)
    return table


# --- rendering ------------------------------------------------------------------

def _fmt(x: float) -> str:
    return "-" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.1f}"


def _grid(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    line = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
    sep = "-" * len(line(header))
    return "\n".join([sep, line(header), sep] + [line(r) for r in rows] + [sep])


def render_overall_table(reports: Sequence[CgReport]) -> str:
    """Rows are prompting schemes, columns datasets; cells carry significance markers."""
    schemes = []
    for r in reports:
        schemes += [s for s in r.schemes if s not in schemes]
    header = ["Prompt"] + [r.dataset for r in reports]
    rows = []
    for s in schemes:
        row = [s.label]
        for r in reports:
            row.append(_fmt(r.mean(s)) + r.markers.get(s, "") if s in r.per_query else "-")
        rows.append(row)
    return _grid(header, rows)


def render_level_table(report: CgReport, markers: Optional[dict] = None) -> str:
    if report.levels is None:
        raise ValueError("report carries no level stratification")
    header = [""] + [f"level-{lvl}" for lvl in range(1, 5)]
    rows = []
    for s in report.schemes:
        lv = report.levels.get(s, {})
        m = (report.level_markers if markers is None else markers).get(s, {})
        rows.append([s.label] + [_fmt(lv.get(lvl)) + m.get(lvl, "") if lvl in lv else "-" for lvl in range(1, 5)])
    return _grid(header, rows)


def render_at_table(reports: Sequence[CgReport]) -> str:
    header = [""] + [r.dataset for r in reports]
    rows = []
    for kind in KIND_ORDER:
        row = [kind.value]
        for r in reports:
            if r.at_table is None:
                row.append("-")
                continue
            freq, delta = r.at_table[kind]
            if delta is None:
                row.append(f"{freq:.1f}")
            else:
                arrow = "↑" if delta >= 0 else "↓"
                row.append(f"{freq:.1f} ({arrow} {abs(delta):.1f})")
        rows.append(row)
    return _grid(header, rows)
