"""Dataset ingestion: clarification datasets, IR topics/intents/qrels, corpora,
and the join between a CG dataset and an IR dataset.

Native formats are JSONL:

* CG queries: ``{"query_id", "query", "clarifying_questions": [...], "ambiguity_level"?}``
  (annotations may also come from a separate file of ``{"query_id", "clarifying_question(s)"}``)
* IR queries: ``{"query_id", "query"}``
* intents: ``{"query_id", "intents": [{"intent_id", "description"}]}``
* corpus: ``{"doc_id", "text"}``

Qrels are whitespace-separated ``qid facet_or_iter docid grade`` lines.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Optional, Union

from .core import Query, UserIntent
from .ir_eval import Qrels

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_INTENT_CHARS = 2000


class IngestionError(ValueError):
    pass


def read_jsonl(path: PathLike) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None


def sha256_file(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class CgDataset:
    name: str
    queries: tuple[Query, ...]
    annotations: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        ids = {q.query_id for q in self.queries}
        unknown = sorted(set(self.annotations) - ids)
        if unknown:
            raise IngestionError(f"annotations reference unknown query ids: {unknown}")
        empty = sorted(q for q, cqs in self.annotations.items() if not cqs)
        if empty:
            raise IngestionError(f"queries with an empty annotation list: {empty}")

    @property
    def n_queries(self) -> int:
        return len(self.queries)

    @property
    def n_cqs(self) -> int:
        return sum(len(v) for v in self.annotations.values())

    @property
    def levels(self) -> dict[str, Optional[int]]:
        return {q.query_id: q.ambiguity_level for q in self.queries}

    def query(self, query_id: str) -> Query:
        return next(q for q in self.queries if q.query_id == query_id)


def _as_list(value) -> list[str]:
    if value is None:
        return []
    if isinstance(value, str):
        return [value]
    return list(value)


def load_cg(path: PathLike, fmt: str = "jsonl", name: Optional[str] = None,
            annotations_path: Optional[PathLike] = None) -> CgDataset:
    """Load a clarification dataset.

    ``fmt`` is ``"jsonl"`` (native), ``"clariq"`` (ClariQ TSV) or ``"qulac"``
    (Qulac JSON). Duplicate annotated questions for a query are kept.
    """
    if fmt == "clariq":
        records = list(convert_clariq(path))
    elif fmt == "qulac":
        records = list(convert_qulac(path))
    elif fmt == "jsonl":
        records = [rec for _, rec in read_jsonl(path)]
    else:
        raise IngestionError(f"unknown CG format {fmt!r}")

    queries, annotations, seen = [], {}, set()
    for n, rec in enumerate(records, 1):
        if "query_id" not in rec or "query" not in rec:
            raise IngestionError(f"{path}: record {n} needs query_id and query")
        qid = str(rec["query_id"])
        if qid in seen:
            raise IngestionError(f"duplicate query id {qid!r}")
        seen.add(qid)
        try:
            queries.append(Query(qid, rec["query"], rec.get("ambiguity_level")))
        except ValueError as exc:
            raise IngestionError(str(exc)) from None
        cqs = _as_list(rec.get("clarifying_questions"))
        if cqs:
            annotations[qid] = list(cqs)
    if annotations_path is not None:
        for lineno, rec in read_jsonl(annotations_path):
            qid = str(rec["query_id"])
            cqs = _as_list(rec.get("clarifying_questions", rec.get("clarifying_question")))
            annotations.setdefault(qid, []).extend(cqs)
    dataset = CgDataset(
        name or Path(path).stem,
        tuple(queries),
        {q: tuple(v) for q, v in annotations.items()},
    )
    logger.info("loaded %s: %d queries, %d clarifying questions", dataset.name, dataset.n_queries, dataset.n_cqs)
    return dataset


def parse_qrels(lines, facets: bool = False, source: str = "<qrels>") -> Qrels:
    """Parse ``qid facet_or_iter docid grade`` lines.

    Without ``facets`` the second column is ignored and every judgment lands
    under facet ``"0"``. Negative grades are clamped to 0.
    """
    qrels = Qrels()
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise IngestionError(f"{source}:{lineno}: expected 4 columns, got {len(parts)}")
        qid, col2, doc, grade = parts
        try:
            g = int(grade)
        except ValueError:
            raise IngestionError(f"{source}:{lineno}: grade {grade!r} is not an integer") from None
        try:
            qrels.add(qid, col2 if facets else "0", doc, g)
        except ValueError as exc:
            raise IngestionError(f"{source}:{lineno}: {exc}") from None
    return qrels


def load_qrels(path: PathLike, facets: bool = False) -> Qrels:
    with open(path, encoding="utf-8") as fh:
        return parse_qrels(fh, facets, str(path))


def load_corpus(path: PathLike) -> dict[str, str]:
    docs = {}
    for lineno, rec in read_jsonl(path):
        if "doc_id" not in rec or "text" not in rec:
            raise IngestionError(f"{path}:{lineno}: corpus records need doc_id and text")
        doc_id = str(rec["doc_id"])
        if doc_id in docs:
            raise IngestionError(f"{path}:{lineno}: duplicate doc_id {doc_id!r}")
        docs[doc_id] = rec["text"]
    return docs


@dataclass(frozen=True)
class IrDataset:
    name: str
    queries: tuple[Query, ...]
    intents: tuple[UserIntent, ...]
    qrels: Qrels
    corpus_ref: Optional[str] = None
    facets: bool = True

    def __post_init__(self):
        ids = {q.query_id for q in self.queries}
        bad = sorted({i.query_id for i in self.intents} - ids)
        if bad:
            raise IngestionError(f"intents reference unknown query ids: {bad}")
        bad = sorted(self.qrels.query_ids() - ids)
        if bad:
            raise IngestionError(f"qrels reference unknown query ids: {bad}")

    def pairs(self) -> list[tuple[Query, UserIntent]]:
        by_id = {q.query_id: q for q in self.queries}
        return [(by_id[i.query_id], i) for i in self.intents]


def load_ir(
    queries_path: PathLike,
    qrels_path: PathLike,
    intents_path: Optional[PathLike] = None,
    facets: bool = True,
    corpus_path: Optional[PathLike] = None,
    name: Optional[str] = None,
    intent_chars: int = DEFAULT_INTENT_CHARS,
) -> IrDataset:
    """Load an IR dataset.

    Without ``intents_path`` every positively judged document becomes an
    intent (description = its text truncated to ``intent_chars``) and the
    only relevant document for that conversation; this needs ``corpus_path``.
    """
    queries = []
    for lineno, rec in read_jsonl(queries_path):
        try:
            queries.append(Query(str(rec["query_id"]), rec.get("query", rec.get("text")), rec.get("ambiguity_level")))
        except (KeyError, ValueError) as exc:
            raise IngestionError(f"{queries_path}:{lineno}: {exc}") from None
    qrels = load_qrels(qrels_path, facets)
    intents = []
    if intents_path is not None:
        for lineno, rec in read_jsonl(intents_path):
            qid = str(rec["query_id"])
            for it in rec["intents"]:
                intents.append(UserIntent(str(it["intent_id"]), qid, it["description"]))
    else:
        if corpus_path is None:
            raise IngestionError("document-as-intent datasets need a corpus to describe intents")
        corpus = load_corpus(corpus_path)
        per_doc = Qrels()
        for qid, _, doc, grade in qrels.entries():
            if grade <= 0:
                continue
            if doc not in corpus:
                logger.warning("judged document %s missing from corpus; skipped", doc)
                continue
            intents.append(UserIntent(doc, qid, corpus[doc][:intent_chars]))
            per_doc.add(qid, doc, doc, 1)
        qrels, facets = per_doc, True
    return IrDataset(
        name or Path(queries_path).stem,
        tuple(queries),
        tuple(intents),
        qrels,
        None if corpus_path is None else str(corpus_path),
        facets,
    )


@dataclass(frozen=True)
class AlignedDataset:
    cg: CgDataset
    ir: IrDataset
    join: Mapping[str, str]
    unmatched_cg: tuple[str, ...] = ()
    unmatched_ir: tuple[str, ...] = ()

    def __len__(self):
        return len(self.join)


def load_mapping(path: PathLike) -> dict[str, str]:
    """Two-column (whitespace or TSV) file: ``cg_query_id ir_query_id``."""
    mapping = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) != 2:
                raise IngestionError(f"{path}:{lineno}: expected two ids")
            mapping[parts[0]] = parts[1]
    return mapping


def align(cg: CgDataset, ir: IrDataset, mapping: Union[None, PathLike, Mapping[str, str]] = None) -> AlignedDataset:
    """Join CG and IR queries by id (identity when ``mapping`` is None).

    Unmatched ids are reported, not fatal. A mapping sending two CG ids to the
    same IR id is rejected.
    """
    cg_ids = [q.query_id for q in cg.queries]
    ir_ids = {q.query_id for q in ir.queries}
    if mapping is None:
        mapping = {q: q for q in cg_ids}
    elif not isinstance(mapping, Mapping):
        mapping = load_mapping(mapping)
    targets = {}
    for src, dst in mapping.items():
        if dst in targets:
            raise IngestionError(f"mapping is not injective: {targets[dst]!r} and {src!r} both map to {dst!r}")
        targets[dst] = src
    join = {q: mapping[q] for q in cg_ids if q in mapping and mapping[q] in ir_ids}
    unmatched_cg = tuple(q for q in cg_ids if q not in join)
    unmatched_ir = tuple(sorted(ir_ids - set(join.values())))
    if unmatched_cg or unmatched_ir:
        logger.warning("alignment left %d CG and %d IR queries unmatched", len(unmatched_cg), len(unmatched_ir))
    return AlignedDataset(cg, ir, join, unmatched_cg, unmatched_ir)


def dataset_manifest(name: str, paths: Mapping[str, PathLike]) -> dict:
    return {
        "name": name,
        "files": {role: {"path": str(p), "sha256": sha256_file(p)} for role, p in sorted(paths.items())},
    }


# --- converters from publisher layouts ----------------------------------------------

def convert_clariq(path: PathLike) -> Iterator[dict]:
    """ClariQ TSV (``topic_id, initial_request, clarification_need, question`` columns)
    to native records, one per topic. Rows without a question are ignored."""
    by_topic: dict[str, dict] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh, delimiter="\t"):
            qid = str(row["topic_id"])
            rec = by_topic.setdefault(qid, {
                "query_id": qid,
                "query": row["initial_request"],
                "clarifying_questions": [],
            })
            need = (row.get("clarification_need") or "").strip()
            if need and "ambiguity_level" not in rec:
                rec["ambiguity_level"] = int(float(need))
            question = (row.get("question") or "").strip()
            if question and question.lower() != "nan":
                rec["clarifying_questions"].append(question)
    yield from by_topic.values()


def convert_qulac(path: PathLike) -> Iterator[dict]:
    """Qulac JSON (column-oriented: ``{"topic_id": {row: id}, "topic": {...}, "question": {...}}``)
    to native records, one per topic, questions in row order."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    by_topic: dict[str, dict] = {}
    rows = sorted(data["topic_id"], key=lambda r: int(r) if str(r).isdigit() else r)
    for row in rows:
        qid = str(data["topic_id"][row])
        rec = by_topic.setdefault(qid, {"query_id": qid, "query": data["topic"][row], "clarifying_questions": []})
        rec["clarifying_questions"].append(data["question"][row])
    yield from by_topic.values()


def convert_raocq(path: PathLike, ids_path: PathLike) -> Iterator[dict]:
    """Tab-separated ``post_id  question  clarifying_question`` rows, restricted to
    the post ids listed (one per line) in ``ids_path``."""
    keep = {line.strip() for line in Path(ids_path).read_text(encoding="utf-8").splitlines() if line.strip()}
    by_id: dict[str, dict] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for parts in csv.reader(fh, delimiter="\t"):
            if len(parts) < 3 or parts[0] not in keep:
                continue
            rec = by_id.setdefault(parts[0], {"query_id": parts[0], "query": parts[1], "clarifying_questions": []})
            rec["clarifying_questions"].append(parts[2])
    missing = keep - set(by_id)
    if missing:
        logger.warning("%d listed ids not found in %s", len(missing), path)
    yield from by_id.values()


def write_jsonl(records, path: PathLike) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    return n
