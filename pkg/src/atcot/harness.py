"""Command-line harness: configuration, run directories and report rendering.

Subcommands: ``run-cg``, ``simulate``, ``eval-ir``, ``align``, ``report``,
``convert``. Exit codes: 0 success, 1 validation, 2 runtime, 3 backend
exhaustion.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml
from filelock import FileLock, Timeout

from . import data_io
from .cg_eval import (
    CgReport,
    EmbeddingScorer,
    LexicalScorer,
    at_distribution,
    evaluate_dataset,
    render_at_table,
    render_level_table,
    render_overall_table,
    stratify_by_level,
)
from .core import ALL_SCHEMES, ALL_SCENARIOS, Conversation, PromptScheme, Scenario, UserIntent
from .ir_eval import EmbeddingReranker, IdentityReranker, IrReport, build_index, evaluate_runs, render_ir_table, write_trec_run
from .llm_backend import (
    CachedBackend,
    EmbeddingClient,
    EndpointConfig,
    FileStore,
    HttpChatBackend,
    SamplingParams,
    ScriptedBackend,
)
from .offline import OfflineBackend
from .prompting import (
    OutputSchema,
    RetryExhaustedError,
    build_generation_prompt,
    default_few_shots,
    extract_predicted_types,
    generate_with_retry,
    load_few_shots,
)
from .simulation import RunStore, SimulationConfig, simulate_matrix
from .stats import pearson, significance_markers

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_EXHAUSTED = 0, 1, 2, 3


class ValidationError(ValueError):
    pass


class ExhaustionError(RuntimeError):
    pass


@dataclass
class RunConfig:
    dataset: str
    datasets: dict
    schemes: list[PromptScheme] = field(default_factory=lambda: list(ALL_SCHEMES))
    scenarios: list[Scenario] = field(default_factory=lambda: list(ALL_SCENARIOS))
    sampling: SamplingParams = field(default_factory=SamplingParams)
    max_turns: int = 3
    n_outputs: Optional[int] = None
    max_retries: int = 10
    generation_calls: str = "single"
    parallelism: int = 1
    cg_n_outputs: int = 5
    scorer: str = "lexical"
    reranker: str = "identity"
    metric: Optional[str] = None
    t_test: str = "paired"
    backend: dict = field(default_factory=lambda: {"type": "offline"})
    embedding: dict = field(default_factory=dict)
    few_shots: Optional[str] = None
    cache: Optional[str] = None
    out: str = "runs"
    seed: int = 0
    base_dir: Path = Path(".")

    @property
    def ds(self) -> dict:
        return self.datasets[self.dataset]

    @property
    def out_dir(self) -> Path:
        return self._path(self.out)

    def _path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def path(self, section: str, key: str) -> Optional[Path]:
        value = self.ds.get(section, {}).get(key)
        return None if value is None else self._path(value)

    def canonical(self) -> dict:
        return {
            "dataset": self.dataset,
            "datasets": self.datasets,
            "schemes": [s.value for s in self.schemes],
            "scenarios": [s.value for s in self.scenarios],
            "sampling": self.sampling.to_dict(),
            "max_turns": self.max_turns,
            "n_outputs": self.n_outputs,
            "max_retries": self.max_retries,
            "generation_calls": self.generation_calls,
            "cg_n_outputs": self.cg_n_outputs,
            "scorer": self.scorer,
            "reranker": self.reranker,
            "metric": self.metric,
            "t_test": self.t_test,
            "backend": {k: v for k, v in self.backend.items() if k != "api_key"},
            "embedding": {k: v for k, v in self.embedding.items() if k != "api_key"},
            "few_shots": self.few_shots,
            "seed": self.seed,
        }

    @property
    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path, overrides: Optional[dict] = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    raw = dict(raw or {})
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    datasets = raw.get("datasets") or {}
    if "dataset" in raw and isinstance(raw["dataset"], dict):
        datasets = {raw["dataset"].get("name", "default"): raw["dataset"]}
        raw["dataset"] = next(iter(datasets))
    if not datasets:
        raise ValidationError("config defines no datasets")
    name = raw.get("dataset") or (next(iter(datasets)) if len(datasets) == 1 else None)
    if name not in datasets:
        raise ValidationError(f"dataset {name!r} not in config (have {sorted(datasets)})")
    sim = raw.get("simulation", {})
    try:
        cfg = RunConfig(
            dataset=name,
            datasets=datasets,
            schemes=[PromptScheme.parse(s) for s in _listify(raw.get("schemes", [s.value for s in ALL_SCHEMES]))],
            scenarios=[Scenario.parse(s) for s in _listify(raw.get("scenarios", [s.value for s in ALL_SCENARIOS]))],
            sampling=SamplingParams(**{**raw.get("sampling", {}), "seed": raw.get("seed", 0)}),
            max_turns=int(raw.get("turns", sim.get("max_turns", 3))),
            n_outputs=raw.get("n_outputs", sim.get("n_outputs")),
            max_retries=int(sim.get("max_retries", 10)),
            generation_calls=sim.get("generation_calls", "single"),
            parallelism=int(sim.get("parallelism", 1)),
            cg_n_outputs=int(raw.get("cg", {}).get("n_outputs", raw.get("n_outputs") or 5)),
            scorer=raw.get("scorer", "lexical"),
            reranker=raw.get("reranker", "identity"),
            metric=raw.get("metric"),
            t_test=raw.get("t_test", "paired"),
            backend=dict(raw.get("backend", {"type": "offline"})),
            embedding=dict(raw.get("embedding", {})),
            few_shots=raw.get("few_shots"),
            cache=raw.get("cache"),
            out=raw.get("out", "runs"),
            seed=int(raw.get("seed", 0)),
            base_dir=path.parent.resolve(),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid config: {exc}") from None
    if cfg.scorer not in ("lexical", "embedding"):
        raise ValidationError(f"unknown scorer {cfg.scorer!r}")
    if cfg.t_test not in ("paired", "welch"):
        raise ValidationError(f"unknown t_test {cfg.t_test!r}")
    if cfg.reranker not in ("identity", "service"):
        raise ValidationError(f"unknown reranker {cfg.reranker!r}")
    return cfg


def _listify(v):
    return [x.strip() for x in v.split(",") if x.strip()] if isinstance(v, str) else list(v)


def _require(cfg: RunConfig, section: str, *keys: str) -> list[Path]:
    paths = []
    for key in keys:
        p = cfg.path(section, key)
        if p is None:
            raise ValidationError(f"dataset {cfg.dataset!r} has no {section}.{key}")
        if not p.exists():
            raise ValidationError(f"missing file for {section}.{key}: {p}")
        paths.append(p)
    return paths


def make_backend(cfg: RunConfig):
    kind = cfg.backend.get("type", "offline")
    if kind == "offline":
        inner = OfflineBackend()
    elif kind == "scripted":
        script = json.loads(cfg._path(cfg.backend["script"]).read_text(encoding="utf-8"))
        inner = ScriptedBackend(script)
    elif kind == "http":
        inner = HttpChatBackend(EndpointConfig.from_env(
            "chat", url=cfg.backend.get("url"), model=cfg.backend.get("model"),
            timeout=cfg.backend.get("timeout"), max_retries=cfg.backend.get("max_retries"),
        ))
    else:
        raise ValidationError(f"unknown backend type {kind!r}")
    cache_path = cfg._path(cfg.cache) if cfg.cache else cfg.out_dir / "cache.jsonl"
    return CachedBackend(inner, FileStore(cache_path))


def make_embedder(cfg: RunConfig) -> EmbeddingClient:
    return EmbeddingClient(EndpointConfig.from_env("embedding", url=cfg.embedding.get("url"),
                                                   model=cfg.embedding.get("model")))


def _few_shots(cfg: RunConfig):
    return None if cfg.few_shots is None else load_few_shots(cfg._path(cfg.few_shots))


def _write_json(path: Path, obj: dict, cfg: RunConfig) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"config_sha256": cfg.digest, **obj}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=True) + "\n",
                    encoding="utf-8")
    return path


def _write_scores(path: Path, report: CgReport, cfg: RunConfig) -> Path:
    """One line per (scheme, query) score, for downstream analysis."""
    with path.open("w", encoding="utf-8") as fh:
        for scheme in report.schemes:
            for qid, score in sorted(report.per_query[scheme].items()):
                fh.write(json.dumps({"config_sha256": cfg.digest, "dataset": report.dataset, "scheme": scheme.value,
                                     "query_id": qid, "score": score}, sort_keys=True) + "\n")
    return path


def _write_text(path: Path, text: str, cfg: RunConfig) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(f"# config_sha256: {cfg.digest}\n{text}\n", encoding="utf-8")
    return path


# --- run-cg ---------------------------------------------------------------------------

def cmd_run_cg(cfg: RunConfig, backend=None, scorer=None) -> dict[str, Path]:
    """Generate clarifying questions for every query and scheme, score and tabulate."""
    ds_cfg = cfg.ds.get("cg")
    if not ds_cfg:
        raise ValidationError(f"dataset {cfg.dataset!r} has no cg section")
    (cg_path,) = _require(cfg, "cg", "path")
    ann = cfg.path("cg", "annotations")
    if ds_cfg.get("annotations") is not None and not ann.exists():
        raise ValidationError(f"missing annotations file: {ann}")
    dataset = data_io.load_cg(cg_path, ds_cfg.get("format", "jsonl"), cfg.dataset, ann)
    backend = backend or make_backend(cfg)
    scorer = scorer or (LexicalScorer() if cfg.scorer == "lexical" else EmbeddingScorer(make_embedder(cfg)))
    shots = _few_shots(cfg)

    generations: dict[PromptScheme, dict[str, list[str]]] = {}
    outputs: dict[PromptScheme, dict[str, dict]] = {}
    exhausted = []
    for scheme in cfg.schemes:
        schema = OutputSchema.for_scenario(scheme, Scenario.RESPOND)
        few = shots[(Scenario.RESPOND, scheme)] if shots else default_few_shots(scheme, Scenario.RESPOND)
        generations[scheme], outputs[scheme] = {}, {}
        for q in dataset.queries:
            conv = Conversation(q, UserIntent("-", q.query_id, "unspecified"), Scenario.RESPOND, scheme)
            n = cfg.cg_n_outputs if cfg.generation_calls == "single" else 1
            bundle = build_generation_prompt(scheme, Scenario.RESPOND, conv, few, n)
            try:
                if cfg.generation_calls == "single":
                    outs = [generate_with_retry(backend, bundle, schema, cfg.max_retries, cfg.sampling)]
                else:
                    outs = [generate_with_retry(backend, bundle, schema, cfg.max_retries,
                                                SamplingParams(**{**cfg.sampling.to_dict(), "seed": cfg.seed + i}))
                            for i in range(cfg.cg_n_outputs)]
            except RetryExhaustedError as exc:
                exhausted.append((scheme.value, q.query_id))
                outputs[scheme][q.query_id] = {"error": str(exc), "attempts": exc.attempts}
                continue
            generations[scheme][q.query_id] = [t for o in outs for t in o.texts]
            reasoning = " ".join(o.reasoning or "" for o in outs)
            types = sorted({k.value for o in outs for k in (o.predicted_types or ())})
            outputs[scheme][q.query_id] = {
                "clarifications": generations[scheme][q.query_id],
                "reasoning": reasoning or None,
                "predicted_types": types or None,
                "shortfall": max(0, cfg.cg_n_outputs - len(generations[scheme][q.query_id])),
            }

    report = evaluate_dataset(dataset.annotations, generations, scorer, cfg.dataset)
    _annotate_cg(report, dataset, outputs, cfg.t_test)
    out = cfg.out_dir / "cg"
    paths = {
        "generations": _write_json(out / f"{cfg.dataset}.generations.json",
                                   {"outputs": {s.value: v for s, v in outputs.items()}}, cfg),
        "report": _write_json(out / f"{cfg.dataset}.report.json", report.to_dict(), cfg),
        "scores": _write_scores(out / f"{cfg.dataset}.scores.jsonl", report, cfg),
    }
    paths["tables"] = _write_text(out / f"{cfg.dataset}.tables.txt", render_cg_tables(report), cfg)
    if exhausted:
        raise ExhaustionError(f"{len(exhausted)} generations exhausted their retries: {exhausted[:5]}")
    return paths


def _annotate_cg(report: CgReport, dataset, outputs, t_test: str = "paired") -> None:
    """Fill in significance markers, level stratification and the AT table."""
    common = set.intersection(*(set(v) for v in report.per_query.values())) if report.per_query else set()
    if len(common) >= 2:
        report.markers = significance_markers({s: {q: v[q] for q in common} for s, v in report.per_query.items()},
                                              test=t_test)
    levels = dataset.levels
    if any(lv is not None for lv in levels.values()):
        report.levels = {s: stratify_by_level(v, levels) for s, v in report.per_query.items()}
        for lvl in sorted({lv for lv in levels.values() if lv is not None}):
            units = {q for q in common if levels.get(q) == lvl}
            if len(units) < 2:
                continue
            block = {s: {q: v[q] for q in units} for s, v in report.per_query.items()}
            for s, m in significance_markers(block, test=t_test).items():
                if m:
                    report.level_markers.setdefault(s, {})[lvl] = m
    if PromptScheme.AT_COT in report.per_query and PromptScheme.COT in report.per_query:
        preds = {}
        for qid, out in outputs[PromptScheme.AT_COT].items():
            if "error" in out:
                continue
            preds[qid] = out["predicted_types"] or [k.value for k in extract_predicted_types(out["reasoning"] or "")]
        report.at_table = at_distribution(preds, report.per_query[PromptScheme.AT_COT],
                                          report.per_query[PromptScheme.COT])


def render_cg_tables(report: CgReport) -> str:
    parts = ["Overall clarification-generation scores", render_overall_table([report])]
    if report.levels is not None:
        parts += ["", "Scores by ambiguity level", render_level_table(report)]
    if report.at_table is not None:
        parts += ["", "Predicted ambiguity types: frequency % (AT-CoT minus CoT)", render_at_table([report])]
    return "\n".join(parts)


# --- simulate / eval-ir ----------------------------------------------------------------

def _load_ir(cfg: RunConfig) -> data_io.IrDataset:
    ir = cfg.ds.get("ir")
    if not ir:
        raise ValidationError(f"dataset {cfg.dataset!r} has no ir section")
    queries, qrels = _require(cfg, "ir", "queries", "qrels")
    intents = _require(cfg, "ir", "intents")[0] if ir.get("intents") else None
    corpus = _require(cfg, "ir", "corpus")[0] if ir.get("corpus") else None
    return data_io.load_ir(queries, qrels, intents, bool(ir.get("facets", True)), corpus, cfg.dataset,
                           int(ir.get("intent_chars", data_io.DEFAULT_INTENT_CHARS)))


def cmd_simulate(cfg: RunConfig, backend=None, resume: bool = True):
    ds = _load_ir(cfg)
    backend = backend or make_backend(cfg)
    base = SimulationConfig(
        scenario=cfg.scenarios[0], scheme=cfg.schemes[0], max_turns=cfg.max_turns,
        n_outputs=cfg.n_outputs, sampling=cfg.sampling, max_retries=cfg.max_retries,
        generation_calls=cfg.generation_calls,
    )
    stamp = {"config_sha256": cfg.digest}
    store = RunStore(cfg.out_dir / "runs", tag=stamp)
    result = simulate_matrix(ds.pairs(), cfg.schemes, cfg.scenarios, base, backend, store, cfg.dataset,
                             cfg.parallelism, _few_shots(cfg), resume=resume, extra_provenance=stamp)
    _write_json(cfg.out_dir / "runs" / f"{cfg.dataset}.summary.json", {
        "records": len(result.records),
        "resumed": result.skipped,
        "failures": result.failures,
    }, cfg)
    if result.failures:
        raise ExhaustionError(f"{len(result.failures)} conversations failed")
    return result


def cmd_eval_ir(cfg: RunConfig, reranker=None) -> dict[str, Path]:
    ds = _load_ir(cfg)
    if ds.corpus_ref is None:
        raise ValidationError("eval-ir needs ir.corpus")
    store_dir = cfg.out_dir / "runs"
    if not store_dir.exists():
        raise ValidationError(f"no run records under {store_dir}; run simulate first")
    records = [r for r in RunStore(store_dir).records() if r.dataset == cfg.dataset and r.ok]
    if not records:
        raise ValidationError(f"no completed run records for dataset {cfg.dataset!r}")
    index = build_index(data_io.load_corpus(ds.corpus_ref))
    if reranker is None:
        reranker = IdentityReranker() if cfg.reranker == "identity" else EmbeddingReranker(make_embedder(cfg))
    metric = cfg.metric or ("ndcg" if ds.facets and cfg.ds["ir"].get("intents") else "mrr")
    report = evaluate_runs(records, index, ds.qrels, reranker, metric, facet_from_intent=ds.facets, t_test=cfg.t_test)
    out = cfg.out_dir / "ir"
    paths = {"report": _write_json(out / f"{cfg.dataset}.report.json", report.to_dict(), cfg)}
    paths["tables"] = _write_text(out / f"{cfg.dataset}.tables.txt", render_ir_table([(cfg.dataset, report)]), cfg)
    from .ir_eval import retrieve_rerank

    runs = {}
    for rec in records:
        for t, q in enumerate(rec.per_turn_effective_queries):
            runs[f"{rec.key.replace('/', '.')}.t{t}"] = retrieve_rerank(index, q, reranker, 100)
    paths["run"] = out / f"{cfg.dataset}.run.trec"
    with paths["run"].open("w", encoding="utf-8") as fh:
        write_trec_run(runs, f"atcot-{cfg.dataset}-{cfg.digest[:12]}", fh)
    return paths


# --- align / report ------------------------------------------------------------------------

def cmd_align(cfg: RunConfig) -> Path:
    """Correlate CG means with first-turn *respond* IR means across the four schemes."""
    cg_name = cfg.ds.get("align", {}).get("cg", cfg.dataset)
    ir_name = cfg.ds.get("align", {}).get("ir", cfg.dataset)
    cg_path = cfg.out_dir / "cg" / f"{cg_name}.report.json"
    ir_path = cfg.out_dir / "ir" / f"{ir_name}.report.json"
    for p in (cg_path, ir_path):
        if not p.exists():
            raise ValidationError(f"missing report {p}")
    cg = CgReport.from_dict(json.loads(cg_path.read_text(encoding="utf-8")))
    ir = IrReport.from_dict(json.loads(ir_path.read_text(encoding="utf-8")))
    result = align_reports(cg, ir)
    return _write_json(cfg.out_dir / "align" / f"{cfg.dataset}.align.json", result, cfg)


def align_reports(cg: CgReport, ir: IrReport) -> dict:
    pairs = []
    for scheme in ALL_SCHEMES:
        cell = (scheme, Scenario.RESPOND, 1)
        if scheme not in cg.per_query or cell not in ir.per_conversation:
            raise ValidationError(f"alignment needs all four schemes; {scheme.label} is missing")
        pairs.append((scheme, cg.mean(scheme), ir.mean(cell)))
    res = pearson([p[1] for p in pairs], [p[2] for p in pairs])
    return {
        "pairs": [{"scheme": s.value, "cg": c, "ir": i} for s, c, i in pairs],
        "r": res.r,
        "p": res.p,
        "degenerate": res.degenerate,
    }


def cmd_report(cfg: RunConfig) -> list[Path]:
    written = []
    cg_path = cfg.out_dir / "cg" / f"{cfg.dataset}.report.json"
    if cg_path.exists():
        report = CgReport.from_dict(json.loads(cg_path.read_text(encoding="utf-8")))
        written.append(_write_text(cfg.out_dir / "cg" / f"{cfg.dataset}.tables.txt", render_cg_tables(report), cfg))
    ir_path = cfg.out_dir / "ir" / f"{cfg.dataset}.report.json"
    if ir_path.exists():
        report = IrReport.from_dict(json.loads(ir_path.read_text(encoding="utf-8")))
        written.append(_write_text(cfg.out_dir / "ir" / f"{cfg.dataset}.tables.txt",
                                   render_ir_table([(cfg.dataset, report)]), cfg))
    if not written:
        raise ValidationError("nothing to render: no cg or ir report in the run directory")
    return written


def cmd_convert(fmt: str, source: Path, dest: Path, ids: Optional[Path] = None) -> int:
    if fmt == "clariq":
        records = data_io.convert_clariq(source)
    elif fmt == "qulac":
        records = data_io.convert_qulac(source)
    elif fmt == "raocq":
        if ids is None:
            raise ValidationError("raocq conversion needs --ids")
        records = data_io.convert_raocq(source, ids)
    else:
        raise ValidationError(f"unknown converter {fmt!r}")
    return data_io.write_jsonl(records, dest)


# --- CLI --------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atcot", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run-cg", "simulate", "eval-ir", "align", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--dataset")
        p.add_argument("--schemes", help="comma-separated, e.g. standard,at_cot")
        p.add_argument("--scenarios", help="comma-separated: select,respond")
        p.add_argument("--turns", type=int)
        p.add_argument("--n-outputs", type=int)
        p.add_argument("--scorer", choices=("lexical", "embedding"))
        p.add_argument("--reranker", choices=("identity", "service"))
        p.add_argument("--resume", action="store_true")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
    p = sub.add_parser("convert")
    p.add_argument("--config", type=Path)
    p.add_argument("--format", required=True, choices=("clariq", "qulac", "raocq"))
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--output", required=True, type=Path)
    p.add_argument("--ids", type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "convert":
            n = cmd_convert(args.format, args.input, args.output, args.ids)
            print(f"wrote {n} records to {args.output}")
            return EXIT_OK
        overrides = {
            "dataset": args.dataset, "schemes": args.schemes, "scenarios": args.scenarios,
            "turns": args.turns, "n_outputs": args.n_outputs, "scorer": args.scorer,
            "reranker": args.reranker, "seed": args.seed, "out": args.out,
        }
        cfg = load_config(args.config, overrides)
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        with FileLock(str(cfg.out_dir / ".lock"), timeout=0):
            if args.command == "run-cg":
                result = cmd_run_cg(cfg)
            elif args.command == "simulate":
                result = cmd_simulate(cfg, resume=args.resume)
            elif args.command == "eval-ir":
                result = cmd_eval_ir(cfg)
            elif args.command == "align":
                result = cmd_align(cfg)
            else:
                result = cmd_report(cfg)
        _print_result(result)
        return EXIT_OK
    except Timeout:
        print("error: run directory is locked by another process", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValidationError, data_io.IngestionError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ExhaustionError, RetryExhaustedError) as exc:
        print(f"backend exhaustion: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED
    except Exception as exc:  # noqa: BLE001
        logger.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _print_result(result) -> None:
    if isinstance(result, dict):
        for k, v in result.items():
            print(f"{k}: {v}")
    elif isinstance(result, list):
        for v in result:
            print(v)
    elif isinstance(result, Path):
        print(result)
    elif result is not None:
        print(f"records: {len(result.records)} (resumed {result.skipped}, failed {len(result.failures)})")


if __name__ == "__main__":
    sys.exit(main())
