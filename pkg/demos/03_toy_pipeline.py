"""
From generated questions to retrieval scores
============================================

The whole evaluation on a six-query toy dataset: score generated questions
against annotations, simulate every conversation type, retrieve with BM25
at each turn, and correlate the two evaluations across schemes.
"""

from pathlib import Path

from atcot.cg_eval import LexicalScorer, evaluate_dataset, render_overall_table
from atcot.core import ALL_SCENARIOS, ALL_SCHEMES, Conversation, Scenario, UserIntent
from atcot.data_io import load_cg, load_corpus, load_ir
from atcot.ir_eval import build_index, evaluate_runs, render_ir_table
from atcot.llm_backend import cached
from atcot.offline import OfflineBackend
from atcot.prompting import OutputSchema, build_generation_prompt, default_few_shots, generate_with_retry
from atcot.simulation import SimulationConfig, simulate_matrix
from atcot.stats import pearson, significance_markers

data = Path(__file__).parent / "data" / "toy"
backend = cached(OfflineBackend())

# %%
# Clarification generation: five questions per query, best pair against the annotations.
cg = load_cg(data / "cg.jsonl", name="toy")
generations = {}
for scheme in ALL_SCHEMES:
    schema = OutputSchema.for_scenario(scheme, Scenario.RESPOND)
    generations[scheme] = {}
    for q in cg.queries:
        conv = Conversation(q, UserIntent("-", q.query_id, "unspecified"), Scenario.RESPOND, scheme)
        bundle = build_generation_prompt(scheme, Scenario.RESPOND, conv, default_few_shots(scheme, Scenario.RESPOND), 5)
        generations[scheme][q.query_id] = generate_with_retry(backend, bundle, schema).texts
cg_report = evaluate_dataset(cg.annotations, generations, LexicalScorer(), "toy")
cg_report.markers = significance_markers(cg_report.per_query)
print(render_overall_table([cg_report]))

# %%
# Eight conversation types per query-intent pair.
ir = load_ir(data / "queries.jsonl", data / "qrels.txt", data / "intents.jsonl", True, data / "corpus.jsonl", "toy")
runs = simulate_matrix(ir.pairs(), ALL_SCHEMES, ALL_SCENARIOS, SimulationConfig(Scenario.SELECT, ALL_SCHEMES[0]),
                       backend, dataset="toy")
print(f"\n{len(runs.records)} conversations, {backend.misses} model calls\n")

# %%
# Retrieval at every turn, against the qrels of the intent's facet.
ir_report = evaluate_runs(runs.records, build_index(load_corpus(data / "corpus.jsonl")), ir.qrels)
print(render_ir_table([("toy", ir_report)]))

# %%
# Do the two evaluations agree? Four schemes give four points.
xs = [cg_report.mean(s) for s in ALL_SCHEMES]
ys = [ir_report.mean((s, Scenario.RESPOND, 1)) for s in ALL_SCHEMES]
res = pearson(xs, ys)
print(f"\nCG vs first-turn respond nDCG@10: r={res.r:.3f}, p={res.p:.3f} (n=4)")
