"""
The four prompting schemes
==========================

Each scheme is the same instruction with two optional parts: the ambiguity
type definitions and a request to reason before answering. Here we print
the system text of every scheme and parse a reply from the offline model.
"""

from atcot.core import ALL_SCHEMES, Conversation, Query, Scenario, UserIntent
from atcot.llm_backend import SamplingParams
from atcot.offline import OfflineBackend
from atcot.prompting import OutputSchema, build_generation_prompt, default_few_shots, generate_with_retry

query = Query("demo", "mercury")
intent = UserIntent("i1", "demo", "Facts about the planet Mercury")

# %%
# The system text grows with the scheme: AT variants add the definitions,
# CoT variants ask for reasoning first.
for scheme in ALL_SCHEMES:
    conv = Conversation(query, intent, Scenario.RESPOND, scheme)
    bundle = build_generation_prompt(scheme, Scenario.RESPOND, conv, default_few_shots(scheme, Scenario.RESPOND), 3)
    print(f"--- {scheme.label} ({len(bundle.system)} chars) ---")
    print(bundle.system)
    print()

# %%
# Replies are JSON objects; the parser keeps only the fields a scheme asks for.
backend = OfflineBackend()
for scheme in ALL_SCHEMES:
    conv = Conversation(query, intent, Scenario.RESPOND, scheme)
    bundle = build_generation_prompt(scheme, Scenario.RESPOND, conv, (), 3)
    out = generate_with_retry(backend, bundle, OutputSchema.for_scenario(scheme, Scenario.RESPOND),
                              params=SamplingParams(seed=0))
    types = [k.value for k in out.predicted_types] if out.predicted_types else "-"
    print(f"{scheme.label:12s} types={types} reasoning={'yes' if out.reasoning else 'no'}")
    for text in out.texts:
        print("   ", text)
