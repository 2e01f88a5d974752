"""
Simulating a user over three turns
==================================

A simulated user knows an intent the system never sees. In *select* the
user picks one of five reformulated queries; in *respond* the user answers
one clarifying question and the conversation is summarised into a new query.
"""

from atcot.core import PromptScheme, Query, Scenario, UserIntent
from atcot.offline import OfflineBackend
from atcot.simulation import SimulationConfig, simulate_conversation

query = Query("q1", "jaguar")
intent = UserIntent("i1", "q1", "Information about the speed and habitat of the jaguar big cat")
backend = OfflineBackend()

# %%
for scenario in (Scenario.SELECT, Scenario.RESPOND):
    record = simulate_conversation(query, intent, SimulationConfig(scenario, PromptScheme.AT_COT), backend)
    print(f"=== {scenario.value} ({record.provenance['calls']} model calls) ===")
    for turn in record.conversation.turns:
        print(f"turn {turn.index}")
        for c in turn.offered:
            print("   offered:", c.text)
        print("   user:   ", turn.user_reply)
        if turn.reformulated_query:
            print("   query:  ", turn.reformulated_query)
    print("effective queries:", list(record.per_turn_effective_queries))
    print()

# %%
# Records are plain JSON and identical across reruns of the same backend.
again = simulate_conversation(query, intent, SimulationConfig(Scenario.RESPOND, PromptScheme.AT_COT), OfflineBackend())
print("deterministic:", again.to_json() == record.to_json())
