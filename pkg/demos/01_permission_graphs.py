"""Time-indexed permission graphs: grants, revokes, and snapshots.

Permissions live in two bipartite edge populations - user->agent and
agent->resource - stored as an append-only event log. Any past state can be
re-derived by asking at an earlier tick.
"""

from memfabric import AccessTimeline, PrincipalDirectory, agent, resource, user

# Register the universe first; the timeline rejects unknown principals.
directory = PrincipalDirectory()
for name in ("ana", "bo"):
    directory.add_user(name)
for name in ("search_agent", "math_agent"):
    directory.add_agent(name)
directory.add_resource("docs_kb")

timeline = AccessTimeline(directory)

# Build up history. Ticks are logical and strictly increasing.
timeline.grant((user("ana"), agent("search_agent")), at=1)
timeline.grant((agent("search_agent"), resource("docs_kb")), at=2)
timeline.grant((user("bo"), agent("search_agent")), at=3)
timeline.grant((user("ana"), agent("math_agent")), at=4)
timeline.revoke((user("bo"), agent("search_agent")), at=5)

for t in (0, 3, 4, 5):
    ana = sorted(a.name for a in timeline.agents_of(user("ana"), t))
    bo = sorted(a.name for a in timeline.agents_of(user("bo"), t))
    print(f"t={t}:  ana -> {ana}  |  bo -> {bo}")

# Snapshots are pure reads; the history never changes under you.
print("\nsearch_agent resources at t=2:",
      sorted(r.name for r in timeline.resources_of(agent("search_agent"), 2)))

# The whole history serializes as line-delimited JSON and round-trips.
text = timeline.to_jsonl()
print("\nevent log:")
print(text.strip())
rebuilt = AccessTimeline.from_jsonl(text)
assert rebuilt.events == timeline.events
print("\nround-trip: rebuilt timeline matches the original")
