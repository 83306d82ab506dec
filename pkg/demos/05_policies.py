"""Scoped read/write policies and content transformers.

Policies bind a transformer to a (scope, direction). Scopes rank
global < time-window < agent < user; resolution takes the most specific
match. The write path maps each exchange through the private and shared
write policies, stamping provenance from the trace itself - transformers
can rewrite content but can never touch provenance.
"""

from memfabric import (
    AccessTimeline,
    DeterministicEmbedder,
    Direction,
    IdentityTransform,
    InteractionTrace,
    MemoryStore,
    PolicyBinding,
    PolicyTable,
    PrincipalDirectory,
    Redactor,
    Scope,
    Tier,
    encode_and_write,
)

directory = PrincipalDirectory()
ana = directory.add_user("ana")
helper = directory.add_agent("helper")
kb = directory.add_resource("kb")
timeline = AccessTimeline(directory)
timeline.grant((ana, helper), 1)
timeline.grant((helper, kb), 2)

# Global defaults plus a stricter read policy for ana specifically.
policies = PolicyTable(
    [
        PolicyBinding(Scope.everywhere(), Direction.READ, IdentityTransform()),
        PolicyBinding(
            Scope.for_user(ana),
            Direction.READ,
            Redactor(((r"[\w.+-]+@[\w.-]+", "[email]"),)),
        ),
        PolicyBinding(Scope.everywhere(), Direction.WRITE_PRIVATE, IdentityTransform()),
        # the shared tier strips whoever wrote it: "{user}" expands per trace
        PolicyBinding(
            Scope.everywhere(),
            Direction.WRITE_SHARED,
            Redactor((("{user}", "[user]"),)),
        ),
    ]
)

chosen = policies.resolve(ana, helper, t=5, direction=Direction.READ)
print("read policy for ana:", type(chosen).__name__)
print("redacted:", chosen.apply("mail ana@example.org for details", {"user": "ana"}))

# Write one exchange through both write policies.
store = MemoryStore(24, directory=directory)
embedder = DeterministicEmbedder(24)
trace = InteractionTrace(
    user=ana,
    agent=helper,
    timestamp=3,
    subquery="travel reimbursement steps",
    response="ana files the T-1 form, then ana attaches receipts.",
    resources_invoked=(kb,),
)
ids = encode_and_write(trace, policies, store, timeline, embedder)
print(f"\nwrote {len(ids)} fragments (one per tier):")
for fid in ids:
    f = store.get(fid)
    print(f"  [{f.tier.value:7s}] value={f.value!r}")
    print(f"            provenance: creator={f.provenance.creator.name}, "
          f"agents={sorted(a.name for a in f.provenance.agents)}, "
          f"resources={sorted(r.name for r in f.provenance.resources)}")

shared = next(store.get(i) for i in ids if store.get(i).tier is Tier.SHARED)
assert "ana" not in shared.value
print("\nshared copy carries no trace of the writing user's name")
