"""The two-tier fragment store and the admissibility rule.

Every fragment carries immutable provenance: creation tick, creating user,
contributing agents, touched resources. A reader (user u, agent a, tick t)
may see a fragment only when

    1. tier ownership:   private fragments require creator == u,
    2. agent subset:     contributing agents all lie in u's agents at t,
    3. resource subset:  touched resources all lie in a's resources at t.

Because the check uses the *read-time* snapshot, revoking an edge
retroactively hides fragments - nothing is deleted, it just stops being
admissible.
"""

from memfabric import (
    AccessTimeline,
    DeterministicEmbedder,
    MemoryFragment,
    MemoryStore,
    PrincipalDirectory,
    Provenance,
    Tier,
)

directory = PrincipalDirectory()
ana, bo = directory.add_user("ana"), directory.add_user("bo")
chem = directory.add_agent("chem_agent")
kb = directory.add_resource("chem_kb")

timeline = AccessTimeline(directory)
timeline.grant((ana, chem), 1)
timeline.grant((bo, chem), 2)
timeline.grant((chem, kb), 3)

embedder = DeterministicEmbedder(dimension=24)
store = MemoryStore(dimension=24, directory=directory)

store.insert(
    MemoryFragment(
        id="frag-shared",
        tier=Tier.SHARED,
        key="solvent safety",
        value="Store acetone away from oxidizers.",
        embedding=embedder.embed("solvent safety"),
        provenance=Provenance(4, ana, frozenset({chem}), frozenset({kb})),
    )
)
store.insert(
    MemoryFragment(
        id="frag-private",
        tier=Tier.PRIVATE,
        key="my lab notes",
        value="Ana's private bench notes.",
        embedding=embedder.embed("my lab notes"),
        provenance=Provenance(5, ana, frozenset({chem})),
    )
)

print("ana sees:", sorted(store.admissible(timeline, ana, chem, 6)))
print("bo sees:", sorted(store.admissible(timeline, bo, chem, 6)))

# explain() names the first violated clause, in a fixed order.
decision = store.explain(timeline, bo, chem, 6, "frag-private")
print(f"bo x frag-private: admitted={decision.admitted}, clause={decision.failed_clause.value}")

# Revoke bo's access to the agent: the shared fragment disappears for bo.
timeline.revoke((bo, chem), 7)
print("bo sees after revoke:", sorted(store.admissible(timeline, bo, chem, 7)))
print("...but history is intact - bo at t=6 still shows:",
      sorted(store.admissible(timeline, bo, chem, 6)))

# Provenance cannot be edited after the fact.
try:
    store.get("frag-shared").provenance.creator = bo  # type: ignore[misc]
except Exception as exc:
    print(f"\nmutating provenance raises {type(exc).__name__}")
