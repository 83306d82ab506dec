"""Tiered top-k retrieval over admissible fragments.

Queries and fragment keys embed into unit vectors; cosine similarity ranks
candidates. The reader's own private fragments and the cross-user shared
pool are ranked separately, each truncated to its tier size, with a
similarity floor. Identical text embeds identically (similarity 1.0), which
is how exact repeats are recognized downstream.
"""

from memfabric import (
    AccessTimeline,
    DeterministicEmbedder,
    MemoryFragment,
    MemoryStore,
    PrincipalDirectory,
    Provenance,
    RetrievalConfig,
    Tier,
    cosine,
    retrieve,
)

directory = PrincipalDirectory()
ana, bo = directory.add_user("ana"), directory.add_user("bo")
helper = directory.add_agent("helper")
kb = directory.add_resource("kb")

timeline = AccessTimeline(directory)
for tick, edge in enumerate([(ana, helper), (bo, helper), (helper, kb)], start=1):
    timeline.grant(edge, tick)

embedder = DeterministicEmbedder(dimension=32)
store = MemoryStore(dimension=32, directory=directory)

topics = [
    ("brew pour-over coffee", Tier.SHARED, bo),
    ("brew cold-brew coffee", Tier.SHARED, bo),
    ("fix a flat bicycle tire", Tier.SHARED, bo),
    ("my coffee ratio notes", Tier.PRIVATE, ana),
]
for i, (key, tier, creator) in enumerate(topics):
    store.insert(
        MemoryFragment(
            id=f"frag-{i}",
            tier=tier,
            key=key,
            value=f"Everything about: {key}",
            embedding=embedder.embed(key),
            provenance=Provenance(4 + i, creator, frozenset({helper})),
        )
    )

query = "brew pour-over coffee"
qvec = embedder.embed(query)
print(f"query: {query!r}")
print("self-similarity:", cosine(qvec, embedder.embed(query)))

config = RetrievalConfig(k_user=10, k_cross=2, threshold=0.1)
user_tier, cross_tier = retrieve(store, timeline, ana, helper, t=99, query_embedding=qvec, config=config)

print("\nana's private tier:")
for hit in user_tier:
    print(f"  {hit.similarity:+.3f}  {hit.key}")
print("cross-user tier (k_cross=2 keeps the best two above 0.1):")
for hit in cross_tier:
    print(f"  {hit.similarity:+.3f}  {hit.key}")

# bo holds no private fragments here, and ana's private notes never leak.
user_tier_bo, cross_tier_bo = retrieve(store, timeline, bo, helper, 99, qvec, config)
print("\nbo's private tier:", user_tier_bo)
assert all(hit.fragment_id != "frag-3" for hit in cross_tier_bo)
print("ana's private note is absent from bo's view")
