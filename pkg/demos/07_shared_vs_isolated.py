"""Sharing efficiency: the same workload with and without cross-user memory.

Five users, half the query pool "global" (issued by everyone). In shared
mode a duplicated query costs one knowledge-base lookup in total - the first
user pays it, everyone else hits the shared fragment. Isolated mode (every
write forced private) pays once per user.
"""

import tempfile

from memfabric import ScenarioConfig, compare_modes

config = ScenarioConfig.from_dict(
    {
        "name": "sharing-demo",
        "seed": 11,
        "users": [f"user_{i}" for i in range(1, 6)],
        "agents": [
            {
                "id": f"{cat}_agent",
                "category": cat,
                "specialization": f"{cat} questions",
                "resource": f"{cat}_kb",
            }
            for cat in ("science", "finance", "travel")
        ],
        "resources": [
            {"id": f"{cat}_kb", "category": cat}
            for cat in ("science", "finance", "travel")
        ],
        "timeline": {"agent_resources": "one_to_one", "user_agents": "all"},
        "workload": {"synthetic": {"count": 60}, "overlap": 0.5},
        "embedder": {"kind": "deterministic", "dimension": 24},
    }
)

with tempfile.TemporaryDirectory() as out:
    report = compare_modes(config, out)
    print(f"global queries          : {len(report.global_queries)}")
    print(f"shared-mode lookups     : {report.total_shared_calls}")
    print(f"isolated-mode lookups   : {report.total_isolated_calls}")
    print(f"reduction from sharing  : {report.total_reduction:.1%}")

    sample = sorted(report.global_queries)[0]
    calls = report.per_query[sample]
    print(f"\none duplicated query ({sample!r}):")
    print(f"  shared={calls['shared_calls']} lookup, isolated={calls['isolated_calls']} lookups")
