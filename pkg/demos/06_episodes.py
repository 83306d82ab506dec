"""One query end to end: coordinator -> agent -> memory write -> aggregator.

Scripted agents follow a memory-first contract: an exact repeat found in the
admissible view answers from memory with zero resource calls; anything else
costs one lookup against the agent's knowledge base. Watch the second and
third episodes get cheaper.
"""

from memfabric import (
    AuditAction,
    ScenarioConfig,
    build_runtime,
    plan_scenario,
    run_episode,
    user,
)

config = ScenarioConfig.from_dict(
    {
        "name": "episodes-demo",
        "seed": 1,
        "users": ["ana", "bo"],
        "agents": [
            {
                "id": "coffee_agent",
                "category": "coffee",
                "specialization": "coffee brewing methods",
                "resource": "coffee_kb",
            }
        ],
        "resources": [{"id": "coffee_kb", "category": "coffee"}],
        "timeline": {"agent_resources": "one_to_one", "user_agents": "all"},
        "workload": {"per_user": {"ana": [], "bo": []}},  # driven manually below
        "embedder": {"kind": "deterministic", "dimension": 24},
    }
)

rt = build_runtime(config)
for edge in plan_scenario(config).setup_edges:
    rt.timeline.grant(edge, rt.clock.tick())


def calls(episode_id: str) -> int:
    return sum(
        1
        for rec in rt.audit
        if rec.action is AuditAction.RESOURCE_INVOKE
        and rec.detail.get("episode") == episode_id
    )


query = "coffee: water temperature for light roasts"

first = run_episode(rt, user("ana"), query, rt.clock.tick())
print(f"ana asks first : {calls(first.episode_id)} resource call(s)")
print(f"  answer: {first.final_answer[:70]}...")

second = run_episode(rt, user("ana"), query, rt.clock.tick())
print(f"ana repeats    : {calls(second.episode_id)} resource call(s) (private memory hit)")

third = run_episode(rt, user("bo"), query, rt.clock.tick())
print(f"bo asks same   : {calls(third.episode_id)} resource call(s) (shared memory hit)")
assert third.final_answer == first.final_answer

# Every step left an audit trail at the episode's tick.
kinds = [rec.action.value for rec in rt.audit if rec.at == first.timestamp]
print("\naudit records at the first episode's tick:", kinds)
