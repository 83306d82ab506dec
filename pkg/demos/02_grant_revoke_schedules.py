"""Stochastic grant/revoke schedules with exact phase targets.

A schedule drives the user->agent edge count through a ladder of targets -
here 5 -> 25 -> 5 in steps of five - by seeded Bernoulli selection over the
candidate edges. Boundaries are exact by construction; only *which* edges
move is random, and the seed pins that too.
"""

from memfabric import agent, generate_schedule, schedule_from_targets, user

users = [user(f"user_{i}") for i in range(1, 6)]
agents = [agent(f"agent_{i}") for i in range(1, 6)]

ladder = [5, 10, 15, 20, 25, 20, 15, 10, 5]
schedule = schedule_from_targets(ladder, seed=42, p=0.2)
print("phases:", [(ph.label, ph.action.value, ph.target) for ph in schedule.phases])

timeline, boundaries = generate_schedule(schedule, users, agents)
print("\nboundary edge counts:")
for b in boundaries:
    print(f"  {b.label}: {b.edge_count} edges (last event at tick {b.tick})")
assert [b.edge_count for b in boundaries] == ladder

# Same seed, same timeline - byte for byte.
again, _ = generate_schedule(schedule, users, agents)
assert again.to_jsonl() == timeline.to_jsonl()
print("\nsame seed reproduces the event log exactly")

other, _ = generate_schedule(schedule_from_targets(ladder, seed=7, p=0.2), users, agents)
print("different seed picks different edges:", other.events[0] != timeline.events[0])
