"""Config-driven scenario runs: shared vs isolated memory, under static or
evolving permissions, with scripted backends and deterministic replay.

A scenario config (JSON or YAML) declares the principal universe, the
timeline source (static edges or a grant/revoke schedule), the workload,
the policy bindings, and the retrieval settings. Running a scenario executes
every episode in a deterministic order and writes a self-describing artifact
directory: audit log, permission event log, store snapshot, metrics CSV and
JSON, per-phase access matrices, a final-answer transcript, and an echo of
the resolved config. Re-running from the echoed config reproduces the logs
byte for byte.

Workload shapes:

- ``queries`` + ``overlap``: a seeded fraction of the pool becomes "global"
  queries issued by every user; the rest are partitioned disjointly.
- ``per_user``: explicit ordered assignment.
- ``synthetic``: generated pools - ``count`` (category round-robin, combined
  with ``overlap``) or ``per_user_per_category`` (disjoint per-user queries).
- ``decompose``: project queries split into role-keyed subtasks; each
  non-director user works its role's subtask, then the director works every
  role's subtask and consolidates.

Under a schedule timeline the whole workload replays once per phase; under a
static timeline it runs once. Isolated mode forces every write to the
private tier, which is the control arm for sharing-efficiency comparisons.
"""

from __future__ import annotations

import dataclasses
import json
import math
import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import yaml

from .access import AccessTimeline, Edge, EdgeKind, PermissionAction
from .audit import AuditAction, AuditLog, MetricsReport, access_matrix, compute_metrics
from .clock import LogicalClock
from .errors import ConfigError, InsufficientQueries
from .orchestration import (
    AgentSpec,
    EpisodeLimits,
    JoiningAggregator,
    KeywordCoordinator,
    RemoteAgentBackend,
    RemoteAggregator,
    RemoteCoordinator,
    Resource,
    Runtime,
    ScriptedAgentBackend,
    run_episode,
)
from .policy import (
    DEFAULT_PRIVATE_WRITE_PROMPT,
    DEFAULT_SHARED_WRITE_PROMPT,
    Direction,
    IdentityTransform,
    PolicyBinding,
    PolicyTable,
    PromptedRemote,
    Redactor,
    Scope,
    Transformer,
)
from .principals import PrincipalDirectory, PrincipalId, agent, resource, user
from .retrieval import RetrievalConfig, build_embedder
from .schedule import GraphSchedule, plan_schedule, schedule_from_targets
from .store import MemoryStore, seeded_id_factory

DEFAULT_SHARED_WRITE_RULES = (("{user}", "[user]"),)


# --- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class AgentConfig:
    id: str
    category: str
    specialization: str = ""
    resource: str | None = None
    endpoint: str | None = None
    system_prompt: str = ""


@dataclass(frozen=True)
class ResourceConfig:
    id: str
    category: str
    kind: str = "knowledge_base"
    documents: str | None = None
    endpoint: str | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    users: tuple[str, ...]
    agents: tuple[AgentConfig, ...]
    resources: tuple[ResourceConfig, ...]
    timeline: Mapping
    workload: Mapping
    memory_mode: str = "shared"
    policies: Mapping = field(default_factory=dict)
    retrieval: Mapping = field(default_factory=dict)
    embedder: Mapping = field(default_factory=lambda: {"kind": "deterministic", "dimension": 32})
    limits: Mapping = field(default_factory=dict)
    coordinator: Mapping = field(default_factory=dict)
    aggregator: Mapping = field(default_factory=dict)
    judge: Mapping | None = None
    documents: str | None = None
    bin_size: int = 0

    def __post_init__(self) -> None:
        if self.memory_mode not in ("shared", "isolated"):
            raise ConfigError(f"memory_mode must be shared|isolated, got {self.memory_mode!r}")
        if not self.users:
            raise ConfigError("at least one user is required")
        if len(set(self.users)) != len(self.users):
            raise ConfigError("duplicate user names")
        agent_ids = [a.id for a in self.agents]
        if len(set(agent_ids)) != len(agent_ids):
            raise ConfigError("duplicate agent ids")
        resource_ids = [r.id for r in self.resources]
        if len(set(resource_ids)) != len(resource_ids):
            raise ConfigError("duplicate resource ids")
        categories = [a.category for a in self.agents]
        if len(set(categories)) != len(categories):
            raise ConfigError("agent categories must be unique (they key routing)")
        known_resources = set(resource_ids)
        for a in self.agents:
            if a.resource is not None and a.resource not in known_resources:
                raise ConfigError(f"agent {a.id} names unknown resource {a.resource}")

    def resolved(self, mode: str | None = None, seed: int | None = None) -> "ScenarioConfig":
        changes: dict = {}
        if mode is not None:
            changes["memory_mode"] = mode
        if seed is not None:
            changes["seed"] = seed
        return dataclasses.replace(self, **changes) if changes else self

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["users"] = list(self.users)
        doc["agents"] = [dataclasses.asdict(a) for a in self.agents]
        doc["resources"] = [dataclasses.asdict(r) for r in self.resources]
        return doc

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScenarioConfig":
        try:
            agents = tuple(AgentConfig(**a) for a in data.get("agents", ()))
            resources = tuple(ResourceConfig(**r) for r in data.get("resources", ()))
            return cls(
                name=str(data.get("name", "scenario")),
                seed=int(data.get("seed", 0)),
                users=tuple(data.get("users", ())),
                agents=agents,
                resources=resources,
                timeline=dict(data.get("timeline", {})),
                workload=dict(data.get("workload", {})),
                memory_mode=str(data.get("memory_mode", "shared")),
                policies=dict(data.get("policies", {})),
                retrieval=dict(data.get("retrieval", {})),
                embedder=dict(data.get("embedder", {"kind": "deterministic", "dimension": 32})),
                limits=dict(data.get("limits", {})),
                coordinator=dict(data.get("coordinator", {})),
                aggregator=dict(data.get("aggregator", {})),
                judge=dict(data["judge"]) if data.get("judge") else None,
                documents=data.get("documents"),
                bin_size=int(data.get("bin_size", 0)),
            )
        except TypeError as exc:
            raise ConfigError(f"malformed scenario config: {exc}") from exc


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".yaml", ".yml"):
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ScenarioConfig.from_dict(data)


def _build_transformer(doc: Mapping | None, default_prompt: str = "") -> Transformer:
    if not doc or doc.get("kind", "identity") == "identity":
        return IdentityTransform()
    kind = doc["kind"]
    if kind == "redactor":
        rules = tuple((str(p), str(r)) for p, r in doc.get("rules", ()))
        return Redactor(rules=rules)
    if kind == "prompted_remote":
        return PromptedRemote(
            system_prompt=str(doc.get("system_prompt") or default_prompt),
            endpoint=str(doc["endpoint"]),
        )
    raise ConfigError(f"unknown transformer kind {kind!r}")


def _build_scope(doc: Mapping) -> Scope:
    level = str(doc.get("level", "global"))
    if level == "global":
        return Scope.everywhere()
    if level == "user":
        return Scope.for_user(user(str(doc["user"])))
    if level == "agent":
        return Scope.for_agent(agent(str(doc["agent"])))
    if level == "window":
        return Scope.during(int(doc["start"]), int(doc["end"]))
    raise ConfigError(f"unknown scope level {level!r}")


def build_policies(cfg: ScenarioConfig) -> PolicyTable:
    """Default instantiation: verbatim reads, name-stripping shared writes.

    Remote write transformers configured without a system prompt fall back
    to the stock encoding prompts (standalone key-value memories; the shared
    variant additionally strips user-specific detail).
    """
    doc = cfg.policies
    table = PolicyTable()
    read_tf = _build_transformer(doc.get("read"))
    private_tf = _build_transformer(doc.get("write_private"), DEFAULT_PRIVATE_WRITE_PROMPT)
    if "write_shared" in doc:
        shared_tf = _build_transformer(doc.get("write_shared"), DEFAULT_SHARED_WRITE_PROMPT)
    else:
        shared_tf = Redactor(rules=DEFAULT_SHARED_WRITE_RULES)
    table.add(PolicyBinding(Scope.everywhere(), Direction.READ, read_tf))
    table.add(PolicyBinding(Scope.everywhere(), Direction.WRITE_PRIVATE, private_tf))
    table.add(PolicyBinding(Scope.everywhere(), Direction.WRITE_SHARED, shared_tf))
    for entry in doc.get("scoped", ()):
        table.add(
            PolicyBinding(
                scope=_build_scope(entry.get("scope", {})),
                direction=Direction(entry["direction"]),
                transformer=_build_transformer(entry.get("transformer")),
            )
        )
    return table


# --- workload ------------------------------------------------------------------


@dataclass(frozen=True)
class WorkloadItem:
    user: str
    query: str
    kind: str = "unique"  # "global" | "unique" | "decomposed"


@dataclass(frozen=True)
class Workload:
    items: tuple[WorkloadItem, ...]
    global_queries: tuple[str, ...] = ()


def _interleave(per_user: Mapping[str, list[WorkloadItem]], users: Sequence[str]) -> list[WorkloadItem]:
    items: list[WorkloadItem] = []
    cursors = {u: 0 for u in users}
    exhausted = 0
    while exhausted < len(users):
        exhausted = 0
        for u in users:
            queue = per_user.get(u, [])
            if cursors[u] < len(queue):
                items.append(queue[cursors[u]])
                cursors[u] += 1
            else:
                exhausted += 1
    return items


def generate_workload(
    queries: Sequence[str], users: Sequence[str], overlap: float, seed: int
) -> Workload:
    """Split a query pool into a global subset every user issues and a
    disjoint per-user remainder, then interleave round-robin.

    The global subset has exactly ``floor(overlap * len(queries))`` members.
    Assignment and per-user order are pure functions of the seed.
    """
    if not 0.0 <= overlap <= 1.0:
        raise ValueError(f"overlap must lie in [0, 1], got {overlap}")
    if not queries:
        raise InsufficientQueries("no queries to assign")
    if not users:
        raise InsufficientQueries("no users to assign queries to")
    rng = random.Random(seed)
    pool = list(queries)
    rng.shuffle(pool)
    n_global = math.floor(overlap * len(pool))
    global_queries = pool[:n_global]
    remainder = pool[n_global:]

    per_user: dict[str, list[WorkloadItem]] = {
        u: [WorkloadItem(u, q, "global") for q in global_queries] for u in users
    }
    for i, q in enumerate(remainder):
        owner = users[i % len(users)]
        per_user[owner].append(WorkloadItem(owner, q, "unique"))
    for u in users:
        rng.shuffle(per_user[u])
    return Workload(
        items=tuple(_interleave(per_user, users)),
        global_queries=tuple(global_queries),
    )


def build_workload(cfg: ScenarioConfig) -> Workload:
    doc = cfg.workload
    categories = sorted(a.category for a in cfg.agents)

    if "per_user" in doc:
        per_user = {
            u: [WorkloadItem(u, str(q)) for q in qs]
            for u, qs in doc["per_user"].items()
        }
        unknown = set(per_user) - set(cfg.users)
        if unknown:
            raise ConfigError(f"per_user workload names unknown users: {sorted(unknown)}")
        return Workload(items=tuple(_interleave(per_user, cfg.users)))

    if "decompose" in doc:
        spec = doc["decompose"]
        roles: Mapping[str, str] = spec["roles"]
        director = spec.get("director")
        items: list[WorkloadItem] = []
        for query in spec["queries"]:
            for u in cfg.users:
                if u == director or u not in roles:
                    continue
                items.append(WorkloadItem(u, f"{roles[u]}: {query}", "decomposed"))
            if director is not None:
                for role in sorted(set(roles.values())):
                    items.append(WorkloadItem(director, f"{role}: {query}", "decomposed"))
        return Workload(items=tuple(items))

    if "synthetic" in doc:
        spec = doc["synthetic"]
        if "per_user_per_category" in spec:
            k = int(spec["per_user_per_category"])
            per_user = {
                u: [
                    WorkloadItem(u, f"{cat}: question {u}-{j:02d}")
                    for cat in categories
                    for j in range(k)
                ]
                for u in cfg.users
            }
            return Workload(items=tuple(_interleave(per_user, cfg.users)))
        count = int(spec["count"])
        pool = [
            f"{categories[i % len(categories)]}: question {i:03d}" for i in range(count)
        ]
        return generate_workload(pool, cfg.users, float(doc.get("overlap", 0.0)), cfg.seed)

    if "queries" in doc:
        return generate_workload(
            [str(q) for q in doc["queries"]],
            cfg.users,
            float(doc.get("overlap", 0.0)),
            cfg.seed,
        )

    raise ConfigError("workload needs one of: queries, per_user, synthetic, decompose")


# --- scenario plan ---------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioPhase:
    label: str
    permission_edits: tuple[tuple[PermissionAction, Edge], ...]
    episodes: tuple[WorkloadItem, ...]


@dataclass(frozen=True)
class ScenarioPlan:
    """Everything a run (or an API driver) executes, in order."""

    setup_edges: tuple[Edge, ...]
    phases: tuple[ScenarioPhase, ...]
    workload: Workload


def _agent_resource_edges(cfg: ScenarioConfig) -> list[Edge]:
    doc = cfg.timeline
    spec = doc.get("agent_resources", "one_to_one")
    if spec == "one_to_one":
        edges = [
            (agent(a.id), resource(a.resource))
            for a in cfg.agents
            if a.resource is not None
        ]
    else:
        edges = [(agent(str(a)), resource(str(r))) for a, r in spec]
    return sorted(edges)


def _static_user_agent_edges(cfg: ScenarioConfig) -> list[Edge]:
    doc = cfg.timeline
    spec = doc.get("user_agents")
    if spec is None:
        return []
    if spec == "all":
        return sorted((user(u), agent(a.id)) for u in cfg.users for a in cfg.agents)
    return sorted((user(str(u)), agent(str(a))) for u, a in spec)


def _parse_edge_doc(doc: Mapping) -> Edge:
    if "user" in doc:
        return (user(str(doc["user"])), agent(str(doc["agent"])))
    return (agent(str(doc["agent"])), resource(str(doc["resource"])))


def plan_scenario(cfg: ScenarioConfig) -> ScenarioPlan:
    workload = build_workload(cfg)
    setup: list[Edge] = _agent_resource_edges(cfg)
    doc = cfg.timeline

    if "phases" in doc:
        setup.extend(_static_user_agent_edges(cfg))
        phases = tuple(
            ScenarioPhase(
                label=str(ph.get("label", f"t{i}")),
                permission_edits=tuple(
                    (PermissionAction(ev["action"]), _parse_edge_doc(ev["edge"]))
                    for ev in ph.get("events", ())
                ),
                episodes=workload.items,
            )
            for i, ph in enumerate(doc["phases"])
        )
        return ScenarioPlan(setup_edges=tuple(setup), phases=phases, workload=workload)

    if "schedule" in doc:
        sched_doc = dict(doc["schedule"])
        sched_doc.setdefault("seed", cfg.seed)
        if "targets" in sched_doc:
            schedule = schedule_from_targets(
                [int(x) for x in sched_doc["targets"]],
                seed=int(sched_doc["seed"]),
                p=float(sched_doc.get("p", 0.2)),
            )
        else:
            schedule = GraphSchedule.from_dict(sched_doc)
        edits = plan_schedule(
            schedule,
            [user(u) for u in cfg.users],
            [agent(a.id) for a in cfg.agents],
        )
        phases = tuple(
            ScenarioPhase(
                label=pe.label,
                permission_edits=tuple((pe.action, e) for e in pe.edges),
                episodes=workload.items,
            )
            for pe in edits
        )
        return ScenarioPlan(setup_edges=tuple(setup), phases=phases, workload=workload)

    setup.extend(_static_user_agent_edges(cfg))
    phase = ScenarioPhase(label="all", permission_edits=(), episodes=workload.items)
    return ScenarioPlan(setup_edges=tuple(setup), phases=(phase,), workload=workload)


# --- runtime construction --------------------------------------------------------


def _load_documents(path: str | Path) -> list[dict]:
    docs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            docs.append(json.loads(line))
    return docs


def build_runtime(cfg: ScenarioConfig, audit_path: str | Path | None = None) -> Runtime:
    """Wire a bare runtime from a config. Permission edges are *not* applied
    here; the run (or an API driver) issues them so that both paths produce
    identical event and audit logs."""
    directory = PrincipalDirectory()
    for u in cfg.users:
        directory.add_user(u)
    for a in cfg.agents:
        directory.add_agent(a.id)
    for r in cfg.resources:
        directory.add_resource(r.id)

    audit = AuditLog(audit_path)
    timeline = AccessTimeline(directory, audit=audit)
    embedder = build_embedder(
        str(cfg.embedder.get("kind", "deterministic")),
        int(cfg.embedder.get("dimension", 32)),
        cfg.embedder.get("endpoint"),
    )
    store = MemoryStore(embedder.dimension, directory=directory, audit=audit)

    shared_docs = _load_documents(cfg.documents) if cfg.documents else []
    resources: dict[PrincipalId, Resource] = {}
    for rc in cfg.resources:
        docs = _load_documents(rc.documents) if rc.documents else [
            d for d in shared_docs if d.get("category") == rc.category
        ]
        rid = resource(rc.id)
        resources[rid] = Resource(
            id=rid, kind=rc.kind, documents=docs, endpoint=rc.endpoint
        )

    agents: dict[PrincipalId, AgentSpec] = {}
    for ac in cfg.agents:
        aid = agent(ac.id)
        backend: ScriptedAgentBackend | RemoteAgentBackend
        if ac.endpoint:
            backend = RemoteAgentBackend(endpoint=ac.endpoint, system_prompt=ac.system_prompt)
        else:
            backend = ScriptedAgentBackend(resource=ac.resource)
        agents[aid] = AgentSpec(
            id=aid,
            specialization=ac.specialization or f"{ac.category} specialist",
            backend=backend,
        )

    if cfg.coordinator.get("endpoint"):
        coordinator = RemoteCoordinator(
            endpoint=str(cfg.coordinator["endpoint"]),
            system_prompt=str(cfg.coordinator.get("system_prompt", "")),
        )
    else:
        coordinator = KeywordCoordinator({a.category: a.id for a in cfg.agents})
    if cfg.aggregator.get("endpoint"):
        aggregator = RemoteAggregator(
            endpoint=str(cfg.aggregator["endpoint"]),
            system_prompt=str(cfg.aggregator.get("system_prompt", "")),
        )
    else:
        aggregator = JoiningAggregator()

    judge = None
    if cfg.judge is not None:
        judge = _build_transformer(cfg.judge)

    return Runtime(
        directory=directory,
        clock=LogicalClock(),
        timeline=timeline,
        store=store,
        policies=build_policies(cfg),
        audit=audit,
        embedder=embedder,
        retrieval=RetrievalConfig(
            k_user=int(cfg.retrieval.get("k_user", 10)),
            k_cross=int(cfg.retrieval.get("k_cross", 10)),
            threshold=float(cfg.retrieval.get("threshold", 0.1)),
        ),
        agents=agents,
        resources=resources,
        coordinator=coordinator,
        aggregator=aggregator,
        limits=EpisodeLimits(
            max_rounds=int(cfg.limits.get("max_rounds", 6)),
            coordinator_retries=int(cfg.limits.get("coordinator_retries", 2)),
        ),
        id_factory=seeded_id_factory(cfg.seed),
        force_private=cfg.memory_mode == "isolated",
        judge=judge,
    )


def resume_runtime(cfg: ScenarioConfig, artifacts_dir: str | Path) -> Runtime:
    """Rebuild a runtime from a previous run's files and continue it.

    All state lives in the artifacts: the timeline and store are reloaded,
    the audit log is reopened in append mode with its sequence continued,
    the clock resumes past the last tick seen, and the seeded id factory is
    fast-forwarded past the ids already minted. Restarting a service on the
    same directory therefore picks up exactly where it stopped.
    """
    out = Path(artifacts_dir)
    rt = build_runtime(cfg, audit_path=None)
    rt.audit.close()
    audit = AuditLog(out / "audit.jsonl", resume=True)
    rt.audit = audit
    timeline_path = out / "timeline.jsonl"
    if timeline_path.exists():
        rt.timeline = AccessTimeline.load(timeline_path, directory=rt.directory)
    rt.timeline.attach_audit(audit)
    store_path = out / "store.jsonl"
    if store_path.exists() and store_path.read_text(encoding="utf-8").strip():
        rt.store = MemoryStore.load(
            store_path, dimension=rt.embedder.dimension, directory=rt.directory
        )
    rt.store.attach_audit(audit)
    last_at = max((rec.at for rec in audit.records), default=0)
    rt.clock = LogicalClock(start=max(rt.timeline.latest_tick, last_at, 0))
    for _ in range(len(rt.store)):
        rt.id_factory()
    rt._episode_counter = sum(
        1 for rec in audit.records if rec.action is AuditAction.EPISODE_START
    )
    return rt


# --- running ----------------------------------------------------------------------


@dataclass
class RunArtifacts:
    out_dir: Path
    audit_path: Path
    timeline_path: Path
    store_path: Path
    metrics_csv_path: Path
    metrics_json_path: Path
    matrices_path: Path
    transcript_path: Path
    config_echo_path: Path
    metrics: MetricsReport
    phase_windows: dict[str, tuple[int, int]]


def _transcript_line(item: WorkloadItem, bin_label: str, t: int, episode) -> str:
    return json.dumps(
        {
            "episode_id": episode.episode_id,
            "user": item.user,
            "query": item.query,
            "kind": item.kind,
            "bin": bin_label,
            "t": t,
            "final_answer": episode.final_answer,
            "failure": episode.failure,
        },
        sort_keys=True,
    )


def _locked_factory(factory):
    lock = threading.Lock()

    def locked() -> str:
        with lock:
            return factory()

    return locked


def run_scenario(
    cfg: ScenarioConfig,
    out_dir: str | Path,
    mode: str | None = None,
    seed: int | None = None,
    parallel: int = 1,
) -> RunArtifacts:
    """Execute a scenario and write its artifact directory.

    Episodes run sequentially by default: permission edits of a phase first,
    then the phase's episodes in workload order, each at a fresh tick, which
    makes reruns byte-identical. ``parallel > 1`` is an opt-in mode that runs
    episodes in concurrent batches sharing one logical tick - mutations stay
    serialized through the store/audit writer locks, so every safety property
    still holds, but record interleaving (and memory-reuse timing) is no
    longer byte-reproducible. Failed episodes are recorded, not fatal.
    """
    cfg = cfg.resolved(mode=mode, seed=seed)
    if parallel < 1:
        raise ValueError("parallel must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan = plan_scenario(cfg)
    rt = build_runtime(cfg, audit_path=out / "audit.jsonl")
    if parallel > 1:
        rt.id_factory = _locked_factory(rt.id_factory)

    transcript_lines: list[str] = []
    phase_windows: dict[str, tuple[int, int]] = {}
    for edge in plan.setup_edges:
        rt.timeline.grant(edge, rt.clock.tick())
    for phase in plan.phases:
        for action, edge in phase.permission_edits:
            rt.timeline.apply(action, edge, rt.clock.tick())
        window_start = rt.clock.now + 1
        if parallel == 1:
            for item in phase.episodes:
                t = rt.clock.tick()
                episode = run_episode(
                    rt, user(item.user), item.query, t, bin_label=phase.label
                )
                transcript_lines.append(_transcript_line(item, phase.label, t, episode))
        else:
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                batch: list[WorkloadItem] = list(phase.episodes)
                for start in range(0, len(batch), parallel):
                    chunk = batch[start : start + parallel]
                    t = rt.clock.tick()  # concurrent episodes share an instant
                    futures = [
                        pool.submit(
                            run_episode, rt, user(item.user), item.query, t, phase.label
                        )
                        for item in chunk
                    ]
                    for item, future in zip(chunk, futures):
                        transcript_lines.append(
                            _transcript_line(item, phase.label, t, future.result())
                        )
        phase_windows[phase.label] = (window_start, rt.clock.now)

    rt.audit.close()
    records = rt.audit.records

    timeline_path = out / "timeline.jsonl"
    rt.timeline.save(timeline_path)
    store_path = out / "store.jsonl"
    rt.store.save(store_path)

    binning: str | int = "bin"
    if "schedule" not in cfg.timeline and cfg.bin_size > 0:
        binning = cfg.bin_size
    metrics = compute_metrics(records, binning)
    metrics_csv_path = out / "metrics.csv"
    metrics_csv_path.write_text(metrics.to_csv(), encoding="utf-8")
    metrics_json_path = out / "metrics.json"
    metrics_json_path.write_text(
        json.dumps(metrics.to_summary(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )

    matrices_doc = []
    for phase in plan.phases:
        window = phase_windows[phase.label]
        usage = access_matrix(records, window)
        granted_ua = sorted(
            (e[0].name, e[1].name)
            for e in rt.timeline.edges_at(window[1], EdgeKind.USER_AGENT)
        )
        granted_ar = sorted(
            (e[0].name, e[1].name)
            for e in rt.timeline.edges_at(window[1], EdgeKind.AGENT_RESOURCE)
        )
        matrices_doc.append(
            {
                "phase": phase.label,
                "window": list(window),
                "usage": usage.to_dict(),
                "granted_user_agent": granted_ua,
                "granted_agent_resource": granted_ar,
            }
        )
    matrices_path = out / "access_matrices.json"
    matrices_path.write_text(
        json.dumps(matrices_doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    transcript_path = out / "transcript.jsonl"
    transcript_path.write_text("\n".join(transcript_lines) + "\n", encoding="utf-8")

    config_echo_path = out / "config.echo.json"
    config_echo_path.write_text(
        json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    return RunArtifacts(
        out_dir=out,
        audit_path=out / "audit.jsonl",
        timeline_path=timeline_path,
        store_path=store_path,
        metrics_csv_path=metrics_csv_path,
        metrics_json_path=metrics_json_path,
        matrices_path=matrices_path,
        transcript_path=transcript_path,
        config_echo_path=config_echo_path,
        metrics=metrics,
        phase_windows=phase_windows,
    )


# --- shared vs isolated comparison -------------------------------------------------


@dataclass
class ComparisonReport:
    shared: RunArtifacts
    isolated: RunArtifacts
    per_bin: list[dict]
    per_query: dict[str, dict[str, int]]
    global_queries: tuple[str, ...]
    total_shared_calls: int
    total_isolated_calls: int
    total_reduction: float

    def to_dict(self) -> dict:
        return {
            "per_bin": self.per_bin,
            "per_query": self.per_query,
            "global_queries": sorted(self.global_queries),
            "total": {
                "shared_calls": self.total_shared_calls,
                "isolated_calls": self.total_isolated_calls,
                "reduction": self.total_reduction,
            },
        }


def _resource_calls_by_query(artifacts: RunArtifacts) -> dict[str, int]:
    from .audit import load_audit_file

    records = load_audit_file(artifacts.audit_path)
    episode_query: dict[str, str] = {}
    calls: dict[str, int] = {}
    for rec in records:
        if rec.action is AuditAction.EPISODE_START:
            episode_query[rec.subjects[0]] = str(rec.detail.get("query", ""))
            calls.setdefault(str(rec.detail.get("query", "")), 0)
        elif rec.action is AuditAction.RESOURCE_INVOKE:
            eid = rec.detail.get("episode")
            if eid in episode_query:
                calls[episode_query[eid]] += 1
    return calls


def compare_modes(cfg: ScenarioConfig, out_dir: str | Path) -> ComparisonReport:
    """Run the same scenario under shared and isolated memory with identical
    seeds and report per-bin and per-query resource-call totals plus the
    relative reduction sharing buys."""
    out = Path(out_dir)
    shared = run_scenario(cfg, out / "shared", mode="shared")
    isolated = run_scenario(cfg, out / "isolated", mode="isolated")
    plan = plan_scenario(cfg.resolved(mode="shared"))

    per_bin = []
    for shared_bin, isolated_bin in zip(shared.metrics.bins, isolated.metrics.bins):
        s_calls = round(shared_bin.resource_utilization * shared_bin.queries)
        i_calls = round(isolated_bin.resource_utilization * isolated_bin.queries)
        per_bin.append(
            {
                "bin": shared_bin.label,
                "shared_calls": s_calls,
                "isolated_calls": i_calls,
                "reduction": (i_calls - s_calls) / i_calls if i_calls else 0.0,
            }
        )

    shared_by_query = _resource_calls_by_query(shared)
    isolated_by_query = _resource_calls_by_query(isolated)
    per_query = {
        q: {
            "shared_calls": shared_by_query.get(q, 0),
            "isolated_calls": isolated_by_query.get(q, 0),
        }
        for q in sorted(set(shared_by_query) | set(isolated_by_query))
    }
    total_shared = sum(shared_by_query.values())
    total_isolated = sum(isolated_by_query.values())
    report = ComparisonReport(
        shared=shared,
        isolated=isolated,
        per_bin=per_bin,
        per_query=per_query,
        global_queries=plan.workload.global_queries,
        total_shared_calls=total_shared,
        total_isolated_calls=total_isolated,
        total_reduction=(total_isolated - total_shared) / total_isolated
        if total_isolated
        else 0.0,
    )
    (out / "comparison.json").write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    csv_lines = ["bin,shared_calls,isolated_calls,reduction"]
    for row in per_bin:
        csv_lines.append(
            f"{row['bin']},{row['shared_calls']},{row['isolated_calls']},{row['reduction']!r}"
        )
    (out / "comparison.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
    return report
