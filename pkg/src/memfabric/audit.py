"""Append-only audit log and the utilization metrics derived from it.

Every permission change, memory operation, and invocation lands here as one
immutable record. The log is the system's ground truth for "what happened":
metrics, access matrices, and the offline verifier all consume it. Records
are line-delimited JSON when persisted, flushed per record.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence

from .errors import EmptyWindow, NonMonotonicTimestamp


class AuditAction(str, Enum):
    GRANT = "grant"
    REVOKE = "revoke"
    FRAGMENT_WRITE = "fragment_write"
    FRAGMENT_READ = "fragment_read"
    AGENT_INVOKE = "agent_invoke"
    RESOURCE_INVOKE = "resource_invoke"
    EPISODE_START = "episode_start"
    EPISODE_END = "episode_end"


@dataclass(frozen=True)
class AuditRecord:
    """One immutable line in the log.

    ``seq`` is gap-free and strictly increasing; ``at`` is the logical tick
    the action happened at and never decreases along the log.
    """

    seq: int
    at: int
    actor: str
    action: AuditAction
    subjects: tuple[str, ...] = ()
    detail: Mapping[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "at": self.at,
            "actor": self.actor,
            "action": self.action.value,
            "subjects": list(self.subjects),
            "detail": dict(self.detail),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AuditRecord":
        return cls(
            seq=int(data["seq"]),
            at=int(data["at"]),
            actor=str(data["actor"]),
            action=AuditAction(data["action"]),
            subjects=tuple(data.get("subjects", ())),
            detail=dict(data.get("detail", {})),
        )


class AuditLog:
    """Appender with optional line-delimited JSON file sink.

    Sequence numbers are assigned here and have no gaps; appending with a
    tick behind the log head raises :class:`NonMonotonicTimestamp`. Records
    are never mutated or deleted.
    """

    def __init__(self, path: str | Path | None = None, resume: bool = False) -> None:
        self._records: list[AuditRecord] = []
        self._fp: IO[str] | None = None
        self._lock = threading.Lock()  # appender is shared by parallel episodes
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if resume and self.path.exists():
                self._records = records_from_jsonl(
                    self.path.read_text(encoding="utf-8")
                )
                self._fp = self.path.open("a", encoding="utf-8")
            else:
                self._fp = self.path.open("w", encoding="utf-8")

    def append(
        self,
        at: int,
        actor: str,
        action: AuditAction,
        subjects: Sequence[str] = (),
        detail: Mapping[str, object] | None = None,
    ) -> int:
        with self._lock:
            if self._records and at < self._records[-1].at:
                raise NonMonotonicTimestamp(
                    f"audit tick {at} is behind log head {self._records[-1].at}"
                )
            record = AuditRecord(
                seq=len(self._records),
                at=at,
                actor=actor,
                action=action,
                subjects=tuple(subjects),
                detail=dict(detail or {}),
            )
            self._records.append(record)
            if self._fp is not None:
                self._fp.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
                self._fp.flush()
            return record.seq

    @property
    def records(self) -> tuple[AuditRecord, ...]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[AuditRecord]:
        return iter(self._records)

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self._records
        )

    def close(self) -> None:
        if self._fp is not None:
            self._fp.close()
            self._fp = None


def records_from_jsonl(lines: Iterable[str] | str) -> list[AuditRecord]:
    if isinstance(lines, str):
        lines = lines.splitlines()
    return [AuditRecord.from_dict(json.loads(line)) for line in lines if line.strip()]


def load_audit_file(path: str | Path) -> list[AuditRecord]:
    return records_from_jsonl(Path(path).read_text(encoding="utf-8"))


# --- metrics -----------------------------------------------------------------


@dataclass
class BinMetrics:
    """Aggregates for one report bin. Means are totals over ``queries``."""

    label: str
    queries: int
    agent_utilization: float
    resource_utilization: float
    memory_hits_user: float
    memory_hits_cross: float
    accuracy: float | None = None

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "queries": self.queries,
            "agent_utilization": self.agent_utilization,
            "resource_utilization": self.resource_utilization,
            "memory_hits_user": self.memory_hits_user,
            "memory_hits_cross": self.memory_hits_cross,
            "accuracy": self.accuracy,
        }


@dataclass
class MetricsReport:
    bins: list[BinMetrics]

    def to_csv(self) -> str:
        lines = ["bin,metric,value"]
        for b in self.bins:
            rows = [
                ("queries", b.queries),
                ("agent_utilization", b.agent_utilization),
                ("resource_utilization", b.resource_utilization),
                ("memory_hits_user", b.memory_hits_user),
                ("memory_hits_cross", b.memory_hits_cross),
            ]
            if b.accuracy is not None:
                rows.append(("accuracy", b.accuracy))
            for metric, value in rows:
                lines.append(f"{b.label},{metric},{value!r}")
        return "\n".join(lines) + "\n"

    def to_summary(self) -> dict:
        return {"bins": [b.to_dict() for b in self.bins]}

    def bin(self, label: str) -> BinMetrics:
        for b in self.bins:
            if b.label == label:
                return b
        raise KeyError(label)


@dataclass
class _EpisodeTally:
    bin_label: str
    agents: set[str] = field(default_factory=set)
    resource_calls: int = 0
    hits_user: int = 0
    hits_cross: int = 0
    score: float | None = None


def _tally_episodes(records: Sequence[AuditRecord]) -> list[_EpisodeTally]:
    tallies: dict[str, _EpisodeTally] = {}
    order: list[str] = []
    for rec in records:
        if rec.action is AuditAction.EPISODE_START:
            eid = rec.subjects[0]
            tallies[eid] = _EpisodeTally(bin_label=str(rec.detail.get("bin", "all")))
            order.append(eid)
            continue
        if rec.action is AuditAction.EPISODE_END:
            eid = rec.subjects[0] if rec.subjects else None
            score = rec.detail.get("score")
            if eid in tallies and score is not None:
                tallies[eid].score = float(score)
            continue
        eid = rec.detail.get("episode")
        if eid is None or eid not in tallies:
            continue
        tally = tallies[eid]
        if rec.action is AuditAction.AGENT_INVOKE:
            tally.agents.update(rec.subjects)
        elif rec.action is AuditAction.RESOURCE_INVOKE:
            tally.resource_calls += 1
        elif rec.action is AuditAction.FRAGMENT_READ:
            tally.hits_user += len(rec.detail.get("user_tier", ()))
            tally.hits_cross += len(rec.detail.get("cross_tier", ()))
    return [tallies[eid] for eid in order]


def compute_metrics(
    records: Sequence[AuditRecord], binning: str | int = "bin"
) -> MetricsReport:
    """Aggregate per-episode usage into per-bin means.

    ``binning="bin"`` groups episodes by the bin label recorded at episode
    start (the harness stamps phase labels there); an integer groups by
    fixed-size blocks of episodes in log order. Distinct-agent counting is
    per-episode set cardinality; resource counting is the raw call count.
    """
    episodes = _tally_episodes(records)
    if not episodes:
        raise EmptyWindow("log slice contains no episodes")

    grouped: dict[str, list[_EpisodeTally]] = {}
    labels: list[str] = []
    if binning == "bin":
        for ep in episodes:
            if ep.bin_label not in grouped:
                grouped[ep.bin_label] = []
                labels.append(ep.bin_label)
            grouped[ep.bin_label].append(ep)
    else:
        size = int(binning)
        if size < 1:
            raise ValueError("bin size must be >= 1")
        for i, ep in enumerate(episodes):
            label = f"bin{i // size}"
            if label not in grouped:
                grouped[label] = []
                labels.append(label)
            grouped[label].append(ep)

    bins = []
    for label in labels:
        group = grouped[label]
        n = len(group)
        scores = [ep.score for ep in group if ep.score is not None]
        bins.append(
            BinMetrics(
                label=label,
                queries=n,
                agent_utilization=sum(len(ep.agents) for ep in group) / n,
                resource_utilization=sum(ep.resource_calls for ep in group) / n,
                memory_hits_user=sum(ep.hits_user for ep in group) / n,
                memory_hits_cross=sum(ep.hits_cross for ep in group) / n,
                accuracy=(sum(scores) / len(scores)) if scores else None,
            )
        )
    return MetricsReport(bins=bins)


# --- access matrices ---------------------------------------------------------


@dataclass
class AccessMatrices:
    """Usage counts keyed by user: who invoked which agent, and which
    resources were reached on whose behalf."""

    user_agent: dict[str, dict[str, int]]
    user_resource: dict[str, dict[str, int]]

    def to_dict(self) -> dict:
        return {"user_agent": self.user_agent, "user_resource": self.user_resource}


def access_matrix(
    records: Sequence[AuditRecord], window: tuple[int, int] | None = None
) -> AccessMatrices:
    """Count matrices over an inclusive tick window (whole log if ``None``)."""
    ua: dict[str, dict[str, int]] = {}
    ur: dict[str, dict[str, int]] = {}
    for rec in records:
        if window is not None and not (window[0] <= rec.at <= window[1]):
            continue
        if rec.action is AuditAction.AGENT_INVOKE:
            row = ua.setdefault(rec.actor, {})
            for a in rec.subjects:
                row[a] = row.get(a, 0) + 1
        elif rec.action is AuditAction.RESOURCE_INVOKE:
            u = rec.detail.get("user")
            if u is None:
                continue
            row = ur.setdefault(str(u), {})
            for r in rec.subjects:
                row[r] = row.get(r, 0) + 1
    return AccessMatrices(user_agent=ua, user_resource=ur)
