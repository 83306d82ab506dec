"""Provenance-tagged fragment store and permission-based admissibility.

Fragments are immutable key/value records carrying a unit-norm embedding and
a provenance stamp: when they were created, by which user, through which
agents, touching which resources. The store is partitioned into two tiers:
``private`` fragments are visible only to their creating user, ``shared``
fragments cross user boundaries when permissions allow.

A fragment is *admissible* for a reader (user ``u``, agent ``a``, tick ``t``)
when three clauses hold, checked in this order:

1. tier ownership  - private fragments require creator == u;
2. agent subset    - every contributing agent is one u may invoke at t;
3. resource subset - every touched resource is one a may access at t.

Admissibility is evaluated against the read-time permission snapshot, never
the creation-time one, so revoking an edge retro-actively hides fragments
that were reachable before. Deletion is deliberately not exposed: forgetting
is modeled as revocation, keeping the audit trail total.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .access import AccessTimeline
from .audit import AuditAction, AuditLog
from .errors import (
    DimensionMismatch,
    DuplicateId,
    InvalidFragment,
    UnknownFragment,
    UnknownPrincipalInProvenance,
)
from .principals import (
    PrincipalDirectory,
    PrincipalId,
    PrincipalKind,
    agent,
    resource,
    user,
)

UNIT_NORM_TOLERANCE = 1e-6


class Tier(str, Enum):
    PRIVATE = "private"
    SHARED = "shared"


@dataclass(frozen=True)
class Provenance:
    """Immutable origin stamp attached to a fragment at insert time."""

    created_at: int
    creator: PrincipalId
    agents: frozenset[PrincipalId]
    resources: frozenset[PrincipalId] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", frozenset(self.agents))
        object.__setattr__(self, "resources", frozenset(self.resources))
        if self.created_at < 0:
            raise InvalidFragment("created_at must be a non-negative tick")
        if self.creator.kind is not PrincipalKind.USER:
            raise InvalidFragment(f"creator must be a user, got {self.creator}")
        if not self.agents:
            raise InvalidFragment("provenance needs at least one contributing agent")
        for a in self.agents:
            if a.kind is not PrincipalKind.AGENT:
                raise InvalidFragment(f"{a} listed as contributing agent")
        for r in self.resources:
            if r.kind is not PrincipalKind.RESOURCE:
                raise InvalidFragment(f"{r} listed as touched resource")

    def to_dict(self) -> dict:
        return {
            "created_at": self.created_at,
            "creator": self.creator.name,
            "agents": sorted(a.name for a in self.agents),
            "resources": sorted(r.name for r in self.resources),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Provenance":
        return cls(
            created_at=int(data["created_at"]),
            creator=user(data["creator"]),
            agents=frozenset(agent(n) for n in data["agents"]),
            resources=frozenset(resource(n) for n in data["resources"]),
        )


@dataclass(frozen=True, eq=False)
class MemoryFragment:
    id: str
    tier: Tier
    key: str
    value: str
    embedding: np.ndarray
    provenance: Provenance

    def __post_init__(self) -> None:
        if not self.id:
            raise InvalidFragment("fragment id must be non-empty")
        if not self.key or not self.value:
            raise InvalidFragment(f"fragment {self.id}: key and value must be non-empty")
        emb = np.array(self.embedding, dtype=np.float64)
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "tier": self.tier.value,
            "key": self.key,
            "value": self.value,
            "embedding": [float(x) for x in self.embedding],
            "provenance": self.provenance.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MemoryFragment":
        return cls(
            id=data["id"],
            tier=Tier(data["tier"]),
            key=data["key"],
            value=data["value"],
            embedding=np.array(data["embedding"], dtype=np.float64),
            provenance=Provenance.from_dict(data["provenance"]),
        )


def new_fragment_id() -> str:
    return str(uuid.uuid4())


def seeded_id_factory(seed: int):
    """UUID-format id generator that is a pure function of the seed.

    Used by the scenario harness so replays with the same seed produce
    byte-identical stores and audit logs.
    """
    import random

    rng = random.Random(seed)

    def factory() -> str:
        return str(uuid.UUID(int=rng.getrandbits(128), version=4))

    return factory


class AdmissibilityClause(str, Enum):
    TIER_OWNERSHIP = "tier_ownership"
    AGENT_SUBSET = "agent_subset"
    RESOURCE_SUBSET = "resource_subset"


@dataclass(frozen=True)
class AdmissibilityDecision:
    """Clause-by-clause outcome of one admissibility check.

    ``failed_clause`` names the first violated clause in the fixed order
    tier ownership, agent subset, resource subset; it is ``None`` exactly
    when the fragment is admitted.
    """

    fragment_id: str
    admitted: bool
    failed_clause: AdmissibilityClause | None = None

    def __post_init__(self) -> None:
        assert self.admitted == (self.failed_clause is None)


class MemoryStore:
    """Fragment universe with exact, desk-scale admissibility queries.

    The store validates embeddings against a fixed dimension and unit L2
    norm on insert; provenance principals are checked against ``directory``
    when one is attached. Inserts emit ``fragment_write`` audit records.
    """

    def __init__(
        self,
        dimension: int,
        directory: PrincipalDirectory | None = None,
        audit: AuditLog | None = None,
    ) -> None:
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.directory = directory
        self._audit = audit
        self._fragments: dict[str, MemoryFragment] = {}
        self._write_lock = threading.Lock()  # single serialized writer

    # -- persistence

    def insert(self, fragment: MemoryFragment) -> str:
        with self._write_lock:
            return self._insert_locked(fragment)

    def _insert_locked(self, fragment: MemoryFragment) -> str:
        if fragment.id in self._fragments:
            raise DuplicateId(fragment.id)
        if fragment.embedding.shape != (self.dimension,):
            raise DimensionMismatch(
                f"fragment {fragment.id}: embedding shape {fragment.embedding.shape}, "
                f"store dimension {self.dimension}"
            )
        norm = float(np.linalg.norm(fragment.embedding))
        if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
            raise InvalidFragment(
                f"fragment {fragment.id}: embedding norm {norm} is not unit"
            )
        if self.directory is not None:
            prov = fragment.provenance
            for pid in [prov.creator, *prov.agents, *prov.resources]:
                if not self.directory.known(pid):
                    raise UnknownPrincipalInProvenance(str(pid))
        self._fragments[fragment.id] = fragment
        if self._audit is not None:
            self._audit.append(
                at=fragment.provenance.created_at,
                actor=fragment.provenance.creator.name,
                action=AuditAction.FRAGMENT_WRITE,
                subjects=(fragment.id,),
                detail={
                    "tier": fragment.tier.value,
                    "agents": sorted(a.name for a in fragment.provenance.agents),
                    "resources": sorted(r.name for r in fragment.provenance.resources),
                },
            )
        return fragment.id

    def attach_audit(self, audit: AuditLog | None) -> None:
        self._audit = audit

    def get(self, fragment_id: str) -> MemoryFragment:
        try:
            return self._fragments[fragment_id]
        except KeyError:
            raise UnknownFragment(fragment_id) from None

    def __contains__(self, fragment_id: str) -> bool:
        return fragment_id in self._fragments

    def __len__(self) -> int:
        return len(self._fragments)

    def fragments(self) -> Iterator[MemoryFragment]:
        """All fragments in insertion order (snapshot; safe against
        concurrent inserts)."""
        with self._write_lock:
            return iter(tuple(self._fragments.values()))

    # -- admissibility

    def _decide(
        self,
        fragment: MemoryFragment,
        u: PrincipalId,
        user_agents: frozenset[PrincipalId],
        agent_resources: frozenset[PrincipalId],
    ) -> AdmissibilityClause | None:
        prov = fragment.provenance
        if fragment.tier is Tier.PRIVATE and prov.creator != u:
            return AdmissibilityClause.TIER_OWNERSHIP
        if not prov.agents <= user_agents:
            return AdmissibilityClause.AGENT_SUBSET
        if not prov.resources <= agent_resources:
            return AdmissibilityClause.RESOURCE_SUBSET
        return None

    def admissible(
        self, timeline: AccessTimeline, u: PrincipalId, a: PrincipalId, t: int
    ) -> set[str]:
        """Ids of every fragment reader (u, a, t) may see.

        Exactly the fragments whose contributing agents all lie in
        ``agents_of(u, t)`` and touched resources in ``resources_of(a, t)``,
        with private fragments further restricted to their creator.
        """
        user_agents = timeline.agents_of(u, t)
        agent_resources = timeline.resources_of(a, t)
        return {
            f.id
            for f in self.fragments()
            if self._decide(f, u, user_agents, agent_resources) is None
        }

    def explain(
        self,
        timeline: AccessTimeline,
        u: PrincipalId,
        a: PrincipalId,
        t: int,
        fragment_id: str,
    ) -> AdmissibilityDecision:
        """Audit-friendly decomposition of one admissibility check."""
        fragment = self.get(fragment_id)
        failed = self._decide(
            fragment, u, timeline.agents_of(u, t), timeline.resources_of(a, t)
        )
        return AdmissibilityDecision(
            fragment_id=fragment_id, admitted=failed is None, failed_clause=failed
        )

    # -- line-delimited JSON snapshot

    def export_jsonl(self, fp: IO[str]) -> None:
        for fragment in self.fragments():
            fp.write(json.dumps(fragment.to_dict(), sort_keys=True) + "\n")

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(f.to_dict(), sort_keys=True) + "\n" for f in self.fragments()
        )

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fp:
            self.export_jsonl(fp)

    @classmethod
    def from_jsonl(
        cls,
        lines: Iterable[str] | str,
        dimension: int | None = None,
        directory: PrincipalDirectory | None = None,
        audit: AuditLog | None = None,
    ) -> "MemoryStore":
        """Rebuild a store from a snapshot.

        The dimension is taken from the first fragment when not given;
        principals named in provenance are auto-registered into a fresh
        directory when none is supplied.
        """
        if isinstance(lines, str):
            lines = lines.splitlines()
        fragments = [
            MemoryFragment.from_dict(json.loads(line)) for line in lines if line.strip()
        ]
        if dimension is None:
            if not fragments:
                raise ValueError("cannot infer dimension from an empty snapshot")
            dimension = fragments[0].embedding.shape[0]
        own_directory = directory if directory is not None else PrincipalDirectory()
        for f in fragments:
            own_directory.register(f.provenance.creator)
            for a in f.provenance.agents:
                own_directory.register(a)
            for r in f.provenance.resources:
                own_directory.register(r)
        store = cls(dimension, directory=own_directory, audit=audit)
        for f in fragments:
            if f.embedding.shape != (dimension,):
                raise DimensionMismatch(
                    f"fragment {f.id}: dimension {f.embedding.shape[0]} != {dimension}"
                )
            if f.id in store._fragments:
                raise DuplicateId(f.id)
            store._fragments[f.id] = f
        return store

    @classmethod
    def load(cls, path: str | Path, **kwargs) -> "MemoryStore":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"), **kwargs)
