"""Principal identities and the registry of the known universe.

Every actor in the system is one of three kinds: a human user, an agent
acting on queries, or an external resource (knowledge base, tool, model).
Names are case-sensitive and unique within their kind; the same name may
exist under two different kinds without conflict.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import UnknownPrincipal


class PrincipalKind(str, Enum):
    USER = "user"
    AGENT = "agent"
    RESOURCE = "resource"


@dataclass(frozen=True, order=True)
class PrincipalId:
    """Identity of a user, agent, or resource."""

    kind: PrincipalKind
    name: str

    def __post_init__(self) -> None:
        if not isinstance(self.kind, PrincipalKind):
            object.__setattr__(self, "kind", PrincipalKind(self.kind))
        if not self.name:
            raise ValueError("principal name must be non-empty")

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.name}"


def user(name: str) -> PrincipalId:
    return PrincipalId(PrincipalKind.USER, name)


def agent(name: str) -> PrincipalId:
    return PrincipalId(PrincipalKind.AGENT, name)


def resource(name: str) -> PrincipalId:
    return PrincipalId(PrincipalKind.RESOURCE, name)


class PrincipalDirectory:
    """Registry of known principals.

    Registration is idempotent: registering an already-known name returns
    the existing identity. Operations elsewhere call :meth:`require` to
    reject ids that were never registered.
    """

    def __init__(self) -> None:
        self._known: dict[PrincipalKind, dict[str, PrincipalId]] = {
            kind: {} for kind in PrincipalKind
        }

    def register(self, pid: PrincipalId) -> PrincipalId:
        table = self._known[pid.kind]
        existing = table.get(pid.name)
        if existing is not None:
            return existing
        table[pid.name] = pid
        return pid

    def add_user(self, name: str) -> PrincipalId:
        return self.register(user(name))

    def add_agent(self, name: str) -> PrincipalId:
        return self.register(agent(name))

    def add_resource(self, name: str) -> PrincipalId:
        return self.register(resource(name))

    @property
    def users(self) -> tuple[PrincipalId, ...]:
        return tuple(sorted(self._known[PrincipalKind.USER].values()))

    @property
    def agents(self) -> tuple[PrincipalId, ...]:
        return tuple(sorted(self._known[PrincipalKind.AGENT].values()))

    @property
    def resources(self) -> tuple[PrincipalId, ...]:
        return tuple(sorted(self._known[PrincipalKind.RESOURCE].values()))

    def known(self, pid: PrincipalId) -> bool:
        return pid.name in self._known[pid.kind]

    def require(self, pid: PrincipalId, kind: PrincipalKind | None = None) -> PrincipalId:
        """Return ``pid`` if registered (and of ``kind``, when given)."""
        if kind is not None and pid.kind is not kind:
            raise UnknownPrincipal(f"{pid} is not a {kind.value}")
        if not self.known(pid):
            raise UnknownPrincipal(f"{pid} is not registered")
        return pid

    def lookup(self, kind: PrincipalKind, name: str) -> PrincipalId:
        try:
            return self._known[kind][name]
        except KeyError:
            raise UnknownPrincipal(f"{kind.value}:{name} is not registered") from None
