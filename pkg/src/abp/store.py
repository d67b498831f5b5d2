"""Runtime pool of business-object instances.

Agents touch instances only through CRUDA operations guarded by their
declared capabilities. Nothing is ever erased: deletes leave a tombstone
in the append-only archive.
"""

from __future__ import annotations

import copy
import json
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType

from .model import Capability

START_PRODUCER = "start"


class InstanceState(str, Enum):
    AVAILABLE = "available"
    CONSUMED = "consumed"
    ARCHIVED = "archived"
    DELETED = "deleted"


_TRANSITIONS = {
    InstanceState.AVAILABLE: {InstanceState.CONSUMED, InstanceState.ARCHIVED, InstanceState.DELETED},
    InstanceState.CONSUMED: {InstanceState.ARCHIVED},
    InstanceState.ARCHIVED: set(),
    InstanceState.DELETED: set(),
}


class StoreError(Exception):
    pass


class CapabilityViolation(StoreError):
    def __init__(self, actor: str, op: Capability):
        self.actor = actor
        self.op = op
        super().__init__(f"{actor} lacks capability {op.value}")


class NotAvailable(StoreError):
    pass


class UnknownInstance(StoreError, KeyError):
    pass


@dataclass(frozen=True)
class ObjectInstance:
    instance_id: str
    type_id: str
    variant: str | None
    payload: Mapping[str, str]
    producer: str
    step: int
    state: InstanceState = InstanceState.AVAILABLE

    def to_dict(self) -> dict:
        return {
            "id": self.instance_id,
            "object": self.type_id,
            "variant": self.variant,
            "payload": dict(sorted(self.payload.items())),
            "producer": self.producer,
            "step": self.step,
            "state": self.state.value,
        }


@dataclass(frozen=True)
class NewInstance:
    """CREATE target: the instance to bring into existence."""

    type_id: str
    variant: str | None = None
    payload: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ArchiveEntry:
    step: int
    instance: ObjectInstance
    reason: str

    def to_dict(self) -> dict:
        return {"step": self.step, "reason": self.reason, "instance": self.instance.to_dict()}


@dataclass(frozen=True)
class StoreView:
    instances: tuple[ObjectInstance, ...]
    archive: tuple[ArchiveEntry, ...]

    def __len__(self) -> int:
        return len(self.instances)

    def by_state(self, state: InstanceState) -> tuple[ObjectInstance, ...]:
        return tuple(i for i in self.instances if i.state is state)

    def to_dict(self) -> dict:
        return {
            "instances": [i.to_dict() for i in self.instances],
            "archive": [e.to_dict() for e in self.archive],
        }


class ObjectStore:
    def __init__(self, capabilities: Mapping[str, frozenset[Capability]]):
        self._caps = dict(capabilities)
        self._instances: dict[str, ObjectInstance] = {}
        self._archive: list[ArchiveEntry] = []
        self._seq = 0
        self.step = 0

    def __len__(self) -> int:
        return len(self._instances)

    def __contains__(self, instance_id: str) -> bool:
        return instance_id in self._instances

    def __getitem__(self, instance_id: str) -> ObjectInstance:
        try:
            return self._instances[instance_id]
        except KeyError:
            raise UnknownInstance(instance_id) from None

    def __iter__(self):
        return iter(self._instances.values())

    def copy(self) -> ObjectStore:
        return copy.copy(self)._cloned()

    def _cloned(self) -> ObjectStore:
        self._instances = dict(self._instances)
        self._archive = list(self._archive)
        return self

    @property
    def archive(self) -> tuple[ArchiveEntry, ...]:
        return tuple(self._archive)

    def available(self) -> list[ObjectInstance]:
        return [i for i in self._instances.values() if i.state is InstanceState.AVAILABLE]

    def seed(self, type_id: str, variant: str | None = None, payload: Mapping[str, str] | None = None) -> str:
        """Bring a boundary (start or resource) instance into the pool."""
        return self._put(START_PRODUCER, NewInstance(type_id, variant, payload or {}))

    def _put(self, producer: str, new: NewInstance) -> str:
        self._seq += 1
        iid = f"{new.type_id}#{self._seq}"
        self._instances[iid] = ObjectInstance(
            iid, new.type_id, new.variant, MappingProxyType(dict(new.payload)), producer, self.step,
        )
        return iid

    def _move(self, iid: str, state: InstanceState) -> ObjectInstance:
        inst = self[iid]
        if state not in _TRANSITIONS[inst.state]:
            raise NotAvailable(f"{iid} is {inst.state.value}, cannot become {state.value}")
        inst = replace(inst, state=state)
        self._instances[iid] = inst
        return inst

    def _available(self, iid) -> ObjectInstance:
        inst = self[iid]
        if inst.state is not InstanceState.AVAILABLE:
            raise NotAvailable(f"{iid} is {inst.state.value}")
        return inst

    def apply_operation(self, actor: str, op: Capability, target):
        """Run one CRUDA operation on behalf of ``actor``.

        ``target`` is a :class:`NewInstance` for CREATE, an
        ``(instance_id, changes)`` pair for UPDATE and an instance id
        otherwise. Returns the new id (CREATE), the payload (READ) or the
        target id. Fails before any mutation when the guard or the target
        state forbids the operation.
        """
        if op not in self._caps.get(actor, frozenset()):
            raise CapabilityViolation(actor, op)
        if op is Capability.CREATE:
            if not isinstance(target, NewInstance):
                raise TypeError("CREATE needs a NewInstance target")
            return self._put(actor, target)
        if op is Capability.UPDATE:
            target, changes = target
            inst = self._available(target)
            payload = {**inst.payload, **changes}
            self._instances[target] = replace(inst, payload=MappingProxyType(payload))
            return target
        inst = self._available(target)
        if op is Capability.READ:
            return inst.payload
        if op is Capability.DELETE:
            self._archive.append(ArchiveEntry(self.step, self._move(target, InstanceState.DELETED), "deleted"))
        elif op is Capability.ARCHIVE:
            self._archive.append(ArchiveEntry(self.step, self._move(target, InstanceState.ARCHIVED), "archived"))
        return target

    def consume(self, iid: str) -> None:
        self._move(iid, InstanceState.CONSUMED)

    def archive_consumed(self) -> list[str]:
        moved = []
        for iid, inst in list(self._instances.items()):
            if inst.state is InstanceState.CONSUMED:
                self._archive.append(ArchiveEntry(self.step, self._move(iid, InstanceState.ARCHIVED), "consumed"))
                moved.append(iid)
        return moved

    def snapshot(self) -> StoreView:
        return StoreView(tuple(self._instances.values()), tuple(self._archive))

    def to_json(self) -> str:
        return json.dumps(self.snapshot().to_dict(), sort_keys=True)
