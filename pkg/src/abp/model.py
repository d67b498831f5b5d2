"""Domain types for agent-based business processes and the rules that
match object references against each other and against runtime instances.

Everything here is immutable once built. ``assemble_spec`` is the single
entry point that turns raw, document-shaped input into a resolved
:class:`AbpSpec`; it only checks references and structure; semantic
checks live in :mod:`abp.validator`.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Any

START = "Start"
END = "End"
RESERVED_GOAL_IDS = frozenset({START, END})


class Capability(str, Enum):
    CREATE = "CREATE"
    READ = "READ"
    UPDATE = "UPDATE"
    DELETE = "DELETE"
    ARCHIVE = "ARCHIVE"


class ObjectKind(str, Enum):
    DOCUMENT = "document"
    MESSAGE = "message"
    RECORD = "record"


class FlowType(str, Enum):
    AND = "AND"
    OR = "OR"
    XOR = "XOR"


@dataclass(frozen=True)
class ObjectType:
    id: str
    kind: ObjectKind = ObjectKind.DOCUMENT
    variants: tuple[str, ...] = ()
    physical: bool = False


@dataclass(frozen=True, order=True)
class ObjectRef:
    """Reference to an object type, optionally constrained to variant tags.

    ``variant`` is ``None`` for "any"; otherwise the set of allowed tags.
    """

    object: str
    variant: frozenset[str] | None = None

    @classmethod
    def parse(cls, text: str) -> ObjectRef:
        """Parse slash notation: ``obj``, ``obj/TAG`` or ``obj/T1|T2``."""
        obj, sep, tags = text.strip().partition("/")
        if not sep:
            return cls(obj)
        return cls(obj, frozenset(t.strip() for t in tags.split("|")))

    def __str__(self) -> str:
        if self.variant is None:
            return self.object
        return f"{self.object}/{'|'.join(sorted(self.variant))}"

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(sorted(self.variant)) if self.variant is not None else ()


@dataclass(frozen=True)
class AgentSpec:
    id: str
    capabilities: frozenset[Capability]
    triggers: tuple[ObjectRef, ...]
    finals: tuple[ObjectRef, ...]
    goal: str
    resources: tuple[ObjectRef, ...] = ()
    behavior: str = "stub"

    @property
    def scope(self) -> frozenset[str]:
        """Object ids in scope of the agent: triggers, resources and finals."""
        return frozenset(r.object for r in (*self.triggers, *self.resources, *self.finals))


@dataclass(frozen=True)
class GoalSpec:
    id: str
    objects: tuple[ObjectRef, ...]
    split: FlowType = FlowType.AND
    merge: FlowType = FlowType.AND


@dataclass(frozen=True)
class AbpSpec:
    name: str
    objects: tuple[ObjectType, ...]
    goals: tuple[GoalSpec, ...]
    agents: tuple[AgentSpec, ...]
    start_objects: tuple[ObjectRef, ...]
    end_objects: tuple[ObjectRef, ...]
    resource_objects: tuple[ObjectRef, ...] = ()
    capabilities: frozenset[Capability] = frozenset()
    allow_start_production: bool = False
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        index = {
            "objects": {o.id: o for o in self.objects},
            "goals": {g.id: g for g in self.goals},
            "agents": {a.id: a for a in self.agents},
        }
        object.__setattr__(self, "_index", index)

    def object_type(self, object_id: str) -> ObjectType:
        return self._index["objects"][object_id]

    def goal(self, goal_id: str) -> GoalSpec:
        return self._index["goals"][goal_id]

    def agent(self, agent_id: str) -> AgentSpec:
        return self._index["agents"][agent_id]

    def has_goal(self, goal_id: str) -> bool:
        return goal_id in self._index["goals"]

    def possible_tags(self, ref: ObjectRef) -> tuple[str | None, ...]:
        """Concrete variant tags an instance matching ``ref`` may carry."""
        declared = self.object_type(ref.object).variants
        if not declared:
            return (None,)
        if ref.variant is None:
            return declared
        return tuple(t for t in declared if t in ref.variant)


def seed_ref(spec: AbpSpec, ref: ObjectRef) -> ObjectRef:
    """The concrete reference a boundary instance is seeded as: the first
    allowed tag in ascending order, or no tag for plain objects."""
    tag = spec.possible_tags(ref)[0] if spec.possible_tags(ref) else None
    return ObjectRef(ref.object, None if tag is None else frozenset([tag]))


def ref_matches(ref: ObjectRef, instance: Any) -> bool:
    """True when ``instance`` (anything with ``type_id`` and ``variant``)
    satisfies ``ref``."""
    if ref.object != instance.type_id:
        return False
    return ref.variant is None or instance.variant in ref.variant


def refs_overlap(a: ObjectRef, b: ObjectRef) -> bool:
    """Some instance could satisfy both references."""
    if a.object != b.object:
        return False
    if a.variant is None or b.variant is None:
        return True
    return bool(a.variant & b.variant)


def refs_disjoint(a: ObjectRef, b: ObjectRef) -> bool:
    # Same object, both constrained, no common tag.
    return (
        a.object == b.object
        and a.variant is not None
        and b.variant is not None
        and not (a.variant & b.variant)
    )


def covers(pool: Iterable[ObjectRef], triggers: Iterable[ObjectRef]) -> bool:
    pool = tuple(pool)
    return all(any(refs_overlap(p, t) for p in pool) for t in triggers)


def trigger_goal_candidates(
    triggers: Sequence[ObjectRef],
    goals: Iterable[GoalSpec],
    start_objects: Sequence[ObjectRef],
) -> list[str]:
    """Goals (``Start`` included) whose object set can satisfy every trigger."""
    found = [START] if covers(start_objects, triggers) else []
    found.extend(g.id for g in goals if covers(g.objects, triggers))
    return found


def agents_variant_disjoint(a: AgentSpec, b: AgentSpec) -> bool:
    """The two agents can never be woken by the same instance set."""
    return any(refs_disjoint(x, y) for x in a.triggers for y in b.triggers)


def default_split(outgoing: Sequence[AgentSpec]) -> FlowType:
    if len(outgoing) > 1 and all(
        agents_variant_disjoint(a, b) for a, b in combinations(outgoing, 2)
    ):
        return FlowType.XOR
    return FlowType.AND


# -- assembly -----------------------------------------------------------------

Location = tuple[Any, ...]


@dataclass(frozen=True)
class SpecIssue:
    code: str
    token: str
    location: Location
    message: str
    line: int | None = None
    column: int | None = None

    def __str__(self) -> str:
        where = ".".join(str(p) for p in self.location) or "<document>"
        if self.line is not None:
            where = f"{self.line}:{self.column} ({where})"
        return f"{self.code}: {self.message} [{where}]"


class AssemblyError(ValueError):
    """Raised by :func:`assemble_spec` with every issue found."""

    def __init__(self, issues: Sequence[SpecIssue]):
        self.issues = list(issues)
        super().__init__("\n".join(str(i) for i in self.issues))


class _Collector:
    def __init__(self) -> None:
        self.issues: list[SpecIssue] = []

    def add(self, code: str, token: Any, location: Location, message: str) -> None:
        self.issues.append(SpecIssue(code, str(token), tuple(location), message))

    def structure(self, location: Location, message: str) -> None:
        self.add("InvalidStructure", location[-1] if location else "", location, message)


def _as_list(raw: Any, loc: Location, out: _Collector, *, required: bool = True) -> list:
    if raw is None and not required:
        return []
    if not isinstance(raw, list):
        out.structure(loc, f"expected a list at {'.'.join(map(str, loc))}")
        return []
    return raw


def _token(raw: Any, loc: Location, out: _Collector) -> str | None:
    if not isinstance(raw, str) or not raw.strip() or raw != raw.strip():
        out.structure(loc, f"expected a non-empty identifier, got {raw!r}")
        return None
    return raw


def _enum(enum_cls: type[Enum], raw: Any, loc: Location, out: _Collector, default=None):
    if raw is None and default is not None:
        return default
    try:
        return enum_cls(raw.upper() if enum_cls is not ObjectKind and isinstance(raw, str) else raw)
    except (ValueError, AttributeError):
        allowed = ", ".join(m.value for m in enum_cls)
        out.structure(loc, f"{raw!r} is not one of {allowed}")
        return None


def _ref(raw: Any, loc: Location, out: _Collector, objects: Mapping[str, ObjectType]) -> ObjectRef | None:
    if isinstance(raw, str):
        ref = ObjectRef.parse(raw)
    elif isinstance(raw, Mapping):
        obj = _token(raw.get("object"), (*loc, "object"), out)
        if obj is None:
            return None
        variant = raw.get("variant", "any")
        if variant == "any" or variant is None:
            ref = ObjectRef(obj)
        elif isinstance(variant, str):
            ref = ObjectRef(obj, frozenset([variant]))
        elif isinstance(variant, list) and variant and all(isinstance(v, str) for v in variant):
            ref = ObjectRef(obj, frozenset(variant))
        else:
            out.structure((*loc, "variant"), f"bad variant constraint {variant!r}")
            return None
    else:
        out.structure(loc, f"expected an object reference, got {raw!r}")
        return None
    if ref.object not in objects:
        out.add("UnknownObjectRef", ref.object, loc, f"unknown object {ref.object!r}")
        return None
    declared = objects[ref.object].variants
    for tag in sorted(ref.variant or ()):
        if tag not in declared:
            out.add(
                "UndeclaredVariant", f"{ref.object}/{tag}", loc,
                f"variant {tag!r} is not declared on object {ref.object!r}",
            )
            return None
    return ref


def _refs(raw: Any, loc: Location, out: _Collector, objects, *, required=True) -> tuple[ObjectRef, ...]:
    refs = []
    for i, item in enumerate(_as_list(raw, loc, out, required=required)):
        ref = _ref(item, (*loc, i), out, objects)
        if ref is not None:
            refs.append(ref)
    return tuple(refs)


def _capabilities(raw: Any, loc: Location, out: _Collector) -> frozenset[Capability]:
    caps = set()
    for i, item in enumerate(_as_list(raw, loc, out)):
        cap = _enum(Capability, item, (*loc, i), out)
        if cap is not None:
            caps.add(cap)
    return frozenset(caps)


def assemble_spec(raw: Mapping[str, Any]) -> AbpSpec:
    """Build a reference-resolved :class:`AbpSpec` from document-shaped input.

    ``raw`` follows the ``.abp.json`` layout. Raises :class:`AssemblyError`
    listing every problem; never returns a partial spec.
    """
    out = _Collector()
    if not isinstance(raw, Mapping):
        out.structure((), "document root must be an object")
        raise AssemblyError(out.issues)

    name = raw.get("name", "")
    if not isinstance(name, str):
        out.structure(("name",), "name must be text")
        name = ""

    objects: dict[str, ObjectType] = {}
    for i, item in enumerate(_as_list(raw.get("objects"), ("objects",), out)):
        loc = ("objects", i)
        if not isinstance(item, Mapping):
            out.structure(loc, "object entry must be a mapping")
            continue
        oid = _token(item.get("id"), (*loc, "id"), out)
        kind = _enum(ObjectKind, item.get("kind"), (*loc, "kind"), out, default=ObjectKind.DOCUMENT)
        variants = _as_list(item.get("variants"), (*loc, "variants"), out, required=False)
        tags = []
        for j, tag in enumerate(variants):
            tag = _token(tag, (*loc, "variants", j), out)
            if tag is None:
                continue
            if tag in tags:
                out.add("DuplicateId", tag, (*loc, "variants", j), f"variant {tag!r} declared twice on {oid!r}")
            elif tag == "any":
                out.structure((*loc, "variants", j), "'any' is reserved and cannot be a variant tag")
            else:
                tags.append(tag)
        physical = item.get("physical", False)
        if not isinstance(physical, bool):
            out.structure((*loc, "physical"), "physical must be a boolean")
            physical = False
        if oid is None or kind is None:
            continue
        if oid in objects:
            out.add("DuplicateId", oid, (*loc, "id"), f"object {oid!r} declared twice")
            continue
        objects[oid] = ObjectType(oid, kind, tuple(sorted(tags)), physical)

    raw_goals = []
    goal_ids: set[str] = set()
    for i, item in enumerate(_as_list(raw.get("goals"), ("goals",), out)):
        loc = ("goals", i)
        if not isinstance(item, Mapping):
            out.structure(loc, "goal entry must be a mapping")
            continue
        gid = _token(item.get("id"), (*loc, "id"), out)
        refs = _refs(item.get("objects"), (*loc, "objects"), out, objects)
        if not refs and isinstance(item.get("objects"), list) and not item["objects"]:
            out.structure((*loc, "objects"), f"goal {gid!r} must name at least one object")
        split = _enum(FlowType, item.get("split"), (*loc, "split"), out) if item.get("split") is not None else None
        merge = _enum(FlowType, item.get("merge"), (*loc, "merge"), out, default=FlowType.AND)
        if gid is None:
            continue
        if gid in RESERVED_GOAL_IDS:
            out.structure((*loc, "id"), f"goal id {gid!r} is reserved")
            continue
        if gid in goal_ids:
            out.add("DuplicateId", gid, (*loc, "id"), f"goal {gid!r} declared twice")
            continue
        goal_ids.add(gid)
        raw_goals.append((gid, refs, split, merge))

    agents: dict[str, AgentSpec] = {}
    for i, item in enumerate(_as_list(raw.get("agents"), ("agents",), out)):
        loc = ("agents", i)
        if not isinstance(item, Mapping):
            out.structure(loc, "agent entry must be a mapping")
            continue
        aid = _token(item.get("id"), (*loc, "id"), out)
        caps = _capabilities(item.get("capabilities"), (*loc, "capabilities"), out)
        triggers = _refs(item.get("triggers"), (*loc, "triggers"), out, objects)
        resources = _refs(item.get("resources"), (*loc, "resources"), out, objects, required=False)
        finals = _refs(item.get("finals"), (*loc, "finals"), out, objects)
        goal = _token(item.get("goal"), (*loc, "goal"), out)
        behavior = item.get("behavior", "stub")
        if not isinstance(behavior, str) or not behavior:
            out.structure((*loc, "behavior"), "behavior must be a non-empty name")
            behavior = "stub"
        if aid is None:
            continue
        if goal is not None and goal not in goal_ids:
            out.add("UnknownGoalRef", goal, (*loc, "goal"), f"agent {aid} names unknown goal {goal!r}")
        for key, value in (("capabilities", caps), ("triggers", triggers), ("finals", finals)):
            if not value and isinstance(item.get(key), list) and not item[key]:
                out.structure((*loc, key), f"agent {aid} must declare at least one of {key}")
        roles = [("triggers", triggers), ("resources", resources), ("finals", finals)]
        for (n1, r1), (n2, r2) in combinations(roles, 2):
            shared = {r.object for r in r1} & {r.object for r in r2}
            for obj in sorted(shared):
                out.structure((*loc, n2), f"agent {aid} uses {obj!r} both in {n1} and {n2}")
        if aid in agents:
            out.add("DuplicateId", aid, (*loc, "id"), f"agent {aid!r} declared twice")
            continue
        agents[aid] = AgentSpec(aid, caps, triggers, finals, goal or "", resources, behavior)

    start = _refs(raw.get("start_objects"), ("start_objects",), out, objects)
    end = _refs(raw.get("end_objects"), ("end_objects",), out, objects)
    res = _refs(raw.get("resource_objects"), ("resource_objects",), out, objects, required=False)
    if isinstance(raw.get("start_objects"), list) and not raw["start_objects"]:
        out.structure(("start_objects",), "OS must be non-empty")
    if isinstance(raw.get("end_objects"), list) and not raw["end_objects"]:
        out.structure(("end_objects",), "OE must be non-empty")
    caps = _capabilities(raw.get("capabilities", []), ("capabilities",), out)
    allow = raw.get("allow_start_production", False)
    if not isinstance(allow, bool):
        out.structure(("allow_start_production",), "allow_start_production must be a boolean")
        allow = False
    if not allow:
        start_ids = {r.object for r in start}
        for aid, agent in agents.items():
            for obj in sorted(start_ids & {r.object for r in agent.finals}):
                out.structure(
                    ("agents", aid, "finals"),
                    f"agent {aid} produces start object {obj!r} (set allow_start_production to permit)",
                )

    if out.issues:
        raise AssemblyError(out.issues)

    partial_goals = [GoalSpec(gid, refs) for gid, refs, _, _ in raw_goals]
    goals = []
    for gid, refs, split, merge in raw_goals:
        if split is None:
            outgoing = [
                a for a in agents.values()
                if trigger_goal_candidates(a.triggers, partial_goals, start) == [gid]
            ]
            split = default_split(sorted(outgoing, key=lambda a: a.id))
        goals.append(GoalSpec(gid, refs, split, merge))

    return AbpSpec(
        name=name,
        objects=tuple(sorted(objects.values(), key=lambda o: o.id)),
        goals=tuple(sorted(goals, key=lambda g: g.id)),
        agents=tuple(sorted(agents.values(), key=lambda a: a.id)),
        start_objects=start,
        end_objects=end,
        resource_objects=res,
        capabilities=caps,
        allow_start_production=allow,
    )
