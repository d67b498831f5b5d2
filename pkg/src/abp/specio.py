"""Reading and writing ABP documents (``.abp.json``) and importing the
compact agent table (``.abp.csv``)."""

from __future__ import annotations

import csv
import io
import json
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from importlib import resources
from json.decoder import scanstring

from .model import (
    AbpSpec,
    AssemblyError,
    Capability,
    ObjectRef,
    SpecIssue,
    assemble_spec,
)

TABLE_HEADER = ("Agent ID", "Competences", "Trigger objects", "Final objects", "Goal")
REQUIRED_KEYS = ("name", "objects", "goals", "agents", "start_objects", "end_objects")
DEFAULT_AGENT_CAPABILITIES = frozenset({Capability.CREATE, Capability.READ})


class SpecSyntaxError(ValueError):
    """Malformed document; carries the position of the problem."""

    code = "SyntaxError"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" at {line}:{column}" if line is not None else ""
        super().__init__(f"{message}{where}")


class DuplicateAgentId(ValueError):
    pass


class ConflictingVariantUse(ValueError):
    pass


# -- position index ---------------------------------------------------------------

_NUMBER = re.compile(r"-?(?:0|[1-9]\d*)(?:\.\d+)?(?:[eE][-+]?\d+)?")
_WS = re.compile(r"\s*")


def _position_index(text: str) -> dict[tuple, int]:
    """Map every JSON path (keys and list indices) to its value's offset.

    Only runs on text that already parsed, so it can assume validity.
    """
    index: dict[tuple, int] = {}

    def skip(i: int) -> int:
        return _WS.match(text, i).end()

    def value(i: int, path: tuple) -> int:
        i = skip(i)
        index[path] = i
        ch = text[i]
        if ch == "{":
            i = skip(i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                key, i = scanstring(text, skip(i) + 1)
                i = skip(i) + 1  # colon
                i = skip(value(i, (*path, key)))
                if text[i] == "}":
                    return i + 1
                i += 1
        if ch == "[":
            i = skip(i + 1)
            if text[i] == "]":
                return i + 1
            n = 0
            while True:
                i = skip(value(i, (*path, n)))
                n += 1
                if text[i] == "]":
                    return i + 1
                i += 1
        if ch == '"':
            return scanstring(text, i + 1)[1]
        for literal in ("true", "false", "null"):
            if text.startswith(literal, i):
                return i + len(literal)
        return _NUMBER.match(text, i).end()

    value(0, ())
    return index


def _line_col(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    return line, offset - (text.rfind("\n", 0, offset) + 1) + 1


def _locate(issue: SpecIssue, index: Mapping[tuple, int], text: str, raw) -> SpecIssue:
    path = list(issue.location)
    # agent-keyed locations name the agent id; translate to its list index
    if len(path) >= 2 and path[0] == "agents" and isinstance(path[1], str):
        for i, a in enumerate(raw.get("agents", [])):
            if isinstance(a, Mapping) and a.get("id") == path[1]:
                path[1] = i
                break
    while path and tuple(path) not in index:
        path.pop()
    line, col = _line_col(text, index.get(tuple(path), 0))
    return replace(issue, line=line, column=col)


# -- JSON document -----------------------------------------------------------------


def parse_spec(text: str) -> AbpSpec:
    """Parse a ``.abp.json`` document into a resolved spec.

    Raises :class:`SpecSyntaxError` for malformed documents and
    :class:`AssemblyError` (issues carrying line/column) for bad references.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(raw, dict):
        raise SpecSyntaxError("document root must be a JSON object", 1, 1)
    index = _position_index(text)
    for key in REQUIRED_KEYS:
        if key not in raw:
            raise SpecSyntaxError(f"missing top-level key {key!r}", 1, 1)
    try:
        return assemble_spec(raw)
    except AssemblyError as exc:
        raise AssemblyError([_locate(i, index, text, raw) for i in exc.issues]) from None


def load_spec(path) -> AbpSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())


def ref_to_json(ref: ObjectRef) -> dict:
    if ref.variant is None:
        variant = "any"
    elif len(ref.variant) == 1:
        (variant,) = ref.variant
    else:
        variant = sorted(ref.variant)
    return {"object": ref.object, "variant": variant}


def spec_to_dict(spec: AbpSpec) -> dict:
    doc = {
        "name": spec.name,
        "objects": [
            {"id": o.id, "kind": o.kind.value, "variants": list(o.variants), "physical": o.physical}
            for o in sorted(spec.objects, key=lambda o: o.id)
        ],
        "goals": [
            {
                "id": g.id,
                "objects": [ref_to_json(r) for r in g.objects],
                "split": g.split.value,
                "merge": g.merge.value,
            }
            for g in sorted(spec.goals, key=lambda g: g.id)
        ],
        "agents": [
            {
                "id": a.id,
                "capabilities": sorted(c.value for c in a.capabilities),
                "triggers": [ref_to_json(r) for r in a.triggers],
                "resources": [ref_to_json(r) for r in a.resources],
                "finals": [ref_to_json(r) for r in a.finals],
                "goal": a.goal,
                "behavior": a.behavior,
            }
            for a in sorted(spec.agents, key=lambda a: a.id)
        ],
        "start_objects": [ref_to_json(r) for r in spec.start_objects],
        "end_objects": [ref_to_json(r) for r in spec.end_objects],
        "resource_objects": [ref_to_json(r) for r in spec.resource_objects],
        "capabilities": sorted(c.value for c in spec.capabilities),
    }
    if spec.allow_start_production:
        doc["allow_start_production"] = True
    return doc


def serialize_spec(spec: AbpSpec) -> str:
    """Canonical, byte-stable document text for ``spec``."""
    return json.dumps(spec_to_dict(spec), indent=2, ensure_ascii=False) + "\n"


# -- agent table -------------------------------------------------------------------


@dataclass(frozen=True)
class AgentTableRow:
    agent_id: str
    competences: str
    trigger_objects: tuple[str, ...]
    final_objects: tuple[str, ...]
    goal: str


@dataclass
class ImportHints:
    """Facts the table cannot express: names, kinds, physical objects,
    capabilities and explicit variant sets."""

    name: str = ""
    kinds: Mapping[str, str] = field(default_factory=dict)
    physical: Iterable[str] = ()
    variants: Mapping[str, Sequence[str]] = field(default_factory=dict)
    agent_capabilities: Mapping[str, Iterable[str]] = field(default_factory=dict)
    capabilities: Iterable[str] | None = None


def _split_cell(cell: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in cell.split(";") if p.strip())


def read_agent_table(text: str) -> list[AgentTableRow]:
    """Rows of a ``.abp.csv`` file (header row required, ``;`` inside cells)."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = tuple(h.strip() for h in next(reader))
    except StopIteration:
        raise SpecSyntaxError("empty agent table", 1, 1) from None
    if header != TABLE_HEADER:
        raise SpecSyntaxError(f"table header must be {','.join(TABLE_HEADER)}", 1, 1)
    rows = []
    for lineno, cells in enumerate(reader, start=2):
        if not any(c.strip() for c in cells):
            continue
        if len(cells) != len(TABLE_HEADER):
            raise SpecSyntaxError(f"expected {len(TABLE_HEADER)} cells, found {len(cells)}", lineno, 1)
        aid, comp, trig, fin, goal = (c.strip() for c in cells)
        rows.append(AgentTableRow(aid, comp, _split_cell(trig), _split_cell(fin), goal))
    return rows


def import_agent_table(rows: Sequence[AgentTableRow], hints: ImportHints | None = None) -> AbpSpec:
    """Synthesize a full spec from the agent table alone.

    Objects and their variants come from the slash notation, goal object
    sets are the union of their agents' finals, start objects are triggers
    nobody produces and end objects are finals nobody consumes.
    """
    hints = hints or ImportHints()
    if not rows:
        raise ValueError("agent table is empty")
    seen: set[str] = set()
    for row in rows:
        if row.agent_id in seen:
            raise DuplicateAgentId(row.agent_id)
        seen.add(row.agent_id)

    order: list[str] = []
    tags: dict[str, set[str]] = {}
    parsed = []
    for row in rows:
        refs = []
        for cells in (row.trigger_objects, row.final_objects):
            group = []
            for cell in cells:
                obj, sep, tail = cell.partition("/")
                if sep and (not tail or any(not t.strip() or t.strip() == "any" for t in tail.split("|"))):
                    raise ConflictingVariantUse(f"{row.agent_id}: malformed variant in {cell!r}")
                ref = ObjectRef.parse(cell)
                if ref.object not in tags:
                    order.append(ref.object)
                    tags[ref.object] = set()
                tags[ref.object] |= ref.variant or set()
                group.append(ref)
            refs.append(group)
        parsed.append((row, *refs))

    for obj, declared in hints.variants.items():
        used = tags.get(obj, set())
        if not used <= set(declared):
            raise ConflictingVariantUse(
                f"{obj}: table uses variants {sorted(used - set(declared))} not in the declared set"
            )
        tags[obj] = set(declared)

    produced = {r.object for _, _, finals in parsed for r in finals}
    consumed = {r.object for _, triggers, _ in parsed for r in triggers}
    start = [o for o in order if o in consumed and o not in produced]
    end = [o for o in order if o in produced and o not in consumed]

    goal_objects: dict[str, list[dict]] = {}
    agents = []
    all_caps: set[str] = set()
    for row, triggers, finals in parsed:
        caps = sorted(hints.agent_capabilities.get(row.agent_id, [c.value for c in DEFAULT_AGENT_CAPABILITIES]))
        all_caps.update(caps)
        bucket = goal_objects.setdefault(row.goal, [])
        for ref in finals:
            as_json = ref_to_json(ref)
            if as_json not in bucket:
                bucket.append(as_json)
        agents.append({
            "id": row.agent_id,
            "capabilities": caps,
            "triggers": [ref_to_json(r) for r in triggers],
            "finals": [ref_to_json(r) for r in finals],
            "goal": row.goal,
        })

    physical = set(hints.physical)
    raw = {
        "name": hints.name,
        "objects": [
            {
                "id": o,
                "kind": hints.kinds.get(o, "document"),
                "variants": sorted(tags[o]),
                "physical": o in physical,
            }
            for o in order
        ],
        "goals": [{"id": g, "objects": objs, "merge": "AND"} for g, objs in goal_objects.items()],
        "agents": agents,
        "start_objects": [{"object": o, "variant": "any"} for o in start],
        "end_objects": [{"object": o, "variant": "any"} for o in end],
        "resource_objects": [],
        "capabilities": sorted(hints.capabilities if hints.capabilities is not None else all_caps),
    }
    return assemble_spec(raw)


def load_agent_table(path, hints: ImportHints | None = None) -> AbpSpec:
    with open(path, encoding="utf-8", newline="") as fh:
        return import_agent_table(read_agent_table(fh.read()), hints)


def fixture_text(name: str) -> str:
    """Text of a fixture shipped with the package (e.g. ``pizza.abp.json``)."""
    return resources.files("abp.fixtures").joinpath(name).read_text(encoding="utf-8")


def pizza_spec() -> AbpSpec:
    return parse_spec(fixture_text("pizza.abp.json"))
