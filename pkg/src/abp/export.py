"""Graphviz DOT rendering of goal graphs and JSONL (de)serialization of traces."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .engine import AgentFired, Trace, TraceHeader, event_from_dict
from .graph import GoalGraph
from .model import END, START, AbpSpec

_BARE_ID = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_KEYWORDS = {"node", "edge", "graph", "digraph", "subgraph", "strict"}


def dot_id(name: str) -> str:
    if _BARE_ID.match(name) and name.lower() not in _KEYWORDS:
        return name
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _attrs(**attrs) -> str:
    return "[" + ", ".join(f"{k}={dot_id(str(v))}" for k, v in attrs.items()) + "]"


@dataclass(frozen=True)
class DotOptions:
    show_objects: bool = False
    rankdir: str = "LR"
    highlight_trace: Trace | None = None


def edge_label(spec: AbpSpec, agent_id: str) -> str:
    """``aID``, or ``aID [TAG]`` when the agent's triggers carry variant constraints."""
    agent = spec.agent(agent_id)
    tags = ", ".join("|".join(r.tags) for r in agent.triggers if r.variant is not None)
    return f"{agent_id} [{tags}]" if tags else agent_id


def object_node(object_id: str) -> str:
    return f"obj:{object_id}"


def to_dot(graph: GoalGraph, spec: AbpSpec, options: DotOptions = DotOptions()) -> str:
    """Render goals as ellipses and agents as labelled arcs.

    Goals that can hold an end object get a plain arc to the ``End`` node.
    With ``show_objects`` each agent arc also gets a dashed arc from its
    target goal to a box per released object.
    """
    if options.rankdir not in ("LR", "TB"):
        raise ValueError(f"rankdir must be LR or TB, not {options.rankdir!r}")
    fired = set()
    if options.highlight_trace is not None:
        fired = {e.agent for e in options.highlight_trace.events if isinstance(e, AgentFired)}

    lines = [f"digraph {dot_id(spec.name or 'abp')} {{", f"  rankdir={options.rankdir};", "  node [shape=ellipse];"]
    lines.append(f"  {START} {_attrs(shape='point', xlabel=START)};")
    lines.append(f"  {END} {_attrs(shape='doublecircle', label='')};")
    for goal in graph.goals:
        lines.append(f"  {dot_id(goal)};")
    released = sorted({r.object for e in graph.edges for r in spec.agent(e.agent).finals})
    if options.show_objects:
        for obj in released:
            lines.append(f"  {dot_id(object_node(obj))} {_attrs(shape='box', label=obj)};")

    for e in graph.edges:
        attrs = {"label": edge_label(spec, e.agent)}
        if e.agent in fired:
            attrs.update(color="red", penwidth="2")
        lines.append(f"  {dot_id(e.source)} -> {dot_id(e.target)} {_attrs(**attrs)};")
        if options.show_objects:
            for obj in dict.fromkeys(r.object for r in spec.agent(e.agent).finals):
                lines.append(
                    f"  {dot_id(e.target)} -> {dot_id(object_node(obj))} {_attrs(style='dashed', label=e.agent)};"
                )
    for goal in graph.terminals:
        lines.append(f"  {dot_id(goal)} -> {END} {_attrs(arrowhead='none', color='gray')};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def precedence_listing(pairs) -> str:
    return "".join(f"pre({a}, {b})\n" for a, b in sorted(pairs))


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def trace_to_jsonl(trace: Trace) -> str:
    """Header line followed by one JSON object per event."""
    lines = [_dumps(trace.header.to_dict())]
    lines.extend(_dumps(e.to_dict()) for e in trace.events)
    return "\n".join(lines) + "\n"


def trace_from_jsonl(text: str) -> Trace:
    rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not rows or rows[0].get("trace") != "abp":
        raise ValueError("not an abp trace: missing header line")
    return Trace(TraceHeader.from_dict(rows[0]), tuple(event_from_dict(r) for r in rows[1:]))


def events_jsonl(trace: Trace) -> str:
    """The event lines only; two runs of the same case agree on these
    byte for byte regardless of which policy drove them."""
    return "".join(_dumps(e.to_dict()) + "\n" for e in trace.events)
