"""Static consistency checks over a resolved spec and its goal graph."""

from __future__ import annotations

import json
from collections.abc import Iterable
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations

from .graph import GoalGraph, build_goal_graph, check_acyclic
from .model import (
    START,
    AbpSpec,
    FlowType,
    ObjectKind,
    ObjectRef,
    agents_variant_disjoint,
    refs_overlap,
    seed_ref,
)


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


class Verdict(str, Enum):
    VALID = "valid"
    VALID_WITH_WARNINGS = "valid-with-warnings"
    INVALID = "invalid"


CATALOG: dict[str, Severity] = {
    "E-DEAD-AGENT": Severity.ERROR,
    "E-CYCLE": Severity.ERROR,
    "E-GOAL-MISMATCH": Severity.ERROR,
    "E-UNREACHABLE-END": Severity.ERROR,
    "E-COVERING": Severity.ERROR,
    "E-AMBIGUOUS-TRIGGER": Severity.ERROR,
    "E-SCATTERED-TRIGGER": Severity.ERROR,
    "W-REDUNDANT-OBJECT": Severity.WARNING,
    "W-COVERING-SLACK": Severity.WARNING,
    "W-SPLIT-INCONSISTENT": Severity.WARNING,
    "W-PHYSICAL-NO-RECORD": Severity.WARNING,
}

_CORE = "Origin: core consistency rule of the process definition."
_EXTENDED = "Origin: structural check extrapolated from the formal model (not one of the two core rules)."

EXPLANATIONS: dict[str, str] = {
    "E-DEAD-AGENT": (
        "An agent wakes up only when all of its trigger objects are ready. At least one trigger "
        "object (with its variant constraint) is neither a start object nor released by any agent "
        "that can itself wake up, so this agent will never run. Remediation: add or fix a producing "
        "agent, add the object to the start objects, or correct the trigger's variant tag. " + _CORE
    ),
    "W-REDUNDANT-OBJECT": (
        "An object (or variant of it) released by some agent is never used as a trigger by a live "
        "agent, never read as a resource and is not an end object. It is produced for nobody. "
        "Remediation: drop it from the agent's final objects or declare it as an end object. " + _CORE
    ),
    "E-CYCLE": (
        "The precedence relation between goals contains a cycle, so goals cannot be arranged in a "
        "partial order and the ordering constraint between them cannot be respected. Remediation: "
        "break the cycle by changing an agent's trigger objects or goal. " + _EXTENDED
    ),
    "E-GOAL-MISMATCH": (
        "None of the agent's final objects belongs to the object set of the goal it declares, so "
        "the agent cannot contribute to that goal. Remediation: align the agent's final objects "
        "with its goal. " + _EXTENDED
    ),
    "E-UNREACHABLE-END": (
        "No agent reachable from the start node can release an end object, so no case can finish "
        "successfully. Remediation: connect a producer of an end object to the start. " + _EXTENDED
    ),
    "E-COVERING": (
        "Agents use capabilities the process does not declare; the agents must cover exactly the "
        "declared capability set. Remediation: declare the missing capabilities. " + _EXTENDED
    ),
    "W-COVERING-SLACK": (
        "The process declares capabilities that no agent holds. Remediation: remove them or assign "
        "them to an agent. " + _EXTENDED
    ),
    "W-SPLIT-INCONSISTENT": (
        "The goal is an exclusive (XOR) split, but two of its outgoing agents have overlapping "
        "trigger references on the same object and could both become ready from one instance; "
        "exclusivity then rests entirely on the choice policy. Remediation: constrain the triggers "
        "to disjoint variants or declare an AND/OR split. " + _EXTENDED
    ),
    "W-PHYSICAL-NO-RECORD": (
        "A physical object needs a digital image kept in parallel, normally a database record, but "
        "its kind is not 'record'. Remediation: set kind to record. " + _EXTENDED
    ),
    "E-AMBIGUOUS-TRIGGER": (
        "The agent's trigger objects are satisfiable by more than one goal, so the goal that wakes "
        "it cannot be derived. Remediation: use variant constraints or distinct objects. " + _EXTENDED
    ),
    "E-SCATTERED-TRIGGER": (
        "Each trigger object of the agent belongs to some goal, but no single goal holds all of "
        "them, so the agent has no well-defined trigger goal. Remediation: introduce a merge goal "
        "collecting those objects. " + _EXTENDED
    ),
}


class UnknownCode(KeyError):
    pass


def explain_finding(code: str) -> str:
    try:
        return EXPLANATIONS[code]
    except KeyError:
        raise UnknownCode(code) from None


@dataclass(frozen=True)
class Finding:
    code: str
    subject: str
    message: str
    related: tuple[str, ...] = ()

    @property
    def severity(self) -> Severity:
        return CATALOG[self.code]

    def sort_key(self):
        return (self.severity is not Severity.ERROR, self.code, self.subject, self.related)

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "severity": self.severity.value,
            "subject": self.subject,
            "message": self.message,
            "related": list(self.related),
        }


@dataclass(frozen=True)
class ValidationReport:
    spec_name: str
    findings: tuple[Finding, ...] = field(default_factory=tuple)

    @property
    def verdict(self) -> Verdict:
        if any(f.severity is Severity.ERROR for f in self.findings):
            return Verdict.INVALID
        if self.findings:
            return Verdict.VALID_WITH_WARNINGS
        return Verdict.VALID

    @property
    def codes(self) -> list[str]:
        return [f.code for f in self.findings]

    def subjects(self, code: str) -> set[str]:
        return {f.subject for f in self.findings if f.code == code}

    def to_dict(self) -> dict:
        return {
            "spec": self.spec_name,
            "verdict": self.verdict.value,
            "findings": [f.to_dict() for f in self.findings],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        lines = [f"{self.spec_name or '<unnamed>'}: {self.verdict.value}"]
        if not self.findings:
            return lines[0] + "\n"
        rows = [(f.severity.value, f.code, f.subject, f.message) for f in self.findings]
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        for row in rows:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)) + "  " + row[3])
        return "\n".join(lines) + "\n"


def live_agents(spec: AbpSpec) -> set[str]:
    """Agents that can eventually wake up, by fixpoint from the start objects."""
    pool: list[ObjectRef] = [seed_ref(spec, r) for r in spec.start_objects]
    alive: set[str] = set()
    changed = True
    while changed:
        changed = False
        for agent in spec.agents:
            if agent.id in alive:
                continue
            if all(any(refs_overlap(p, t) for p in pool) for t in agent.triggers):
                alive.add(agent.id)
                pool.extend(agent.finals)
                changed = True
    return alive


def _overlaps_any(ref: ObjectRef, pool: Iterable[ObjectRef]) -> bool:
    return any(refs_overlap(ref, p) for p in pool)


def _dead_agents(spec: AbpSpec, alive: set[str]) -> list[Finding]:
    start = [seed_ref(spec, r) for r in spec.start_objects]
    findings = []
    for agent in spec.agents:
        if agent.id in alive:
            continue
        live_pool = start + [f for a in spec.agents if a.id in alive for f in a.finals]
        starved = [t for t in agent.triggers if not _overlaps_any(t, live_pool)]
        producers = sorted({
            a.id for a in spec.agents
            if a.id != agent.id and any(_overlaps_any(t, a.finals) for t in starved)
        })
        if producers:
            why = f"its producers ({', '.join(producers)}) can never wake up"
        else:
            why = "nothing produces them"
        findings.append(Finding(
            "E-DEAD-AGENT", agent.id,
            f"agent {agent.id} never wakes up: trigger(s) {', '.join(map(str, starved))} unavailable, {why}",
            tuple(str(t) for t in starved),
        ))
    return findings


def _redundant_objects(spec: AbpSpec, alive: set[str]) -> list[Finding]:
    consumers = [t for a in spec.agents if a.id in alive for t in a.triggers]
    consumers += [r for a in spec.agents for r in a.resources]
    consumers += list(spec.end_objects)
    unused: dict[str, set] = {}
    for agent in spec.agents:
        for ref in agent.finals:
            for tag in spec.possible_tags(ref):
                unit = ObjectRef(ref.object, None if tag is None else frozenset([tag]))
                if not _overlaps_any(unit, consumers):
                    unused.setdefault(ref.object, set()).add(tag)
    findings = []
    for obj, tags in sorted(unused.items()):
        tagged = sorted(t for t in tags if t is not None)
        label = f"{obj} (variant {', '.join(tagged)})" if tagged else obj
        findings.append(Finding(
            "W-REDUNDANT-OBJECT", obj,
            f"{label} is released but never triggers a live agent, is never a resource and is not an end object",
            tuple(tagged),
        ))
    return findings


def _reachable_agents(graph: GoalGraph) -> set[str]:
    reached_goals, agents = {START}, set()
    frontier = [START]
    while frontier:
        goal = frontier.pop()
        for e in graph.outgoing(goal):
            agents.add(e.agent)
            if e.target not in reached_goals:
                reached_goals.add(e.target)
                frontier.append(e.target)
    return agents


def validate_spec(spec: AbpSpec, graph: GoalGraph | None = None) -> ValidationReport:
    """Run the full check catalog. Pure: equal inputs give equal reports."""
    if graph is None:
        graph = build_goal_graph(spec)
    alive = live_agents(spec)
    findings: list[Finding] = []
    findings += _dead_agents(spec, alive)
    findings += _redundant_objects(spec, alive)

    acyclic = check_acyclic(graph)
    if not acyclic.acyclic:
        cycle = acyclic.cycle
        findings.append(Finding(
            "E-CYCLE", min(cycle[:-1]) if len(cycle) > 1 else cycle[0],
            f"goal precedence cycle: {' -> '.join(cycle)}", tuple(cycle),
        ))

    for agent in spec.agents:
        goal = spec.goal(agent.goal)
        if not any(refs_overlap(f, o) for f in agent.finals for o in goal.objects):
            findings.append(Finding(
                "E-GOAL-MISMATCH", agent.id,
                f"no final object of {agent.id} belongs to goal {goal.id}", (goal.id,),
            ))

    reachable = _reachable_agents(graph)
    produced = [f for a in spec.agents if a.id in reachable for f in a.finals]
    if not any(_overlaps_any(e, produced) for e in spec.end_objects):
        findings.append(Finding(
            "E-UNREACHABLE-END", "End",
            "no agent reachable from Start releases an end object",
            tuple(str(e) for e in spec.end_objects),
        ))

    used = frozenset(c for a in spec.agents for c in a.capabilities)
    missing = sorted(c.value for c in used - spec.capabilities)
    slack = sorted(c.value for c in spec.capabilities - used)
    if missing:
        findings.append(Finding(
            "E-COVERING", "C", f"agents use undeclared capabilities: {', '.join(missing)}", tuple(missing),
        ))
    if slack:
        findings.append(Finding(
            "W-COVERING-SLACK", "C", f"declared capabilities no agent holds: {', '.join(slack)}", tuple(slack),
        ))

    for goal in spec.goals:
        if goal.split is not FlowType.XOR:
            continue
        outgoing = sorted(e.agent for e in graph.outgoing(goal.id))
        for a_id, b_id in combinations(outgoing, 2):
            a, b = spec.agent(a_id), spec.agent(b_id)
            shared = any(refs_overlap(x, y) for x in a.triggers for y in b.triggers)
            if shared and not agents_variant_disjoint(a, b):
                findings.append(Finding(
                    "W-SPLIT-INCONSISTENT", goal.id,
                    f"XOR split {goal.id}: {a_id} and {b_id} can both be woken by the same instance",
                    (a_id, b_id),
                ))

    for obj in spec.objects:
        if obj.physical and obj.kind is not ObjectKind.RECORD:
            findings.append(Finding(
                "W-PHYSICAL-NO-RECORD", obj.id,
                f"physical object {obj.id} is a {obj.kind.value}, not a record", (),
            ))

    for agent_id, candidates in sorted(graph.ambiguous.items()):
        findings.append(Finding(
            "E-AMBIGUOUS-TRIGGER", agent_id,
            f"triggers of {agent_id} are satisfiable by goals {', '.join(candidates)}", candidates,
        ))
    for agent_id in graph.scattered:
        findings.append(Finding(
            "E-SCATTERED-TRIGGER", agent_id,
            f"no single goal holds all trigger objects of {agent_id}", (),
        ))

    return ValidationReport(spec.name, tuple(sorted(findings, key=Finding.sort_key)))
