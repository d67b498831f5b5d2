"""Goal-sequencing graph derived from agents' trigger objects.

Nodes are goals plus synthetic ``Start`` and ``End`` nodes; each agent is
one arc from the goal that wakes it to the goal it pursues.
"""

from __future__ import annotations

import graphlib
from collections import defaultdict, deque
from dataclasses import dataclass, field

from .model import (
    END,
    START,
    AbpSpec,
    FlowType,
    ObjectRef,
    covers,
    refs_overlap,
    trigger_goal_candidates,
)


class AmbiguousTriggerGoal(ValueError):
    def __init__(self, agent: str, candidates: tuple[str, ...]):
        self.agent = agent
        self.candidates = candidates
        super().__init__(f"triggers of {agent} are satisfiable by several goals: {', '.join(candidates)}")


class UnknownGoal(KeyError):
    pass


@dataclass(frozen=True, order=True)
class Edge:
    source: str
    agent: str
    target: str


@dataclass(frozen=True)
class GoalGraph:
    goals: tuple[str, ...]
    edges: tuple[Edge, ...]
    trigger_map: dict[str, str | None]
    pre: frozenset[tuple[str, str]]
    # agent -> candidate goals when several goals can wake it
    ambiguous: dict[str, tuple[str, ...]] = field(default_factory=dict)
    # agent -> trigger refs that no goal and no start object can satisfy
    orphans: dict[str, tuple[ObjectRef, ...]] = field(default_factory=dict)
    # agents whose triggers are each satisfiable, but by no single goal
    scattered: tuple[str, ...] = ()
    # goals whose object set can contain an end object
    terminals: tuple[str, ...] = ()

    @property
    def nodes(self) -> tuple[str, ...]:
        return (START, *self.goals, END)

    @property
    def detached(self) -> tuple[str, ...]:
        return tuple(sorted(a for a, src in self.trigger_map.items() if src is None))

    def outgoing(self, goal_id: str) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.source == goal_id)

    def incoming(self, goal_id: str) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.target == goal_id)

    def edge_of(self, agent_id: str) -> Edge | None:
        for e in self.edges:
            if e.agent == agent_id:
                return e
        return None


def build_goal_graph(spec: AbpSpec, *, strict: bool = False) -> GoalGraph:
    """Derive the goal graph of ``spec``.

    Agents that cannot be attached to exactly one trigger goal stay in
    ``trigger_map`` with ``None`` and are recorded as ambiguous, orphaned
    or scattered. With ``strict=True`` the first ambiguity raises
    :class:`AmbiguousTriggerGoal` instead.
    """
    edges = []
    trigger_map: dict[str, str | None] = {}
    ambiguous, orphans, scattered = {}, {}, []
    pools = [spec.start_objects, *(g.objects for g in spec.goals)]
    for agent in spec.agents:
        candidates = trigger_goal_candidates(agent.triggers, spec.goals, spec.start_objects)
        if len(candidates) == 1:
            trigger_map[agent.id] = candidates[0]
            edges.append(Edge(candidates[0], agent.id, agent.goal))
            continue
        trigger_map[agent.id] = None
        if candidates:
            if strict:
                raise AmbiguousTriggerGoal(agent.id, tuple(candidates))
            ambiguous[agent.id] = tuple(candidates)
            continue
        missing = tuple(t for t in agent.triggers if not any(covers(p, [t]) for p in pools))
        if missing:
            orphans[agent.id] = missing
        else:
            scattered.append(agent.id)

    terminals = tuple(
        g.id for g in spec.goals
        if any(refs_overlap(r, e) for r in g.objects for e in spec.end_objects)
    )
    edges.sort()
    return GoalGraph(
        goals=tuple(g.id for g in spec.goals),
        edges=tuple(edges),
        trigger_map=trigger_map,
        pre=frozenset((e.source, e.target) for e in edges),
        ambiguous=ambiguous,
        orphans=orphans,
        scattered=tuple(scattered),
        terminals=terminals,
    )


def transitive_closure(pairs) -> frozenset[tuple[str, str]]:
    succ = defaultdict(set)
    for a, b in pairs:
        succ[a].add(b)
    closure = set()
    for origin in list(succ):
        seen, queue = set(), deque(succ[origin])
        while queue:
            node = queue.popleft()
            if node in seen:
                continue
            seen.add(node)
            closure.add((origin, node))
            queue.extend(succ.get(node, ()))
    return frozenset(closure)


def derive_precedence(graph: GoalGraph, *, closure: bool = False) -> frozenset[tuple[str, str]]:
    """Direct precedence between goals, or its transitive closure."""
    direct = frozenset((e.source, e.target) for e in graph.edges)
    return transitive_closure(direct) if closure else direct


@dataclass(frozen=True)
class GoalClassification:
    goal_id: str
    outgoing: tuple[FlowType, frozenset[str]]
    incoming: tuple[FlowType, frozenset[str]]

    @property
    def is_split(self) -> bool:
        return len(self.outgoing[1]) > 1

    @property
    def is_merge(self) -> bool:
        return len(self.incoming[1]) > 1


def classify_goal(graph: GoalGraph, spec: AbpSpec, goal_id: str) -> GoalClassification:
    if goal_id != START and goal_id != END and goal_id not in graph.goals:
        raise UnknownGoal(goal_id)
    out = frozenset(e.agent for e in graph.outgoing(goal_id))
    inc = frozenset(e.agent for e in graph.incoming(goal_id))
    split = merge = FlowType.AND
    if spec.has_goal(goal_id):
        goal = spec.goal(goal_id)
        if len(out) > 1:
            split = goal.split
        if len(inc) > 1:
            merge = goal.merge
    return GoalClassification(goal_id, (split, out), (merge, inc))


@dataclass(frozen=True)
class Acyclicity:
    layers: tuple[tuple[str, ...], ...] = ()
    cycle: tuple[str, ...] = ()

    @property
    def acyclic(self) -> bool:
        return not self.cycle


def check_acyclic(graph: GoalGraph) -> Acyclicity:
    """Kahn layering of Start and the goals, or one cycle as a witness."""
    sorter = graphlib.TopologicalSorter()
    sorter.add(START)
    for g in graph.goals:
        sorter.add(g)
    for src, dst in derive_precedence(graph):
        sorter.add(dst, src)
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        # graphlib reports the cycle against dependency direction
        return Acyclicity(cycle=tuple(reversed(exc.args[1])))
    layers = []
    while sorter.is_active():
        ready = tuple(sorted(sorter.get_ready()))
        layers.append(ready)
        sorter.done(*ready)
    return Acyclicity(layers=tuple(layers))
