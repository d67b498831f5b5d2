"""Case execution: token flow over the goal graph with split/merge semantics.

A case seeds the start objects, then repeatedly fires ready agents. Every
nondeterministic decision (variant of a released object, XOR pick, OR
subset) goes through a :class:`ChoicePolicy` and is logged as a
``ChoiceMade`` event, so any trace can be replayed exactly by feeding its
choices back as a scripted policy.
"""

from __future__ import annotations

import copy
import dataclasses
from collections import defaultdict
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, ClassVar

from .graph import GoalGraph, build_goal_graph
from .model import START, AbpSpec, AgentSpec, Capability, FlowType, ObjectRef, ref_matches, seed_ref
from .store import START_PRODUCER, InstanceState, NewInstance, ObjectInstance, ObjectStore
from .validator import ValidationReport, Verdict, validate_spec

MASK64 = (1 << 64) - 1
DEFAULT_STEP_LIMIT = 100


class Status(str, Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    DEADLOCK = "deadlock"
    STEP_LIMIT = "step-limit"


class EngineError(Exception):
    pass


class InvalidSpec(EngineError):
    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__(f"spec {report.spec_name!r} is invalid: {', '.join(report.codes)}")


class UnknownBehavior(EngineError):
    pass


class BoundsExceeded(EngineError):
    pass


class PolicyError(EngineError):
    pass


class PolicyExhausted(PolicyError):
    pass


class ScenarioMismatch(PolicyError):
    pass


class UnusedDecisions(PolicyError):
    def __init__(self, leftover, trace):
        self.leftover = leftover
        self.trace = trace
        super().__init__(f"{len(leftover)} scripted decision(s) left unused, next: {leftover[0][0]}")


# -- choice policies -----------------------------------------------------------


class SplitMix64:
    """SplitMix64 generator: 64-bit state, golden-gamma increment."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        return self.next() % n


def nonempty_subsets(options: Sequence[str]) -> list[tuple[str, ...]]:
    """Non-empty subsets in bitmask order (bit i selects ``options[i]``)."""
    return [
        tuple(o for i, o in enumerate(options) if mask >> i & 1)
        for mask in range(1, 1 << len(options))
    ]


def _candidates(options: Sequence[str], subset: bool, single: bool) -> list:
    if subset:
        return nonempty_subsets(options)
    if single:
        return [(o,) for o in options]
    return list(options)


class ChoicePolicy:
    """Resolves a choice among ``options`` at a named site.

    ``subset=True`` asks for a non-empty subset (OR split), ``single=True``
    for a one-element tuple (XOR split); otherwise one option is returned.
    """

    kind: str = "abstract"
    seed: int | None = None

    def choose(self, site: str, options: Sequence[str], *, subset: bool = False, single: bool = False):
        raise NotImplementedError

    def leftover(self) -> list:
        return []


class SeededPolicy(ChoicePolicy):
    kind = "seeded"

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.rng = SplitMix64(self.seed)

    def choose(self, site, options, *, subset=False, single=False):
        candidates = _candidates(options, subset, single)
        return candidates[self.rng.below(len(candidates))]


class ScriptedPolicy(ChoicePolicy):
    kind = "scripted"

    def __init__(self, decisions: Sequence[tuple[str, Any]]):
        self.decisions = [(site, pick) for site, pick in decisions]
        self.cursor = 0

    @classmethod
    def from_scenario(cls, entries: Sequence[Mapping[str, Any]]) -> ScriptedPolicy:
        try:
            return cls([(e["site"], e["pick"]) for e in entries])
        except (KeyError, TypeError) as exc:
            raise PolicyError(f"malformed scenario entry: {exc}") from None

    @classmethod
    def from_trace(cls, trace: Trace) -> ScriptedPolicy:
        return cls(trace.choices())

    def choose(self, site, options, *, subset=False, single=False):
        if self.cursor >= len(self.decisions):
            raise PolicyExhausted(f"no scripted decision for {site} (options {', '.join(options)})")
        expected, pick = self.decisions[self.cursor]
        if expected != site:
            raise ScenarioMismatch(f"scripted decision #{self.cursor + 1} is for {expected}, engine asks {site}")
        if subset or single:
            pick = (pick,) if isinstance(pick, str) else tuple(sorted(pick))
        if pick not in _candidates(options, subset, single):
            raise ScenarioMismatch(f"{site}: pick {pick!r} is not among {list(options)}")
        self.cursor += 1
        return pick

    def leftover(self) -> list:
        return self.decisions[self.cursor:]


class ProbePolicy(ChoicePolicy):
    """Follows a prefix of option indices, then always takes the first option;
    records every index taken and every choice width."""

    kind = "exhaustive-probe"

    def __init__(self, prefix: Sequence[int] = ()):
        self.prefix = list(prefix)
        self.taken: list[int] = []
        self.widths: list[int] = []

    def choose(self, site, options, *, subset=False, single=False):
        candidates = _candidates(options, subset, single)
        depth = len(self.taken)
        idx = self.prefix[depth] if depth < len(self.prefix) else 0
        self.taken.append(idx)
        self.widths.append(len(candidates))
        return candidates[idx]


# -- trace ---------------------------------------------------------------------

EVENT_TYPES: dict[str, type] = {}


def _event(cls):
    cls = dataclass(frozen=True)(cls)
    EVENT_TYPES[cls.__name__ if cls.name is None else cls.name] = cls
    return cls


class Event:
    name: ClassVar[str | None] = None
    terminal: ClassVar[bool] = False

    @property
    def event(self) -> str:
        return self.name or type(self).__name__

    def to_dict(self) -> dict:
        return {"event": self.event, **dataclasses.asdict(self)}


@_event
class Seeded(Event):
    step: int
    instances: list
    resources: list


@_event
class ChoiceMade(Event):
    step: int
    site: str
    options: list
    picked: Any


@_event
class AgentFired(Event):
    step: int
    agent: str
    consumed: list
    released: list


@_event
class GoalAchieved(Event):
    step: int
    goal: str
    contributors: list
    instances: list


@_event
class TraceWarning(Event):
    name = "Warning"
    step: int
    code: str
    subject: str
    related: list


@_event
class Completed(Event):
    terminal = True
    step: int
    end_objects: list
    store: dict


@_event
class Deadlocked(Event):
    terminal = True
    step: int
    pending: dict
    store: dict


@_event
class StepLimit(Event):
    terminal = True
    step: int
    ready: list
    store: dict


def event_from_dict(data: Mapping[str, Any]) -> Event:
    data = dict(data)
    cls = EVENT_TYPES[data.pop("event")]
    return cls(**data)


_STATUS_OF = {"Completed": Status.COMPLETED, "Deadlocked": Status.DEADLOCK, "StepLimit": Status.STEP_LIMIT}


@dataclass(frozen=True)
class TraceHeader:
    spec: str
    policy: str
    seed: int | None
    step_limit: int

    def to_dict(self) -> dict:
        return {"trace": "abp", **dataclasses.asdict(self)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TraceHeader:
        return cls(data["spec"], data["policy"], data["seed"], data["step_limit"])


@dataclass(frozen=True)
class Trace:
    header: TraceHeader
    events: tuple[Event, ...]

    @property
    def status(self) -> Status:
        if self.events and self.events[-1].terminal:
            return _STATUS_OF[self.events[-1].event]
        return Status.RUNNING

    def choices(self) -> list[tuple[str, Any]]:
        return [
            (e.site, tuple(e.picked) if isinstance(e.picked, list) else e.picked)
            for e in self.events if isinstance(e, ChoiceMade)
        ]

    def fired(self) -> list[str]:
        return [e.agent for e in self.events if isinstance(e, AgentFired)]

    def of(self, kind: type) -> list:
        return [e for e in self.events if isinstance(e, kind)]


# -- behaviors -----------------------------------------------------------------


class FiringContext:
    """What a behavior sees while its agent fires: the bound trigger and
    resource instances plus guarded CRUDA operations on the store."""

    def __init__(self, state: ExecutionState, agent: AgentSpec, triggers, resources, events: list):
        self.state = state
        self.agent = agent
        self.triggers: tuple[ObjectInstance, ...] = tuple(triggers)
        self.resources: tuple[ObjectInstance, ...] = tuple(resources)
        self.released: list[str] = []
        self._events = events

    @property
    def store(self) -> ObjectStore:
        return self.state.store

    def _op(self, op: Capability, target):
        return self.store.apply_operation(self.agent.id, op, target)

    def read(self, iid: str):
        return self._op(Capability.READ, iid)

    def update(self, iid: str, changes: Mapping[str, str]) -> str:
        return self._op(Capability.UPDATE, (iid, changes))

    def delete(self, iid: str) -> str:
        return self._op(Capability.DELETE, iid)

    def archive(self, iid: str) -> str:
        return self._op(Capability.ARCHIVE, iid)

    def create(self, type_id: str, variant: str | None = None, payload: Mapping[str, str] | None = None) -> str:
        iid = self._op(Capability.CREATE, NewInstance(type_id, variant, payload or {}))
        self.released.append(iid)
        return iid

    def choose_variant(self, ref: ObjectRef) -> str | None:
        tags = self.state.spec.possible_tags(ref)
        if len(tags) == 1:
            return tags[0]
        site = f"agent:{self.agent.id}:{ref.object}"
        picked = self.state.policy.choose(site, tags)
        self._events.append(ChoiceMade(self.state.step_no, site, list(tags), picked))
        return picked

    def release(self, ref: ObjectRef, payload: Mapping[str, str] | None = None) -> str:
        return self.create(ref.object, self.choose_variant(ref), payload)


def stub_behavior(ctx: FiringContext) -> None:
    """Read the resources, then release one instance per final reference."""
    for inst in ctx.resources:
        ctx.read(inst.instance_id)
    for ref in ctx.agent.finals:
        ctx.release(ref, {"released_by": ctx.agent.id})


Behavior = Callable[[FiringContext], None]
BEHAVIORS: dict[str, Behavior] = {"stub": stub_behavior}


def register_behavior(name: str, behavior: Behavior) -> None:
    BEHAVIORS[name] = behavior


# -- state and stepping ----------------------------------------------------------


@dataclass
class ExecutionState:
    spec: AbpSpec
    graph: GoalGraph
    store: ObjectStore
    policy: ChoicePolicy
    step_limit: int = DEFAULT_STEP_LIMIT
    fired: set[str] = field(default_factory=set)
    disabled: set[str] = field(default_factory=set)
    achieved: set[str] = field(default_factory=lambda: {START})
    released: dict[str, list[str]] = field(default_factory=dict)
    contributors: dict[str, tuple[str, ...]] = field(default_factory=dict)
    step_no: int = 0
    status: Status = Status.RUNNING
    events: list[Event] = field(default_factory=list)

    def _clone(self) -> ExecutionState:
        return dataclasses.replace(
            self,
            store=self.store.copy(),
            policy=copy.deepcopy(self.policy),
            fired=set(self.fired),
            disabled=set(self.disabled),
            achieved=set(self.achieved),
            released=dict(self.released),
            contributors=dict(self.contributors),
            events=list(self.events),
        )

    def header(self) -> TraceHeader:
        return TraceHeader(self.spec.name, self.policy.kind, self.policy.seed, self.step_limit)

    def trace(self) -> Trace:
        return Trace(self.header(), tuple(self.events))


def init_state(
    spec: AbpSpec,
    graph: GoalGraph | None = None,
    policy: ChoicePolicy | None = None,
    step_limit: int = DEFAULT_STEP_LIMIT,
    *,
    force: bool = False,
) -> ExecutionState:
    """Seed a fresh case: one instance per start object and per process
    resource object. Refuses invalid specs unless ``force``."""
    graph = graph or build_goal_graph(spec)
    if not force:
        report = validate_spec(spec, graph)
        if report.verdict is Verdict.INVALID:
            raise InvalidSpec(report)
    for agent in spec.agents:
        if agent.behavior not in BEHAVIORS:
            raise UnknownBehavior(f"agent {agent.id}: no behavior registered as {agent.behavior!r}")
    store = ObjectStore({a.id: a.capabilities for a in spec.agents})
    state = ExecutionState(spec, graph, store, policy or SeededPolicy(0), step_limit)
    seeded = [store.seed(r.object, next(iter(seed_ref(spec, r).variant or [None]))) for r in spec.start_objects]
    resources = [
        store.seed(r.object, next(iter(seed_ref(spec, r).variant or [None]))) for r in spec.resource_objects
    ]
    state.events.append(Seeded(0, seeded, resources))
    return state


def _bind(refs: Sequence[ObjectRef], pool: Sequence[ObjectInstance]) -> list[str] | None:
    """Injective assignment of refs to instances, earliest instances first."""
    chosen: list[str] = []

    def search(i: int) -> bool:
        if i == len(refs):
            return True
        for inst in pool:
            if inst.instance_id not in chosen and ref_matches(refs[i], inst):
                chosen.append(inst.instance_id)
                if search(i + 1):
                    return True
                chosen.pop()
        return False

    return chosen if search(0) else None


def _eligible(state: ExecutionState, agent: AgentSpec) -> bool:
    source = state.graph.trigger_map.get(agent.id)
    return (
        agent.id not in state.fired
        and agent.id not in state.disabled
        and source is not None
        and source in state.achieved
    )


def _ready(state: ExecutionState) -> dict[str, list[str]]:
    pool = state.store.available()
    ready = {}
    for agent in state.spec.agents:
        if _eligible(state, agent):
            binding = _bind(agent.triggers, pool)
            if binding is not None:
                ready[agent.id] = binding
    return ready


def ready_agents(state: ExecutionState) -> frozenset[str]:
    """Unfired, enabled agents whose trigger goal is achieved and whose
    trigger refs match distinct available instances."""
    return frozenset(_ready(state))


def _split_type(state: ExecutionState, goal: str) -> FlowType:
    if goal == START or len(state.graph.outgoing(goal)) < 2:
        return FlowType.AND
    return state.spec.goal(goal).split


def _merge_type(state: ExecutionState, goal: str) -> FlowType:
    if len(state.graph.incoming(goal)) < 2:
        return FlowType.AND
    return state.spec.goal(goal).merge


def _pending(state: ExecutionState) -> dict[str, str]:
    pool = state.store.available()
    pending = {}
    for agent in state.spec.agents:
        if agent.id in state.fired or agent.id in state.disabled:
            continue
        source = state.graph.trigger_map.get(agent.id)
        if source is None:
            pending[agent.id] = "no trigger goal"
        elif source not in state.achieved:
            pending[agent.id] = f"waiting for goal {source}"
        else:
            missing = [str(r) for r in agent.triggers if not any(ref_matches(r, i) for i in pool)]
            pending[agent.id] = f"trigger objects unavailable: {', '.join(missing) or 'no distinct match'}"
    return pending


def _finish(state: ExecutionState) -> Event:
    ends = [
        inst.instance_id for inst in state.store
        if inst.producer != START_PRODUCER
        and inst.state in (InstanceState.AVAILABLE, InstanceState.ARCHIVED)
        and any(ref_matches(r, inst) for r in state.spec.end_objects)
    ]
    snapshot = state.store.snapshot().to_dict()
    if ends:
        state.status = Status.COMPLETED
        return Completed(state.step_no, ends, snapshot)
    state.status = Status.DEADLOCK
    return Deadlocked(state.step_no, _pending(state), snapshot)


def _resources_for(agent: AgentSpec, pool: Sequence[ObjectInstance]) -> list[ObjectInstance]:
    found, used = [], set()
    for ref in agent.resources:
        for inst in pool:
            if inst.instance_id not in used and ref_matches(ref, inst):
                found.append(inst)
                used.add(inst.instance_id)
                break
    return found


def step(state: ExecutionState) -> list[Event]:
    """Advance the case by one step and return the events it produced.

    Runs on a working copy; any exception (capability violation, policy
    failure) leaves ``state`` untouched.
    """
    if state.status is not Status.RUNNING:
        raise EngineError(f"case is {state.status.value}")
    ready = _ready(state)
    if not ready:
        event = _finish(state)
        state.events.append(event)
        return [event]
    if state.step_no >= state.step_limit:
        state.status = Status.STEP_LIMIT
        event = StepLimit(state.step_no, sorted(ready), state.store.snapshot().to_dict())
        state.events.append(event)
        return [event]

    work = state._clone()
    work.step_no += 1
    work.store.step = work.step_no
    events: list[Event] = []

    groups: dict[str, list[str]] = defaultdict(list)
    for aid in ready:
        groups[work.graph.trigger_map[aid]].append(aid)
    order = sorted(groups, key=lambda g: (g != START, g))
    selected: list[str] = []
    for goal in order:
        members = sorted(groups[goal])
        split = _split_type(work, goal)
        site = f"goal:{goal}"
        if split is FlowType.XOR:
            picked = tuple(members)
            if len(members) > 1:
                picked = work.policy.choose(site, members, single=True)
                events.append(ChoiceMade(work.step_no, site, members, list(picked)))
            work.disabled.update(e.agent for e in work.graph.outgoing(goal) if e.agent not in picked)
        elif split is FlowType.OR and len(members) > 1:
            picked = work.policy.choose(site, members, subset=True)
            events.append(ChoiceMade(work.step_no, site, members, list(picked)))
            work.disabled.update(m for m in members if m not in picked)
        else:
            picked = tuple(members)
        selected.extend(picked)

    achieved_before = set(work.achieved)
    for aid in sorted(selected):
        agent = work.spec.agent(aid)
        binding = ready[aid]
        ctx = FiringContext(
            work, agent,
            [work.store[i] for i in binding],
            _resources_for(agent, work.store.available()),
            events,
        )
        BEHAVIORS[agent.behavior](ctx)
        work.fired.add(aid)
        work.released[aid] = list(ctx.released)
        events.append(AgentFired(work.step_no, aid, list(binding), list(ctx.released)))

    for iid in sorted({i for aid in selected for i in ready[aid]}, key=_seq):
        if work.store[iid].state is InstanceState.AVAILABLE:
            work.store.consume(iid)

    events.extend(_achieve(work))
    for aid in sorted(selected):
        target = work.spec.agent(aid).goal
        if (
            target in achieved_before
            and _merge_type(work, target) is FlowType.XOR
            and aid not in work.contributors.get(target, ())
        ):
            events.append(TraceWarning(work.step_no, "W-XOR-MERGE-REFIRE", target, [aid]))
    work.store.archive_consumed()

    work.events.extend(events)
    state.__dict__.update(work.__dict__)
    return events


def _seq(iid: str) -> int:
    return int(iid.rsplit("#", 1)[1])


def _achieve(state: ExecutionState) -> list[Event]:
    events: list[Event] = []
    for goal in state.spec.goals:
        if goal.id in state.achieved:
            continue
        incoming = [e.agent for e in state.graph.incoming(goal.id)]
        if not incoming:
            continue

        def matching(aid: str) -> list[str]:
            return [
                i for i in state.released.get(aid, ())
                if any(ref_matches(r, state.store[i]) for r in goal.objects)
            ]

        if _merge_type(state, goal.id) is FlowType.AND:
            if not all(a in state.fired for a in incoming):
                continue
            produced = [state.store[i] for a in incoming for i in matching(a)]
            if not all(any(ref_matches(r, inst) for inst in produced) for r in goal.objects):
                continue
            contributors = sorted(incoming)
        else:
            contributors = sorted(a for a in incoming if a in state.fired and matching(a))
            if not contributors:
                continue
        instances = sorted((i for a in contributors for i in matching(a)), key=_seq)
        state.achieved.add(goal.id)
        state.contributors[goal.id] = tuple(contributors)
        events.append(GoalAchieved(state.step_no, goal.id, contributors, instances))
        if _merge_type(state, goal.id) is FlowType.XOR and len(contributors) > 1:
            events.append(TraceWarning(state.step_no, "W-XOR-MERGE-REFIRE", goal.id, contributors))
    return events


def run(state: ExecutionState) -> Trace:
    """Step until the case reaches a terminal status and return its trace."""
    while state.status is Status.RUNNING:
        step(state)
    trace = state.trace()
    leftover = state.policy.leftover()
    if leftover:
        raise UnusedDecisions(leftover, trace)
    return trace


def simulate(
    spec: AbpSpec,
    policy: ChoicePolicy | None = None,
    step_limit: int = DEFAULT_STEP_LIMIT,
    *,
    graph: GoalGraph | None = None,
    force: bool = False,
) -> Trace:
    return run(init_state(spec, graph, policy, step_limit, force=force))


def replay(spec: AbpSpec, trace: Trace, *, graph: GoalGraph | None = None, force: bool = False) -> Trace:
    """Re-execute ``trace``'s choices as a scripted policy."""
    return simulate(
        spec, ScriptedPolicy.from_trace(trace), trace.header.step_limit, graph=graph, force=force,
    )


def enumerate_runs(
    spec: AbpSpec,
    graph: GoalGraph | None = None,
    *,
    max_agents: int = 12,
    max_steps: int = DEFAULT_STEP_LIMIT,
    max_runs: int = 100_000,
    force: bool = False,
) -> list[Trace]:
    """Every maximal run, by depth-first exploration of all choice points.

    Runs are distinguished by their choice sequences and returned in
    lexicographic order of the option indices taken.
    """
    if len(spec.agents) > max_agents:
        raise BoundsExceeded(f"{len(spec.agents)} agents exceed the bound of {max_agents}")
    graph = graph or build_goal_graph(spec)
    if not force:
        report = validate_spec(spec, graph)
        if report.verdict is Verdict.INVALID:
            raise InvalidSpec(report)
    runs: list[Trace] = []
    prefix: list[int] = []
    while True:
        state = init_state(spec, graph, ProbePolicy(prefix), max_steps, force=True)
        trace = run(state)
        probe = state.policy
        if trace.status is Status.STEP_LIMIT:
            raise BoundsExceeded(f"a run did not terminate within {max_steps} steps")
        runs.append(trace)
        if len(runs) > max_runs:
            raise BoundsExceeded(f"more than {max_runs} runs")
        depth = len(probe.taken) - 1
        while depth >= 0 and probe.taken[depth] + 1 >= probe.widths[depth]:
            depth -= 1
        if depth < 0:
            return runs
        prefix = probe.taken[:depth] + [probe.taken[depth] + 1]
