"""Goal-driven, agent-based business processes: specs, goal graphs,
static validation and deterministic case simulation."""

from .engine import (
    ChoicePolicy,
    ExecutionState,
    ProbePolicy,
    ScriptedPolicy,
    SeededPolicy,
    Status,
    Trace,
    enumerate_runs,
    init_state,
    ready_agents,
    register_behavior,
    replay,
    run,
    simulate,
    step,
)
from .graph import GoalGraph, build_goal_graph, check_acyclic, classify_goal, derive_precedence
from .model import (
    AbpSpec,
    AgentSpec,
    AssemblyError,
    Capability,
    FlowType,
    GoalSpec,
    ObjectKind,
    ObjectRef,
    ObjectType,
    assemble_spec,
    ref_matches,
)
from .specio import import_agent_table, parse_spec, pizza_spec, read_agent_table, serialize_spec
from .store import ObjectInstance, ObjectStore
from .validator import ValidationReport, explain_finding, validate_spec

__version__ = "0.1.0"
