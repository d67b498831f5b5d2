"""``abp`` command line: validate, graph, simulate, enumerate, import-table.

Exit codes: 0 ok / valid / completed; 1 valid with warnings / step limit;
2 invalid spec / deadlock; 3 I/O, syntax or scenario errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .engine import (
    DEFAULT_STEP_LIMIT,
    EngineError,
    InvalidSpec,
    PolicyError,
    ScriptedPolicy,
    SeededPolicy,
    Status,
    UnusedDecisions,
    enumerate_runs,
    init_state,
    run,
)
from .export import DotOptions, precedence_listing, to_dot, trace_to_jsonl
from .graph import build_goal_graph, derive_precedence
from .model import AssemblyError
from .specio import ImportHints, SpecSyntaxError, load_agent_table, load_spec, serialize_spec
from .validator import Verdict, validate_spec

EXIT_OK, EXIT_WARN, EXIT_INVALID, EXIT_IO = 0, 1, 2, 3
VERDICT_EXIT = {Verdict.VALID: EXIT_OK, Verdict.VALID_WITH_WARNINGS: EXIT_WARN, Verdict.INVALID: EXIT_INVALID}
STATUS_EXIT = {Status.COMPLETED: EXIT_OK, Status.STEP_LIMIT: EXIT_WARN, Status.DEADLOCK: EXIT_INVALID}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_IO):
        self.code = code
        super().__init__(message)


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load(path: str):
    try:
        spec = load_spec(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    except SpecSyntaxError as exc:
        raise CliError(f"{path}: syntax error: {exc}") from None
    except AssemblyError as exc:
        raise CliError(f"{path}: unresolved references:\n{exc}", EXIT_INVALID) from None
    return spec, build_goal_graph(spec)


def cmd_validate(args) -> int:
    spec, graph = _load(args.spec)
    report = validate_spec(spec, graph)
    sys.stdout.write(report.to_json() if args.json else report.to_table())
    return VERDICT_EXIT[report.verdict]


def cmd_graph(args) -> int:
    spec, graph = _load(args.spec)
    options = DotOptions(show_objects=args.show_objects, rankdir=args.rankdir)
    dot = to_dot(graph, spec, options)
    if args.dot:
        _write(args.dot, dot)
    if args.dot or args.closure:
        sys.stdout.write(precedence_listing(derive_precedence(graph, closure=args.closure)))
    else:
        sys.stdout.write(dot)
    return EXIT_OK


def _policy(args):
    if args.scenario:
        try:
            entries = json.loads(Path(args.scenario).read_text(encoding="utf-8"))
        except OSError as exc:
            raise CliError(f"cannot read scenario {args.scenario}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.scenario}: {exc}") from None
        if not isinstance(entries, list):
            raise CliError(f"{args.scenario}: scenario must be a JSON list")
        return ScriptedPolicy.from_scenario(entries)
    seed = args.seed
    if seed is None:
        env = os.environ.get("ABP_SEED", "0")
        try:
            seed = int(env)
        except ValueError:
            raise CliError(f"ABP_SEED must be an integer, got {env!r}") from None
    return SeededPolicy(seed)


def cmd_simulate(args) -> int:
    spec, graph = _load(args.spec)
    policy = _policy(args)
    try:
        trace = run(init_state(spec, graph, policy, args.max_steps, force=args.force))
    except InvalidSpec as exc:
        sys.stderr.write(exc.report.to_table())
        raise CliError("refusing to simulate an invalid spec (use --force)", EXIT_INVALID) from None
    except UnusedDecisions as exc:
        raise CliError(str(exc)) from None
    except PolicyError as exc:
        raise CliError(f"scenario: {exc}") from None
    except EngineError as exc:
        raise CliError(str(exc)) from None
    text = trace_to_jsonl(trace)
    if args.trace:
        _write(args.trace, text)
        sys.stdout.write(f"{trace.status.value}: {' -> '.join(trace.fired()) or '(nothing fired)'}\n")
    else:
        sys.stdout.write(text)
    return STATUS_EXIT[trace.status]


def cmd_enumerate(args) -> int:
    spec, graph = _load(args.spec)
    try:
        runs = enumerate_runs(spec, graph, max_steps=args.max_steps, force=args.force)
    except InvalidSpec as exc:
        sys.stderr.write(exc.report.to_table())
        raise CliError("refusing to enumerate an invalid spec (use --force)", EXIT_INVALID) from None
    except EngineError as exc:
        raise CliError(str(exc)) from None
    if args.json:
        payload = [
            {"status": t.status.value, "fired": t.fired(), "choices": [[s, p] for s, p in t.choices()]}
            for t in runs
        ]
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        for n, trace in enumerate(runs, start=1):
            choices = ", ".join(f"{site}={'|'.join(p) if isinstance(p, tuple) else p}" for site, p in trace.choices())
            sys.stdout.write(
                f"run {n}: {trace.status.value}  {' -> '.join(trace.fired())}  [{choices or 'no choices'}]\n"
            )
        sys.stdout.write(f"{len(runs)} run(s)\n")
    return EXIT_OK


def cmd_import_table(args) -> int:
    name = args.name or Path(args.table).name.split(".")[0]
    try:
        spec = load_agent_table(args.table, ImportHints(name=name))
    except OSError as exc:
        raise CliError(f"cannot read {args.table}: {exc.strerror}") from None
    except SpecSyntaxError as exc:
        raise CliError(f"{args.table}: syntax error: {exc}") from None
    except (AssemblyError, ValueError) as exc:
        raise CliError(f"{args.table}: {exc}", EXIT_INVALID) from None
    _write(args.output, serialize_spec(spec))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abp", description="Goal-driven agent-based business processes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="run the static checks and print the report")
    p.add_argument("spec")
    p.add_argument("--json", action="store_true", help="emit the report as JSON")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("graph", help="emit the goal graph as DOT and/or the precedence relation")
    p.add_argument("spec")
    p.add_argument("--dot", metavar="OUT", help="write DOT to OUT and list the precedence relation")
    p.add_argument("--closure", action="store_true", help="list the transitive closure of precedence")
    p.add_argument("--show-objects", action="store_true", help="draw released objects as boxes")
    p.add_argument("--rankdir", choices=("LR", "TB"), default="LR")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("simulate", help="execute one case and emit its trace")
    p.add_argument("spec")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--seed", type=int, help="seed for the random choice policy (default: $ABP_SEED or 0)")
    group.add_argument("--scenario", metavar="FILE", help="JSON list of scripted decisions")
    p.add_argument("--max-steps", type=int, default=DEFAULT_STEP_LIMIT)
    p.add_argument("--trace", metavar="OUT", help="write the JSONL trace to OUT")
    p.add_argument("--force", action="store_true", help="run even if validation finds errors")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("enumerate", help="list every maximal run")
    p.add_argument("spec")
    p.add_argument("--max-steps", type=int, default=DEFAULT_STEP_LIMIT)
    p.add_argument("--json", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("import-table", help="build a spec from an agent table (CSV)")
    p.add_argument("table")
    p.add_argument("-o", "--output", help="write the spec document here (default: stdout)")
    p.add_argument("--name", help="process name (default: file stem)")
    p.set_defaults(func=cmd_import_table)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_IO if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"abp: {exc}\n")
        return exc.code
    except OSError as exc:
        sys.stderr.write(f"abp: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
