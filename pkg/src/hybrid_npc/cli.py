"""Command line entry point: ``run``, ``plan``, ``goals`` and ``stub-server``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from .chat import DEFAULT_URL, ChatBackend, StubChatServer
from .goals import GoalError, builtin_registry, instantiate_all, load_registry
from .interface import BindingError, load_binding
from .pddl import PDDLError, parse_domain, parse_problem
from .planner import ResourceExhausted, SearchConfig, Unsolvable, solve
from .reasoner import RecordingBackend, ReplayBackend, ScriptedBackend
from .runner import AgentSpec, RunConfig, preset, run, trace_line
from .world import ScenarioError, load_scenario

EXIT_OK, EXIT_CONFIG, EXIT_UNSOLVABLE, EXIT_EXHAUSTED, EXIT_MAX_TICKS = 0, 1, 2, 3, 4

log = logging.getLogger("hybrid_npc")


class ConfigError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None


def make_backend(spec: str, args: argparse.Namespace):
    """Resolve ``scripted[:POLICY]``, ``llm[:URL]`` or ``replay:PATH``."""
    kind, _, rest = spec.partition(":")
    if kind == "scripted":
        try:
            return ScriptedBackend(rest or "first")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if kind == "llm":
        return ChatBackend(rest or args.llm_url, timeout=args.llm_timeout, model=args.llm_model)
    if kind == "replay":
        if not rest:
            raise ConfigError("replay backend needs a path: replay:FILE.jsonl")
        try:
            return ReplayBackend(rest)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load replay file {rest}: {exc}") from None
    raise ConfigError(f"unknown backend {spec!r}; use scripted:POLICY, llm, or replay:FILE")


def parse_agent(text: str, args: argparse.Namespace) -> AgentSpec:
    """``UID:PROFILE[:BACKEND]``; PROFILE is a preset code or ``@traits.txt``."""
    parts = text.split(":", 2)
    if len(parts) < 2 or not parts[0]:
        raise ConfigError(f"bad --agent {text!r}; expected UID:PROFILE[:BACKEND]")
    uid, profile_ref = parts[0], parts[1]
    backend_spec = parts[2] if len(parts) == 3 else args.reasoner
    if profile_ref.startswith("@"):
        from .reasoner import PersonalityProfile
        traits = _read(profile_ref[1:]).strip()
        if not traits:
            raise ConfigError(f"traits file {profile_ref[1:]} is empty")
        profile = PersonalityProfile(uid, "agent", traits)
    else:
        try:
            profile = preset(profile_ref)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return AgentSpec(uid, profile, make_backend(backend_spec, args))


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(_read(args.scenario), strict=args.strict)
    agents = [parse_agent(a, args) for a in args.agent]
    registry = load_registry(_read(args.registry)) if args.registry else None
    recorders = []
    if args.record:
        agents = [AgentSpec(a.uid, a.profile, RecordingBackend(a.backend)) for a in agents]
        recorders = [a.backend for a in agents]
    cfg = RunConfig(max_ticks=args.max_ticks, termination=args.until, seed=args.seed,
                    search=SearchConfig(max_expansions=args.max_expansions),
                    max_memories=args.max_memories)
    binding = load_binding(args.binding) if args.binding else None
    try:
        summary = run(scenario, agents, cfg, binding, registry)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for ev in summary.events:
                fh.write(trace_line(ev) + "\n")
    if recorders:
        with open(args.record, "w", encoding="utf-8") as fh:
            for rec in (r for b in recorders for r in b.records):
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK if summary.terminated else EXIT_MAX_TICKS


def cmd_plan(args: argparse.Namespace) -> int:
    domain = parse_domain(_read(args.domain))
    problem = parse_problem(_read(args.problem), domain)
    cfg = SearchConfig(args.strategy, args.heuristic, args.max_expansions)
    try:
        plan = solve(domain, problem, cfg)
    except Unsolvable as exc:
        print(f"unsolvable: {exc}", file=sys.stderr)
        return EXIT_UNSOLVABLE
    except ResourceExhausted as exc:
        print(f"search exhausted: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED
    for line in plan.lines():
        print(line)
    return EXIT_OK


def cmd_goals(args: argparse.Namespace) -> int:
    world = load_scenario(_read(args.scenario), strict=args.strict)
    registry = load_registry(_read(args.registry)) if args.registry else builtin_registry()
    for i, opt in enumerate(instantiate_all(world, registry), start=1):
        goal = " ".join(str(l) for l in opt.ap_goal) or "-"
        print(f"{i}. {opt.phrase}\t{opt.id}\t{goal}")
    return EXIT_OK


def cmd_stub(args: argparse.Namespace) -> int:
    server = StubChatServer(default=args.reply, host=args.host, port=args.port).start()
    print(f"stub chat-completions server on {server.url}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybrid-npc", description="Hybrid LLM + planning NPC agents.")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and debug output")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario with one or more agents")
    r.add_argument("--scenario", required=True)
    r.add_argument("--agent", action="append", required=True, metavar="UID:PROFILE[:BACKEND]",
                   help="profile is CI/CO/FP/FF/PA or @traits.txt; backend is "
                        "scripted:POLICY, llm[:URL] or replay:FILE (default from --reasoner)")
    r.add_argument("--reasoner", default="scripted:first", help="default backend for --agent")
    r.add_argument("--max-ticks", type=int, default=200)
    r.add_argument("--until", choices=["idle", "rescued", "fire-out", "fixed"], default="idle")
    r.add_argument("--trace", help="write the JSONL trace here")
    r.add_argument("--record", help="write replayable backend answers here")
    r.add_argument("--registry", help="JSON file of extra or replacement goals")
    r.add_argument("--binding", help="domain binding JSON (default: bundled FireFighter binding)")
    r.add_argument("--llm-url", default=None, help=f"chat-completions base URL (default {DEFAULT_URL})")
    r.add_argument("--llm-timeout", type=float, default=30.0)
    r.add_argument("--llm-model", default=None)
    r.add_argument("--max-expansions", type=int, default=100_000)
    r.add_argument("--max-memories", type=int, default=None)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--strict", action="store_true", help="reject unknown scenario types")
    r.set_defaults(func=cmd_run)

    pl = sub.add_parser("plan", help="solve a PDDL domain/problem pair")
    pl.add_argument("--domain", required=True)
    pl.add_argument("--problem", required=True)
    pl.add_argument("--strategy", choices=["gbfs", "astar"], default="gbfs")
    pl.add_argument("--heuristic", choices=["h_add", "h_zero"], default="h_add")
    pl.add_argument("--max-expansions", type=int, default=100_000)
    pl.set_defaults(func=cmd_plan)

    g = sub.add_parser("goals", help="list the goal options of a scenario's initial state")
    g.add_argument("--scenario", required=True)
    g.add_argument("--registry")
    g.add_argument("--strict", action="store_true")
    g.set_defaults(func=cmd_goals)

    s = sub.add_parser("stub-server", help="serve a canned chat-completions endpoint")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=1234)
    s.add_argument("--reply", default="I would choose option 1.")
    s.set_defaults(func=cmd_stub)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, PDDLError, GoalError, BindingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
