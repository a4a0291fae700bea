"""Hybrid NPC agents: a reasoner picks goals, a STRIPS planner achieves them."""
from .goals import builtin_registry, instantiate_all
from .interface import AgentController, load_binding
from .pddl import parse_domain, parse_problem, print_domain, print_problem
from .planner import SearchConfig, bfs_optimal, solve, validate_plan
from .reasoner import ScriptedBackend, build_prompt, parse_choice, select_goal
from .runner import AgentSpec, RunConfig, preset_profiles, run
from .world import load_scenario, perceptions, step

__version__ = "0.1.0"

__all__ = [
    "AgentController", "AgentSpec", "RunConfig", "ScriptedBackend", "SearchConfig",
    "bfs_optimal", "build_prompt", "builtin_registry", "instantiate_all", "load_binding",
    "load_scenario", "parse_choice", "parse_domain", "parse_problem", "perceptions",
    "preset_profiles", "print_domain", "print_problem", "run", "select_goal", "solve",
    "step", "validate_plan",
]
