"""Multi-agent simulation loop, preset personalities and JSONL traces."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Callable, Mapping, Optional, Sequence, Union

from .goals import DO_NOTHING, GeneralGoal
from .interface import AgentController, DomainBinding, TraceEvent, load_binding
from .planner import SearchConfig
from .reasoner import Backend, PersonalityProfile
from .world import AGENT_TYPES, NOUNS, WorldState, load_scenario, step

DEFAULT_MAX_TICKS = 200
IDLE_TICKS = 3
TERMINATIONS = ("idle", "rescued", "fire-out", "fixed")


def preset_profiles() -> dict[str, PersonalityProfile]:
    """Built-in personalities keyed by short code.

    CI is the person trapped in the car, CO a bystander, FP a firefighter who
    puts people first, FF a firefighter who puts fires first, PA a paramedic.
    Names are replaced by the controlled entity's label at run time.
    """
    return {
        "CI": PersonalityProfile(
            "Peter", "person",
            "I am stuck inside a car that is on fire. I want to get out alive."),
        "CO": PersonalityProfile(
            "Bystander", "person",
            "My duty is to prioritize safety above all. I want to help, but if there is "
            "someone more qualified to do it, I won't do anything that could endanger myself."),
        "FP": PersonalityProfile(
            "FireFighter1", "firefighter",
            "My duty is to put out fires and, above all, to save people."),
        "FF": PersonalityProfile(
            "FireFighter2", "firefighter",
            "My duty is to save people and, above all, to put out fires."),
        "PA": PersonalityProfile(
            "Paramedic1", "paramedic",
            "My duty is to heal injured people before anything else."),
    }


def preset(code: str) -> PersonalityProfile:
    presets = preset_profiles()
    try:
        return presets[code.upper()]
    except KeyError:
        raise ValueError(f"unknown profile {code!r}; valid codes: {', '.join(presets)}") from None


@dataclass(frozen=True)
class AgentSpec:
    uid: str
    profile: PersonalityProfile
    backend: Backend


@dataclass(frozen=True)
class RunConfig:
    max_ticks: int = DEFAULT_MAX_TICKS
    termination: str = "idle"
    seed: int = 0
    search: SearchConfig = field(default_factory=SearchConfig)
    max_memories: Optional[int] = None

    def __post_init__(self):
        if self.termination not in TERMINATIONS:
            raise ValueError(f"termination must be one of {TERMINATIONS}")
        if self.max_ticks < 1:
            raise ValueError("max_ticks must be >= 1")


@dataclass
class RunSummary:
    ticks: int
    terminated: bool
    reason: str
    goal_history: dict[str, list[tuple[int, str]]]
    facts: dict
    counts: dict
    world: WorldState = field(repr=False)
    events: list[TraceEvent] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {"ticks": self.ticks, "terminated": self.terminated, "reason": self.reason,
                "goal_history": {k: [list(x) for x in v] for k, v in self.goal_history.items()},
                "facts": self.facts, "counts": self.counts}


def trapped_people(world: WorldState) -> list[str]:
    """Persons inside a car."""
    out = []
    for p in world.of_type("Person"):
        for r in world.relations_of("InsideOf", succ=p.uid):
            if world.entities[r.pred_uid].entity_type == "Car":
                out.append(p.uid)
                break
    return out


def in_safe_zone(world: WorldState, uid: str) -> bool:
    return any(world.entities[r.pred_uid].entity_type == "SafeZone"
               for r in world.relations_of("InsideOf", succ=uid))


def _facts(world: WorldState, initially_trapped: Sequence[str]) -> dict:
    return {
        "fires_remaining": [f.uid for f in world.of_type("Fire")],
        "fire_extinguished": not world.of_type("Fire"),
        "persons_in_safe_zone": [p.uid for p in world.of_type("Person") if in_safe_zone(world, p.uid)],
        "rescued": all(in_safe_zone(world, u) for u in initially_trapped if u in world.entities),
        "firefighters_called": bool(world.flags.get("firefighters_called")),
        "injured": sorted(u for u, e in world.entities.items() if e.properties.get("injured")),
        "healed": sorted(u for u, e in world.entities.items() if e.properties.get("healed")),
    }


def run(scenario: Union[WorldState, str, Mapping], agents: Sequence[AgentSpec],
        config: RunConfig = RunConfig(), binding: Optional[DomainBinding] = None,
        registry: Optional[Sequence[GeneralGoal]] = None,
        on_event: Optional[Callable[[TraceEvent], None]] = None) -> RunSummary:
    """Run the tick loop until the termination predicate holds or ``max_ticks``.

    Agents update in uid order against the same world snapshot, then their
    pending actions are applied in uid order.
    """
    world = scenario if isinstance(scenario, WorldState) else load_scenario(scenario)
    binding = binding or load_binding()
    random.seed(config.seed)
    seen = set()
    controllers: list[AgentController] = []
    for spec in sorted(agents, key=lambda s: s.uid):
        if spec.uid in seen:
            raise ValueError(f"agent {spec.uid!r} listed twice")
        seen.add(spec.uid)
        entity = world.entities.get(spec.uid)
        if entity is None:
            raise ValueError(f"scenario has no entity {spec.uid!r}")
        if entity.entity_type not in AGENT_TYPES:
            raise ValueError(f"entity {spec.uid!r} is a {entity.entity_type}, not an agent")
        profile = replace(spec.profile, agent_name=entity.label,
                          agent_type=NOUNS.get(entity.entity_type, spec.profile.agent_type))
        controllers.append(AgentController(spec.uid, profile, spec.backend, binding, registry,
                                           config.search, config.max_memories))

    events: list[TraceEvent] = []

    def record(ev: TraceEvent) -> None:
        events.append(ev)
        if on_event is not None:
            on_event(ev)

    initially_trapped = trapped_people(world)
    history: dict[str, list[tuple[int, str]]] = {c.agent_uid: [] for c in controllers}
    counts = {"rethinks": 0, "replans": 0, "llm_calls": 0, "actions": 0, "failures": 0}
    idle_streak = 0
    terminated, reason = False, "max_ticks"
    ticks = 0
    while ticks < config.max_ticks:
        payload = {"seed": config.seed} if ticks == 0 else {}
        record(TraceEvent(world.tick, None, "tick", payload))
        submissions = []
        for ctrl in controllers:
            out = ctrl.update(world)
            for ev in out.events:
                record(ev)
                if ev.kind == "goal_set":
                    history[ctrl.agent_uid].append((ev.tick, ev.payload["goal"]))
            counts["rethinks"] += out.rethought
            counts["replans"] += out.replanned
            counts["llm_calls"] += out.backend_calls
            counts["actions"] += out.emitted_action is not None
            if ctrl.pending:
                submissions.append((ctrl.agent_uid, ctrl.current_action))
        world, statuses, changes = step(world, submissions)
        ticks += 1
        for ctrl in controllers:
            status = statuses.get(ctrl.agent_uid)
            if status is not None:
                ctrl.receive_status(status)
                counts["failures"] += status.state == "failed"
                record(TraceEvent(world.tick - 1, ctrl.agent_uid, "action_status",
                                  {"action": ctrl.current_action.to_dict(), **status.to_dict()}))

        idle_streak = idle_streak + 1 if all(c.idle for c in controllers) else 0
        if config.termination == "idle" and idle_streak >= IDLE_TICKS:
            terminated, reason = True, "idle"
        elif config.termination == "rescued" and all(
                in_safe_zone(world, u) for u in initially_trapped if u in world.entities):
            terminated, reason = True, "rescued"
        elif config.termination == "fire-out" and not world.of_type("Fire"):
            terminated, reason = True, "fire-out"
        if terminated:
            break
    if config.termination == "fixed" and ticks >= config.max_ticks:
        terminated, reason = True, "fixed"
    return RunSummary(ticks, terminated, reason, history, _facts(world, initially_trapped),
                      counts, world, events)


def write_trace(events: Sequence[TraceEvent], out: Union[str, Path, IO[str]]) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8") as fh:
            write_trace(events, fh)
        return
    for ev in events:
        out.write(trace_line(ev) + "\n")


def trace_line(ev: TraceEvent) -> str:
    return json.dumps(ev.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def read_trace(path: Union[str, Path]) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


__all__ = ["AgentSpec", "RunConfig", "RunSummary", "preset_profiles", "run", "write_trace",
           "read_trace", "trace_line", "DO_NOTHING"]
