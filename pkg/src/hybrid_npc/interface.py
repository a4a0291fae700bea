"""Bridge between a simulated agent and its planning problem.

An :class:`AgentController` owns one agent's memory stream, current goal and
plan.  Each tick it perceives the world, rethinks its goal only when its
memories changed, replans only when the goal or its planning problem changed
(or the last action failed), and emits at most one environment action.

Continuous positions are abstracted into a finite set of locations: every
entity of an *anchor* type contributes ``loc_<uid>`` at its spawn point, and
each agent-capable entity contributes ``transit_<uid>`` at its current
position.  An entity is ``at`` the nearest anchor within the arrival radius;
an agent elsewhere is ``at`` its own transit location.  Location atoms thus
change only when an anchor radius is crossed, which keeps replanning rare.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

from .goals import DO_NOTHING, GeneralGoal, GroundGoalOption, instantiate_all
from .pddl import Domain, PDDLError, ProblemSpec, check_problem, parse_domain
from .planner import (PlanningError, ResourceExhausted, SearchConfig, Unsolvable,
                      GroundAction, ground, search)
from .reasoner import (Backend, GoalSelectionError, MemoryStream, PersonalityProfile,
                       build_prompt, select_goal, sync_memories)
from .world import (AGENT_TYPES, ActionStatus, EnvAction, Vec, WorldState, _dist,
                    action_complete, perceptions)

log = logging.getLogger(__name__)


class BindingError(ValueError):
    pass


@dataclass(frozen=True)
class RelationMapping:
    predicate: str
    args: tuple[str, ...]  # each "pred" or "succ"
    pred_type: Optional[str] = None  # only relations whose pred entity has this type


@dataclass(frozen=True)
class ActionMapping:
    env: str
    actor: int = 0
    target: Optional[int] = None


@dataclass(frozen=True)
class DomainBinding:
    """Declarative mapping from world concepts to domain symbols."""

    domain: Domain
    entity_type_map: Mapping[str, str]
    relation_pred_map: Mapping[str, tuple[RelationMapping, ...]]
    property_pred_map: Mapping[str, str]
    type_pred_map: Mapping[str, tuple[str, ...]]
    flag_pred_map: Mapping[str, str]
    action_map: Mapping[str, ActionMapping]
    anchor_types: tuple[str, ...]
    location_type: str = "location"
    location_predicate: str = "at"
    self_predicate: str = "controlled"

    def __post_init__(self):
        d = self.domain
        preds = d.predicate_map
        if self.location_type not in d.type_tree:
            raise BindingError(f"location type {self.location_type!r} is not declared")
        for etype, ptype in self.entity_type_map.items():
            if ptype not in d.type_tree:
                raise BindingError(f"entity type {etype!r} maps to undeclared type {ptype!r}")
        used = [m.predicate for ms in self.relation_pred_map.values() for m in ms]
        used += list(self.property_pred_map.values()) + list(self.flag_pred_map.values())
        used += [p for ps in self.type_pred_map.values() for p in ps]
        used += [self.location_predicate, self.self_predicate]
        for p in used:
            if p not in preds:
                raise BindingError(f"predicate {p!r} is not declared by domain {d.name!r}")
        for rel, ms in self.relation_pred_map.items():
            for m in ms:
                if len(m.args) != len(preds[m.predicate].params) or set(m.args) - {"pred", "succ"}:
                    raise BindingError(f"bad argument mapping for {rel} -> {m.predicate}")
        missing = [a.name for a in d.actions if a.name not in self.action_map]
        if missing:
            raise BindingError(f"action_map has no entry for {missing}")
        for name, m in self.action_map.items():
            schema = d.action_map.get(name)
            if schema is None:
                raise BindingError(f"action_map names unknown schema {name!r}")
            if m.env not in EnvAction.KINDS:
                raise BindingError(f"{name}: unknown environment action {m.env!r}")
            for idx in (m.actor, m.target):
                if idx is not None and not 0 <= idx < len(schema.params):
                    raise BindingError(f"{name}: parameter index {idx} out of range")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], domain: Domain) -> "DomainBinding":
        try:
            return cls(
                domain=domain,
                entity_type_map=dict(doc["entity_type_map"]),
                relation_pred_map={
                    rel: tuple(RelationMapping(m["predicate"], tuple(m["args"]), m.get("pred_type"))
                               for m in ms)
                    for rel, ms in doc.get("relation_pred_map", {}).items()},
                property_pred_map=dict(doc.get("property_pred_map", {})),
                type_pred_map={t: tuple(ps) for t, ps in doc.get("type_pred_map", {}).items()},
                flag_pred_map=dict(doc.get("flag_pred_map", {})),
                action_map={n: ActionMapping(m["env"], m.get("actor", 0), m.get("target"))
                            for n, m in doc["action_map"].items()},
                anchor_types=tuple(doc.get("anchor_types", ())),
                location_type=doc.get("location_type", "location"),
                location_predicate=doc.get("location_predicate", "at"),
                self_predicate=doc.get("self_predicate", "controlled"),
            )
        except (KeyError, TypeError) as exc:
            raise BindingError(f"malformed binding document: {exc}") from None


def load_binding(path: Union[str, Path, None] = None) -> DomainBinding:
    """Load a binding JSON file; its ``domain`` entry is resolved relative to it.

    Without a path the bundled FireFighter binding is returned.
    """
    if path is None:
        data = resources.files("hybrid_npc") / "data"
        doc = json.loads((data / "firefighter_binding.json").read_text(encoding="utf-8"))
        domain_text = (data / doc["domain"]).read_text(encoding="utf-8")
    else:
        path = Path(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        domain_text = (path.parent / doc["domain"]).read_text(encoding="utf-8")
    return DomainBinding.from_dict(doc, parse_domain(domain_text))


def anchor_location(uid: str) -> str:
    return f"loc_{uid}"


def transit_location(uid: str) -> str:
    return f"transit_{uid}"


def build_problem(binding: DomainBinding, world: WorldState, agent_uid: str,
                  goal=()) -> tuple[ProblemSpec, dict[str, Vec]]:
    """Planning problem for ``agent_uid`` plus the position of every location."""
    if agent_uid not in world.entities:
        raise BindingError(f"agent {agent_uid!r} is not in the world")
    objects: dict[str, str] = {}
    for uid in sorted(world.entities):
        ptype = binding.entity_type_map.get(world.entities[uid].entity_type)
        if ptype is not None:
            objects[uid] = ptype
    if agent_uid not in objects:
        raise BindingError(f"agent {agent_uid!r} has an unmapped entity type")

    locations: dict[str, Vec] = {}
    anchors: list[tuple[str, Vec]] = []
    for uid in sorted(objects):
        e = world.entities[uid]
        if e.entity_type in binding.anchor_types:
            anchors.append((uid, e.anchor))
            locations[anchor_location(uid)] = e.anchor
        if e.entity_type in AGENT_TYPES:
            locations[transit_location(uid)] = e.position
    for loc in locations:
        objects[loc] = binding.location_type

    at = binding.location_predicate
    init: set[tuple] = {(binding.self_predicate, agent_uid)}
    radius = world.config.arrival_radius
    carried = {r.succ_uid for r in world.relations.values() if r.rel_type == "Carrying"}
    for uid in sorted(objects):
        e = world.entities.get(uid)
        if e is None or uid in carried:
            continue
        near = [(_dist(e.position, pos), a) for a, pos in anchors if _dist(e.position, pos) <= radius]
        if near:
            init.add((at, uid, anchor_location(min(near)[1])))
        elif e.entity_type in AGENT_TYPES:
            init.add((at, uid, transit_location(uid)))
        for p in binding.type_pred_map.get(e.entity_type, ()):
            init.add((p, uid))
        for prop, p in binding.property_pred_map.items():
            if e.properties.get(prop):
                init.add((p, uid))
    for r in world.relations.values():
        if r.pred_uid not in objects or r.succ_uid not in objects:
            continue
        for m in binding.relation_pred_map.get(r.rel_type, ()):
            if m.pred_type is not None and world.entities[r.pred_uid].entity_type != m.pred_type:
                continue
            ends = {"pred": r.pred_uid, "succ": r.succ_uid}
            init.add((m.predicate, *(ends[a] for a in m.args)))
    for flag, p in binding.flag_pred_map.items():
        if world.flags.get(flag):
            init.add((p,))
    problem = ProblemSpec(f"{agent_uid}-t{world.tick}", binding.domain.name,
                          objects, frozenset(init), tuple(goal))
    return problem, locations


def map_plan_action(binding: DomainBinding, action: GroundAction,
                    locations: Mapping[str, Vec]) -> EnvAction:
    m = binding.action_map.get(action.name)
    if m is None:
        raise BindingError(f"no environment mapping for {action.name!r}")
    actor = action.args[m.actor]
    target = action.args[m.target] if m.target is not None else None
    if m.env == "MoveTo":
        if target not in locations:
            raise BindingError(f"unknown location {target!r} in {action}")
        return EnvAction("MoveTo", actor, None, locations[target])
    return EnvAction(m.env, actor, target)


@dataclass
class TraceEvent:
    tick: int
    agent: Optional[str]
    kind: str
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"tick": self.tick, "agent": self.agent, "kind": self.kind, "payload": self.payload}


@dataclass
class IterationOutcome:
    emitted_action: Optional[EnvAction]
    rethought: bool
    replanned: bool
    events: list[TraceEvent]
    backend_calls: int = 0


@dataclass
class AgentController:
    agent_uid: str
    profile: PersonalityProfile
    backend: Backend
    binding: DomainBinding
    registry: Optional[Sequence[GeneralGoal]] = None
    search_config: SearchConfig = field(default_factory=SearchConfig)
    max_memories: Optional[int] = None

    stream: MemoryStream = field(init=False)
    ap_problem: Optional[ProblemSpec] = field(default=None, init=False)
    locations: dict = field(default_factory=dict, init=False)
    current_goal: Optional[str] = field(default=None, init=False)
    current_option: Optional[GroundGoalOption] = field(default=None, init=False)
    plan: list = field(default_factory=list, init=False)
    current_action: Optional[EnvAction] = field(default=None, init=False)
    last_status: Optional[ActionStatus] = field(default=None, init=False)
    force_rethink: bool = field(default=False, init=False)
    excluded: set = field(default_factory=set, init=False)

    def __post_init__(self):
        self.stream = MemoryStream(self.profile)

    @property
    def pending(self) -> bool:
        """An emitted action is still running in the simulation."""
        return self.current_action is not None and not action_complete(self.last_status)

    @property
    def idle(self) -> bool:
        return (not self.plan and not self.pending and not self.force_rethink
                and self.current_goal in (None, DO_NOTHING))

    def sync_ap_problem(self, world: WorldState) -> bool:
        """Rebuild the planning problem; True when objects or init changed."""
        problem, self.locations = build_problem(self.binding, world, self.agent_uid)
        old = self.ap_problem
        self.ap_problem = problem
        return old is None or old.objects != problem.objects or old.init != problem.init

    def receive_status(self, status: ActionStatus) -> None:
        self.last_status = status

    def update(self, world: WorldState) -> IterationOutcome:
        tick = world.tick
        events: list[TraceEvent] = []

        def emit(kind: str, **payload):
            events.append(TraceEvent(tick, self.agent_uid, kind, payload))

        # 1. perceive
        before = len(self.stream.memories)
        report = sync_memories(self.stream, perceptions(world, self.agent_uid), tick)
        for m in self.stream.memories[before:]:
            emit("memory_retired" if m.retirement else "memory_added", key=m.key, text=m.text)
        options = instantiate_all(world, self.registry)

        # 2. planning problem
        ap_changed = self.sync_ap_problem(world)

        # 3. rethink
        rethought = goal_changed = False
        calls = 0
        if report.changed:
            # infeasible goals are offered again once something was observed to change
            self.excluded = set()
        if report.changed or self.force_rethink:
            reason = "memory_changed" if report.changed else "goal_infeasible"
            offered = [o for o in options if o.id == DO_NOTHING or o.id not in self.excluded]
            self.force_rethink = False
            described = self.current_action.describe() if self.pending else None
            prompt = build_prompt(self.stream, described, offered, self.max_memories)
            try:
                choice = select_goal(self.backend, prompt, offered, self.current_goal)
                calls = choice.attempts
                chosen = offered[choice.option_index - 1]
            except GoalSelectionError as exc:
                calls = exc.attempts
                ids = [o.id for o in offered]
                keep = self.current_goal if self.current_goal in ids else DO_NOTHING
                chosen = offered[ids.index(keep)]
                emit("warning", message=f"goal selection failed ({exc}); keeping {keep}")
            rethought = True
            emit("rethink", reason=reason, options=[o.id for o in offered], backend_calls=calls)
            if chosen.id != self.current_goal:
                goal_changed = True
                emit("goal_set", goal=chosen.id, phrase=chosen.phrase, previous=self.current_goal)
            self.current_goal, self.current_option = chosen.id, chosen

        # 4. replan
        status_failed = self.last_status is not None and self.last_status.state == "failed"
        replanned = False
        if ap_changed or goal_changed or status_failed:
            replanned = True
            goal = self.current_option.ap_goal if self.current_option else ()
            reasons = {"ap_changed": ap_changed, "goal_changed": goal_changed, "action_failed": status_failed}
            try:
                problem = self.ap_problem.with_goal(goal)
                check_problem(self.binding.domain, problem)
                plan = search(problem.init, problem.goal, ground(self.binding.domain, problem),
                              self.search_config)
                self.plan = list(plan.actions)
                emit("replanned", goal=self.current_goal, plan=plan.lines(), **reasons)
            except (PlanningError, PDDLError) as exc:
                self.plan = []
                outcome = "exhausted" if isinstance(exc, ResourceExhausted) else (
                    "unsolvable" if isinstance(exc, Unsolvable) else "invalid")
                emit("replanned", goal=self.current_goal, plan=None, outcome=outcome, **reasons)
                emit("warning", message=f"no plan for {self.current_goal}: {exc}")
                if self.current_goal not in (None, DO_NOTHING):
                    self.excluded.add(self.current_goal)
                    self.force_rethink = True

        # 5. emit
        emitted = None
        if replanned or action_complete(self.last_status):
            if self.plan:
                ga = self.plan.pop(0)
                emitted = map_plan_action(self.binding, ga, self.locations)
                emit("action_emitted", action=emitted.to_dict(), plan_step=str(ga))
            self.current_action = emitted
            self.last_status = None
        return IterationOutcome(emitted, rethought, replanned, events, calls)


def update(ctrl: AgentController, world: WorldState, backend: Optional[Backend] = None) -> IterationOutcome:
    if backend is not None:
        ctrl.backend = backend
    return ctrl.update(world)
