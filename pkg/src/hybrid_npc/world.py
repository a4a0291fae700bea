"""Entity-relation world model, scenario loading, tick engine and perceptions."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional, Sequence, Union

ENTITY_TYPES = ("Person", "Firefighter", "Paramedic", "Car", "Fire", "Extinguisher", "SafeZone")
AGENT_TYPES = frozenset({"Person", "Firefighter", "Paramedic"})
RELATION_TYPES = ("Burning", "InsideOf", "Carrying", "Injured")
GENERIC = "Generic"

# scenario agent_type -> entity type
AGENT_TYPE_ALIASES = {
    "AGFireExtinguisher": "Extinguisher", "FireExtinguisher": "Extinguisher",
    "AGFireFighter": "Firefighter", "FireFighter": "Firefighter",
    "AGParamedic": "Paramedic",
    "AGCommonPerson": "Person", "CommonPerson": "Person", "ForwardPerson": "Person",
    "AGCommonCar": "Car", "CommonCar": "Car",
    "AGFire": "Fire",
    "AGSafeZone": "SafeZone", "Safe_Zone": "SafeZone",
}
KNOWN_FLAGS = ("can_be_moved", "injured", "healed", "name")

NOUNS = {
    "Person": "person", "Firefighter": "firefighter", "Paramedic": "paramedic",
    "Car": "car", "Fire": "fire", "Extinguisher": "fire extinguisher",
    "SafeZone": "safe zone", GENERIC: "object",
}
RELATION_TEMPLATES = {
    "Burning": "'{pred}' is burning '{succ}'",
    "InsideOf": "'{succ}' is inside of '{pred}'",
    "Injured": "'{succ}' is injured",
}
PROPERTY_TEMPLATES = {
    "injured": "'{label}' is injured",
    "healed": "'{label}' has been healed",
}
FLAG_TEMPLATES = {
    "firefighters_called": "The firefighters have been called",
}

# failure reason codes
NOT_COLOCATED = "NotColocated"
NO_EXTINGUISHER_HELD = "NoExtinguisherHeld"
UNKNOWN_TARGET = "UnknownTarget"
ALREADY_CARRIED = "AlreadyCarried"
NOT_MOVABLE = "NotMovable"
NOT_CARRYING = "NotCarrying"
TRAPPED = "Trapped"
NOT_INJURED = "NotInjured"


class ScenarioError(ValueError):
    pass


Vec = tuple[float, float]


@dataclass(frozen=True)
class SimConfig:
    move_speed: float = 2.0
    arrival_radius: float = 0.5
    extinguish_ticks: int = 3
    hazard_ticks: Optional[int] = None

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SimConfig":
        unknown = set(d) - {"move_speed", "arrival_radius", "extinguish_ticks", "hazard_ticks"}
        if unknown:
            raise ScenarioError(f"unknown sim_config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if cfg.move_speed <= 0 or cfg.arrival_radius < 0 or cfg.extinguish_ticks < 1:
            raise ScenarioError(f"invalid sim_config {d}")
        return cfg


@dataclass(frozen=True)
class Entity:
    uid: str
    entity_type: str
    position: Vec
    properties: Mapping[str, Any] = field(default_factory=dict)
    spawn: Optional[Vec] = None
    running: bool = False

    @property
    def label(self) -> str:
        return str(self.properties.get("name") or self.uid)

    @property
    def anchor(self) -> Vec:
        return self.spawn if self.spawn is not None else self.position


@dataclass(frozen=True)
class Relation:
    uid: str
    rel_type: str
    pred_uid: str
    succ_uid: str


@dataclass(frozen=True)
class WorldState:
    entities: Mapping[str, Entity] = field(default_factory=dict)
    relations: Mapping[str, Relation] = field(default_factory=dict)
    tick: int = 0
    flags: Mapping[str, bool] = field(default_factory=dict)
    config: SimConfig = field(default_factory=SimConfig)
    # actor uid -> (fire uid, consecutive extinguishing ticks)
    progress: Mapping[str, tuple[str, int]] = field(default_factory=dict)

    def of_type(self, entity_type: str) -> list[Entity]:
        return [self.entities[u] for u in sorted(self.entities)
                if self.entities[u].entity_type == entity_type]

    def relations_of(self, rel_type: str, pred: str | None = None, succ: str | None = None) -> list[Relation]:
        return [r for _, r in sorted(self.relations.items())
                if r.rel_type == rel_type
                and (pred is None or r.pred_uid == pred)
                and (succ is None or r.succ_uid == succ)]

    def carrier_of(self, uid: str) -> Optional[str]:
        rels = self.relations_of("Carrying", succ=uid)
        return rels[0].pred_uid if rels else None

    def is_trapped(self, uid: str) -> bool:
        if self.carrier_of(uid) is not None:
            return True
        for r in self.relations_of("InsideOf", succ=uid):
            container = self.entities.get(r.pred_uid)
            if container is not None and container.entity_type == "Car":
                return True
        return False

    def distance(self, a: str, b: str) -> float:
        return _dist(self.entities[a].position, self.entities[b].position)


@dataclass(frozen=True)
class EnvAction:
    """One environment command issued by an agent for the current tick."""

    kind: str  # MoveTo | Take | Drop | ExtinguishFire | Heal | CallFirefighters | Noop
    actor: str
    target: Optional[str] = None
    position: Optional[Vec] = None

    KINDS = ("MoveTo", "Take", "Drop", "ExtinguishFire", "Heal", "CallFirefighters", "Noop")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown environment action {self.kind!r}")

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "actor": self.actor}
        if self.target is not None:
            d["target"] = self.target
        if self.position is not None:
            d["position"] = [round(self.position[0], 6), round(self.position[1], 6)]
        return d

    def describe(self) -> str:
        if self.kind == "MoveTo":
            where = self.target or f"({self.position[0]:g}, {self.position[1]:g})"
            return f"moving to {where}"
        phrases = {
            "Take": "taking '{t}'", "Drop": "dropping '{t}'",
            "ExtinguishFire": "putting out '{t}'", "Heal": "healing '{t}'",
            "CallFirefighters": "calling the firefighters", "Noop": "waiting",
        }
        return phrases[self.kind].format(t=self.target)


@dataclass(frozen=True)
class ActionStatus:
    state: str  # "in_progress" | "done" | "failed"
    reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {"state": self.state, **({"reason": self.reason} if self.reason else {})}


IN_PROGRESS = ActionStatus("in_progress")
DONE = ActionStatus("done")


def failed(reason: str) -> ActionStatus:
    return ActionStatus("failed", reason)


def action_complete(status: Optional[ActionStatus]) -> bool:
    return status is not None and status.state in ("done", "failed")


@dataclass(frozen=True)
class ChangeEvent:
    kind: str  # entity_removed | relation_added | relation_removed | flag_set | property_set
    subject: str
    detail: str = ""


@dataclass(frozen=True)
class Perception:
    key: str
    text: str
    live: bool = True


# --------------------------------------------------------------------------
# loading


def _dist(a: Vec, b: Vec) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _truthy(v: Any) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in ("true", "1", "yes")
    return bool(v)


def _entity_type(agent_type: str, strict: bool) -> str:
    if agent_type in ENTITY_TYPES:
        return agent_type
    if agent_type in AGENT_TYPE_ALIASES:
        return AGENT_TYPE_ALIASES[agent_type]
    if strict:
        raise ScenarioError(f"unknown agent_type {agent_type!r}")
    return GENERIC


def _properties(entry: Mapping[str, Any]) -> dict[str, Any]:
    fe = entry.get("front_end_parameters") or {}
    sources = [fe.get("map_web_app") or {}, fe, entry, entry.get("properties") or {}]
    props: dict[str, Any] = {}
    for src in sources:
        if not isinstance(src, Mapping):
            continue
        for key in KNOWN_FLAGS:
            if key in src:
                props[key] = src[key] if key == "name" else _truthy(src[key])
    return props


def load_scenario(document: Union[str, bytes, Mapping[str, Any]], strict: bool = False) -> WorldState:
    """Build the initial world from a scenario JSON document (text or parsed)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from None
    if not isinstance(document, Mapping):
        raise ScenarioError("scenario must be a JSON object")
    agents = document.get("agents", {})
    relations = document.get("relations", {})
    if not isinstance(agents, Mapping) or not isinstance(relations, Mapping):
        raise ScenarioError("'agents' and 'relations' must be JSON objects")

    entities: dict[str, Entity] = {}
    for key, entry in agents.items():
        if not isinstance(entry, Mapping) or not entry.get("UID"):
            raise ScenarioError(f"agent entry {key!r} has no UID")
        uid = str(entry["UID"])
        if uid in entities:
            raise ScenarioError(f"duplicate UID {uid!r}")
        if "agent_type" not in entry:
            raise ScenarioError(f"agent {uid!r} has no agent_type")
        etype = _entity_type(str(entry["agent_type"]), strict)
        pos = (entry.get("front_end_parameters") or {}).get("position")
        if (not isinstance(pos, (list, tuple)) or len(pos) not in (2, 3)
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in pos)):
            raise ScenarioError(f"agent {uid!r} needs front_end_parameters.position with 2 or 3 numbers")
        xy = (float(pos[0]), float(pos[1]))
        entities[uid] = Entity(uid, etype, xy, _properties(entry), spawn=xy,
                               running=_truthy(entry.get("running", False)))

    rels: dict[str, Relation] = {}
    for key, entry in relations.items():
        if not isinstance(entry, Mapping) or not entry.get("UID"):
            raise ScenarioError(f"relation entry {key!r} has no UID")
        uid = str(entry["UID"])
        if uid in rels:
            raise ScenarioError(f"duplicate relation UID {uid!r}")
        rtype = str(entry.get("type", ""))
        if not rtype.startswith("REL"):
            raise ScenarioError(f"relation {uid!r} type must start with 'REL'")
        rtype = rtype[3:]
        if rtype not in RELATION_TYPES and strict:
            raise ScenarioError(f"unknown relation type {entry['type']!r}")
        pred, succ = entry.get("rel_pred"), entry.get("rel_succ")
        for end in (pred, succ):
            if end not in entities:
                raise ScenarioError(f"relation {uid!r} references unknown entity {end!r}")
        rels[uid] = Relation(uid, rtype, pred, succ)

    # injuries are tracked as an entity property
    for r in rels.values():
        if r.rel_type == "Injured":
            e = entities[r.succ_uid]
            entities[r.succ_uid] = replace(e, properties={**e.properties, "injured": True})

    world = WorldState(entities, rels, 0, {}, SimConfig.from_dict(document.get("sim_config") or {}))
    carried = [r.succ_uid for r in rels.values() if r.rel_type == "Carrying"]
    if len(carried) != len(set(carried)):
        raise ScenarioError("an entity is carried by two carriers")
    return world


# --------------------------------------------------------------------------
# tick engine


class _Tick:
    """Mutable scratch copy of a world used while applying one tick."""

    def __init__(self, world: WorldState):
        self.world = world
        self.entities = dict(world.entities)
        self.relations = dict(world.relations)
        self.flags = dict(world.flags)
        self.events: list[ChangeEvent] = []

    def snapshot(self) -> WorldState:
        return replace(self.world, entities=self.entities, relations=self.relations, flags=self.flags)

    def add_relation(self, rel: Relation) -> None:
        self.relations[rel.uid] = rel
        self.events.append(ChangeEvent("relation_added", rel.uid, rel.rel_type))

    def remove_relation(self, uid: str) -> None:
        rel = self.relations.pop(uid)
        self.events.append(ChangeEvent("relation_removed", uid, rel.rel_type))

    def set_props(self, uid: str, **props) -> None:
        e = self.entities[uid]
        self.entities[uid] = replace(e, properties={**e.properties, **props})
        for k in sorted(props):
            self.events.append(ChangeEvent("property_set", uid, k))


def _move(t: _Tick, actor: str, target: Vec, cfg: SimConfig) -> ActionStatus:
    e = t.entities[actor]
    d = _dist(e.position, target)
    if d > cfg.move_speed:
        f = cfg.move_speed / d
        pos = (e.position[0] + (target[0] - e.position[0]) * f,
               e.position[1] + (target[1] - e.position[1]) * f)
    else:
        pos = (float(target[0]), float(target[1]))
    t.entities[actor] = replace(e, position=pos)
    return DONE if _dist(pos, target) <= cfg.arrival_radius else IN_PROGRESS


def _apply(t: _Tick, action: EnvAction, cfg: SimConfig) -> ActionStatus:
    world = t.snapshot()
    actor = action.actor
    kind = action.kind
    if kind == "Noop":
        return DONE
    if kind == "CallFirefighters":
        if not t.flags.get("firefighters_called"):
            t.flags["firefighters_called"] = True
            t.events.append(ChangeEvent("flag_set", "firefighters_called"))
        return DONE
    if kind == "MoveTo":
        if world.is_trapped(actor):
            return failed(TRAPPED)
        if action.target is not None:
            if action.target not in t.entities:
                return failed(UNKNOWN_TARGET)
            dest = t.entities[action.target].position
        elif action.position is not None:
            dest = action.position
        else:
            return failed(UNKNOWN_TARGET)
        return _move(t, actor, dest, cfg)

    target = action.target
    if target is None or target not in t.entities or target == actor:
        return failed(UNKNOWN_TARGET)
    colocated = world.distance(actor, target) <= cfg.arrival_radius

    if kind == "Take":
        if world.is_trapped(actor):
            return failed(TRAPPED)
        te = t.entities[target]
        if not (te.properties.get("can_be_moved") or te.entity_type == "Person"):
            return failed(NOT_MOVABLE)
        if world.carrier_of(target) is not None:
            return failed(ALREADY_CARRIED)
        if not colocated:
            return failed(NOT_COLOCATED)
        t.add_relation(Relation(f"Carrying_{actor}_{target}", "Carrying", actor, target))
        return DONE

    if kind == "Drop":
        rels = world.relations_of("Carrying", pred=actor, succ=target)
        if not rels:
            return failed(NOT_CARRYING)
        t.remove_relation(rels[0].uid)
        pos = t.entities[actor].position
        t.entities[target] = replace(t.entities[target], position=pos)
        for r in world.relations_of("InsideOf", succ=target):
            t.remove_relation(r.uid)
        zones = [z for z in world.of_type("SafeZone") if _dist(z.position, pos) <= cfg.arrival_radius]
        if zones:
            zone = min(zones, key=lambda z: (_dist(z.position, pos), z.uid))
            t.add_relation(Relation(f"InsideOf_{zone.uid}_{target}", "InsideOf", zone.uid, target))
        return DONE

    if kind == "ExtinguishFire":
        if t.entities[target].entity_type != "Fire":
            return failed(UNKNOWN_TARGET)
        held = [r for r in world.relations_of("Carrying", pred=actor)
                if world.entities[r.succ_uid].entity_type == "Extinguisher"]
        if not held:
            return failed(NO_EXTINGUISHER_HELD)
        if not colocated:
            return failed(NOT_COLOCATED)
        prev_fire, count = world.progress.get(actor, (None, 0))
        count = count + 1 if prev_fire == target else 1
        if count < cfg.extinguish_ticks:
            t.progress[actor] = (target, count)
            return IN_PROGRESS
        if target in t.entities:
            del t.entities[target]
            t.events.append(ChangeEvent("entity_removed", target, "Fire"))
            for uid, r in sorted(t.relations.items()):
                if target in (r.pred_uid, r.succ_uid):
                    t.remove_relation(uid)
        return DONE

    if kind == "Heal":
        if not t.entities[target].properties.get("injured"):
            return failed(NOT_INJURED)
        if not colocated:
            return failed(NOT_COLOCATED)
        t.set_props(target, injured=False, healed=True)
        for r in world.relations_of("Injured", succ=target):
            t.remove_relation(r.uid)
        return DONE
    raise AssertionError(kind)


def step(world: WorldState, submissions: Sequence[tuple[str, EnvAction]]):
    """Advance the world one tick.

    ``submissions`` are applied in the given order (callers pass them sorted
    by actor uid).  Returns ``(new_world, statuses, change_events)``.
    """
    actors = [a for a, _ in submissions]
    if len(actors) != len(set(actors)):
        raise ValueError("an actor submitted more than one action")
    cfg = world.config
    t = _Tick(world)
    t.progress = {}
    statuses: dict[str, ActionStatus] = {}
    for actor, action in submissions:
        if actor not in t.entities or t.entities[actor].entity_type not in AGENT_TYPES:
            statuses[actor] = failed(UNKNOWN_TARGET)
            continue
        statuses[actor] = _apply(t, action, cfg)

    # carried entities follow their carriers (chains resolve within a few passes)
    for _ in range(len(t.relations) + 1):
        moved = False
        for r in t.relations.values():
            if r.rel_type != "Carrying":
                continue
            carrier, carried = t.entities[r.pred_uid], t.entities[r.succ_uid]
            if carried.position != carrier.position:
                t.entities[r.succ_uid] = replace(carried, position=carrier.position)
                moved = True
        if not moved:
            break

    tick = world.tick + 1
    if cfg.hazard_ticks is not None and tick >= cfg.hazard_ticks:
        burning = {r.succ_uid for r in t.relations.values() if r.rel_type == "Burning"}
        for r in sorted(t.relations.values(), key=lambda r: r.uid):
            if r.rel_type == "InsideOf" and r.pred_uid in burning:
                props = t.entities[r.succ_uid].properties
                if not props.get("injured") and not props.get("healed"):
                    t.set_props(r.succ_uid, injured=True)

    new = WorldState(t.entities, t.relations, tick, t.flags, cfg, t.progress)
    return new, statuses, t.events


# --------------------------------------------------------------------------
# perception


def perceptions(world: WorldState, observer_uid: str) -> list[Perception]:
    """Everything the observer perceives (full observability), ordered by key
    within entities, relations, properties and world flags."""
    if observer_uid not in world.entities:
        raise KeyError(f"unknown observer {observer_uid!r}")
    out: list[Perception] = []
    for uid in sorted(world.entities):
        e = world.entities[uid]
        out.append(Perception(uid, f"There is a {NOUNS.get(e.entity_type, 'object')} called '{e.label}'"))
    for uid in sorted(world.relations):
        r = world.relations[uid]
        template = RELATION_TEMPLATES.get(r.rel_type)
        if template is None:
            continue
        out.append(Perception(uid, template.format(pred=world.entities[r.pred_uid].label,
                                                   succ=world.entities[r.succ_uid].label)))
    for uid in sorted(world.entities):
        e = world.entities[uid]
        for prop, template in PROPERTY_TEMPLATES.items():
            if e.properties.get(prop):
                out.append(Perception(f"{uid}#{prop}", template.format(label=e.label)))
    for flag in sorted(world.flags):
        if world.flags[flag] and flag in FLAG_TEMPLATES:
            out.append(Perception(f"flag:{flag}", FLAG_TEMPLATES[flag]))
    return out
