"""General goal templates and their instantiation over a world state.

Applicability is data, built from a closed set of condition kinds:

``entity-of-type``  the slot entity has a given entity type
``has-relation``    the slot entity is the ``pred``/``succ`` end of a relation,
                    optionally with a nested condition on the other end
``has-property``    the slot entity has a property with a given value
``world-flag``      a world flag has a given value (unset counts as false)
``always``          unconditionally true
"""
from __future__ import annotations

import itertools
import json
import string
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

from .pddl import Literal
from .world import WorldState

CONDITION_KINDS = ("entity-of-type", "has-relation", "has-property", "world-flag", "always")


class GoalError(ValueError):
    pass


@dataclass(frozen=True)
class Condition:
    kind: str
    slot: int = 0
    entity_type: Optional[str] = None
    rel_type: Optional[str] = None
    role: str = "succ"  # which end of the relation the slot entity is
    other: Optional["Condition"] = None
    name: Optional[str] = None  # property or flag name
    value: Any = True

    def __post_init__(self):
        if self.kind not in CONDITION_KINDS:
            raise GoalError(f"unknown condition kind {self.kind!r}")
        if self.role not in ("pred", "succ"):
            raise GoalError(f"role must be 'pred' or 'succ', got {self.role!r}")

    def holds(self, world: WorldState, binding: Sequence[str]) -> bool:
        if self.kind == "always":
            return True
        if self.kind == "world-flag":
            return bool(world.flags.get(self.name, False)) == bool(self.value)
        uid = binding[self.slot]
        entity = world.entities.get(uid)
        if entity is None:
            return False
        if self.kind == "entity-of-type":
            return entity.entity_type == self.entity_type
        if self.kind == "has-property":
            return entity.properties.get(self.name, False) == self.value
        # has-relation
        for rel in world.relations.values():
            if rel.rel_type != self.rel_type:
                continue
            mine, theirs = (rel.pred_uid, rel.succ_uid) if self.role == "pred" else (rel.succ_uid, rel.pred_uid)
            if mine != uid:
                continue
            if self.other is None or self.other.holds(world, [theirs]):
                return True
        return False

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Condition":
        d = dict(d)
        if "other" in d and d["other"] is not None:
            d["other"] = cls.from_dict(d["other"])
        if "type" in d:
            d["entity_type"] = d.pop("type")
        return cls(**d)


@dataclass(frozen=True)
class GeneralGoal:
    """A parameterised goal.

    ``slots`` gives the entity type of each positional placeholder ``{0}``,
    ``{1}``...  ``witnesses`` binds named placeholders to the
    lexicographically-least uid of an entity type (existential goals).
    """

    name: str
    slots: tuple[str, ...] = ()
    conditions: tuple[Condition, ...] = ()
    phrase_template: str = ""
    ap_goal_template: tuple[tuple[str, tuple[str, ...], bool], ...] = ()
    witnesses: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        arity = len(self.slots)
        for cond in self.conditions:
            if cond.kind not in ("always", "world-flag") and not 0 <= cond.slot < arity:
                raise GoalError(f"{self.name}: condition slot {cond.slot} out of range")
        names = {str(i) for i in range(arity)} | set(self.witnesses)
        fields = set(_placeholders(self.phrase_template))
        for _, args, _ in self.ap_goal_template:
            for a in args:
                fields |= set(_placeholders(a))
        bad = fields - names
        if bad:
            raise GoalError(f"{self.name}: unknown placeholders {sorted(bad)}")
        missing = {str(i) for i in range(arity)} - fields
        if missing:
            raise GoalError(f"{self.name}: slots {sorted(missing)} unused by its templates")

    def instantiate(self, world: WorldState) -> list["GroundGoalOption"]:
        candidates = [[e.uid for e in world.of_type(t)] for t in self.slots]
        options = []
        for combo in itertools.product(*candidates):
            if not all(c.holds(world, combo) for c in self.conditions):
                continue
            named: dict[str, str] = {}
            for key, etype in self.witnesses.items():
                found = world.of_type(etype)
                if not found:
                    raise GoalError(f"{self.name}{combo}: no {etype} entity to bind {{{key}}}")
                named[key] = found[0].uid
            label = lambda uid: world.entities[uid].label  # noqa: E731
            phrase = self.phrase_template.format(
                *map(label, combo), **{k: label(v) for k, v in named.items()})
            ap_goal = tuple(
                Literal(pred, tuple(a.format(*combo, **named) for a in args), positive)
                for pred, args, positive in self.ap_goal_template)
            oid = self.name if not combo else f"{self.name}({','.join(combo)})"
            options.append(GroundGoalOption(oid, phrase, ap_goal, self.name, tuple(combo)))
        return options

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GeneralGoal":
        return cls(
            name=d["name"],
            slots=tuple(d.get("slots", ())),
            conditions=tuple(Condition.from_dict(c) for c in d.get("conditions", ())),
            phrase_template=d["phrase"],
            ap_goal_template=tuple(
                (lit["predicate"], tuple(lit.get("args", ())), lit.get("positive", True))
                for lit in d.get("ap_goal", ())),
            witnesses=dict(d.get("witnesses", {})),
        )


def _placeholders(template: str) -> list[str]:
    return [f for _, f, _, _ in string.Formatter().parse(template) if f is not None]


@dataclass(frozen=True)
class GroundGoalOption:
    id: str
    phrase: str
    ap_goal: tuple[Literal, ...]
    goal_name: str = ""
    binding: tuple[str, ...] = ()


DO_NOTHING = "DoNothing"

_BURNING_CONTAINER = Condition("has-relation", rel_type="InsideOf", role="succ",
                               other=Condition("has-relation", rel_type="Burning", role="succ"))


def builtin_registry() -> list[GeneralGoal]:
    return [
        GeneralGoal(DO_NOTHING, (), (Condition("always"),), "Do nothing"),
        GeneralGoal(
            "SavePerson", ("Person",), (_BURNING_CONTAINER,),
            "Take {0} out of the fire",
            (("inside_of", ("{0}", "{zone}"), True),),
            witnesses={"zone": "SafeZone"},
        ),
        GeneralGoal("PutOutFire", ("Fire",), (), "Put out {0}", (("extinguished", ("{0}",), True),)),
        GeneralGoal(
            "HealPerson", ("Person",), (Condition("has-property", name="injured", value=True),),
            "Heal {0}", (("healed", ("{0}",), True),),
        ),
        GeneralGoal(
            "CallFirefighters", (), (Condition("world-flag", name="firefighters_called", value=False),),
            "Call the firefighters", (("firefighters_called", (), True),),
        ),
    ]


def load_registry(text: str, base: Optional[Sequence[GeneralGoal]] = None) -> list[GeneralGoal]:
    """Overlay goals from a JSON list onto ``base`` (the builtins by default).

    Entries whose name matches an existing goal replace it in place; new names
    are appended.
    """
    data = json.loads(text)
    if isinstance(data, Mapping):
        data = data.get("goals", [])
    goals = list(builtin_registry() if base is None else base)
    index = {g.name: i for i, g in enumerate(goals)}
    for entry in data:
        try:
            g = GeneralGoal.from_dict(entry)
        except (KeyError, TypeError) as exc:
            raise GoalError(f"invalid goal entry {entry!r}: {exc}") from None
        if g.name in index:
            goals[index[g.name]] = g
        else:
            index[g.name] = len(goals)
            goals.append(g)
    return goals


def instantiate_all(world: WorldState, registry: Optional[Sequence[GeneralGoal]] = None) -> list[GroundGoalOption]:
    """All options for ``world``: registry order, then uid order; DoNothing first."""
    registry = builtin_registry() if registry is None else registry
    options: list[GroundGoalOption] = []
    for goal in registry:
        options.extend(goal.instantiate(world))
    nothing = [o for o in options if o.id == DO_NOTHING]
    if not nothing:
        nothing = [GroundGoalOption(DO_NOTHING, "Do nothing", (), DO_NOTHING)]
    return nothing[:1] + [o for o in options if o.id != DO_NOTHING]


def planner_goal_of(option: GroundGoalOption) -> tuple[Literal, ...]:
    return option.ap_goal
