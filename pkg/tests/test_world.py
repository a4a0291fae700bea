import json

import pytest

from conftest import data_text
from hybrid_npc.world import (
    DONE, IN_PROGRESS, EnvAction, ScenarioError, SimConfig, action_complete, failed,
    load_scenario, perceptions, step,
)

FF = "Sim_01_FireFighter_0"
PETER = "Sim_01_CommonPerson_0"
CAR = "Sim_01_CommonCar_0"
FIRE = "Sim_01_Fire_0"
EXT = "Sim_01_FireExtinguisher_0"
ZONE = "Sim_01_SafeZone_0"


def scenario(agents=(), relations=(), sim_config=None):
    doc = {"agents": {a["UID"]: a for a in agents}, "relations": {r["UID"]: r for r in relations}}
    if sim_config:
        doc["sim_config"] = sim_config
    return json.dumps(doc)


def agent(uid, agent_type, pos, **extra):
    return {"UID": uid, "agent_type": agent_type, "front_end_parameters": {"position": list(pos)}, **extra}


def teleport(world, uid, pos):
    from dataclasses import replace
    ents = dict(world.entities)
    ents[uid] = replace(ents[uid], position=pos)
    return replace(world, entities=ents)


def run_until_done(world, action, limit=50):
    for _ in range(limit):
        world, statuses, _ = step(world, [(action.actor, action)])
        if action_complete(statuses[action.actor]):
            return world, statuses[action.actor]
    raise AssertionError("action never completed")


def test_load_firefighter(firefighter_world):
    w = firefighter_world
    assert w.entities[EXT].entity_type == "Extinguisher"
    assert w.entities[EXT].position == (-10.0, 20.32)
    assert w.entities[PETER].label == "Peter"
    assert w.entities[PETER].properties["can_be_moved"] is True
    assert w.entities[FF].running
    assert {r.rel_type for r in w.relations.values()} == {"Burning", "InsideOf"}
    assert w.is_trapped(PETER)
    assert w.config == SimConfig()


def test_four_agent_injury_is_a_property(four_agent_world):
    assert four_agent_world.entities[PETER].properties.get("injured") is True


@pytest.mark.parametrize("doc,msg", [
    ("[1]", "JSON object"),
    ("{not json", "not valid JSON"),
    (json.dumps({"agents": {"x": agent("a", "AGFire", (0, 0)), "y": agent("a", "AGFire", (1, 1))}}), "duplicate"),
    (scenario([{"UID": "a", "agent_type": "AGFire", "front_end_parameters": {"position": [1]}}]), "position"),
    (scenario([agent("a", "AGFire", (0, 0))], [{"UID": "r", "type": "RELBurning", "rel_pred": "a", "rel_succ": "zz"}]), "unknown entity"),
    (scenario([agent("a", "AGFire", (0, 0))], [{"UID": "r", "type": "Burning", "rel_pred": "a", "rel_succ": "a"}]), "REL"),
    (scenario(sim_config={"warp": 3}), "sim_config"),
])
def test_scenario_errors(doc, msg):
    with pytest.raises(ScenarioError, match=msg):
        load_scenario(doc)


def test_unknown_type_strict_vs_lenient():
    doc = scenario([agent("a", "Spaceship", (0, 0))])
    assert load_scenario(doc).entities["a"].entity_type == "Generic"
    with pytest.raises(ScenarioError):
        load_scenario(doc, strict=True)


def test_move_speed_and_arrival(firefighter_world):
    w = firefighter_world
    move = EnvAction("MoveTo", FF, position=(0.0, 0.0))
    w2, st, _ = step(w, [(FF, move)])
    assert st[FF] == IN_PROGRESS
    assert w.distance(FF, CAR) - w2.distance(FF, CAR) == pytest.approx(2.0)
    w3, status = run_until_done(w2, move)
    assert status == DONE
    assert w3.entities[FF].position == (0.0, 0.0)


def test_take_requires_colocation(firefighter_world):
    _, st, _ = step(firefighter_world, [(FF, EnvAction("Take", FF, EXT))])
    assert st[FF] == failed("NotColocated")


def test_take_unknown_and_non_movable(firefighter_world):
    w = teleport(firefighter_world, FF, (0.0, 0.0))
    _, st, _ = step(w, [(FF, EnvAction("Take", FF, "nobody"))])
    assert st[FF] == failed("UnknownTarget")
    _, st, _ = step(w, [(FF, EnvAction("Take", FF, CAR))])
    assert st[FF] == failed("NotMovable")


def test_extinguish_needs_extinguisher(firefighter_world):
    w = teleport(firefighter_world, FF, (0.0, 0.0))
    _, st, _ = step(w, [(FF, EnvAction("ExtinguishFire", FF, FIRE))])
    assert st[FF] == failed("NoExtinguisherHeld")


def test_full_extinguish_sequence(firefighter_world):
    w = firefighter_world
    w, st = run_until_done(w, EnvAction("MoveTo", FF, position=w.entities[EXT].position))
    w, st, _ = step(w, [(FF, EnvAction("Take", FF, EXT))])
    assert st[FF] == DONE and w.carrier_of(EXT) == FF
    w, st = run_until_done(w, EnvAction("MoveTo", FF, position=(0.0, 0.0)))
    assert w.entities[EXT].position == w.entities[FF].position  # carried along
    statuses = []
    for _ in range(3):
        w, st, events = step(w, [(FF, EnvAction("ExtinguishFire", FF, FIRE))])
        statuses.append(st[FF])
    assert statuses == [IN_PROGRESS, IN_PROGRESS, DONE]
    assert FIRE not in w.entities
    assert not w.relations_of("Burning")
    assert ("entity_removed", FIRE) in {(e.kind, e.subject) for e in events}


def test_extinguish_progress_resets_when_interrupted(firefighter_world):
    w = teleport(firefighter_world, FF, (-10.0, 20.32))
    w, _, _ = step(w, [(FF, EnvAction("Take", FF, EXT))])
    w = teleport(w, FF, (0.0, 0.0))
    ext = EnvAction("ExtinguishFire", FF, FIRE)
    w, _, _ = step(w, [(FF, ext)])
    w, _, _ = step(w, [(FF, EnvAction("Noop", FF))])
    for _ in range(2):
        w, st, _ = step(w, [(FF, ext)])
        assert st[FF] == IN_PROGRESS
    w, st, _ = step(w, [(FF, ext)])
    assert st[FF] == DONE


def test_rescue_drop_in_safe_zone(firefighter_world):
    w = teleport(firefighter_world, FF, (0.0, 0.0))
    w, st, _ = step(w, [(FF, EnvAction("Take", FF, PETER))])
    assert st[FF] == DONE
    # still inside the car until dropped
    assert w.relations_of("InsideOf", pred=CAR, succ=PETER)
    w, _, _ = step(w, [(FF, EnvAction("Take", FF, EXT))])
    w, _ = run_until_done(w, EnvAction("MoveTo", FF, position=(20.0, 15.0)))
    w, st, _ = step(w, [(FF, EnvAction("Drop", FF, PETER))])
    assert st[FF] == DONE
    assert w.relations_of("InsideOf", pred=ZONE, succ=PETER)
    assert not w.relations_of("InsideOf", pred=CAR)
    assert w.carrier_of(PETER) is None


def test_drop_outside_zone_and_not_carrying(firefighter_world):
    w = teleport(firefighter_world, FF, (0.0, 0.0))
    _, st, _ = step(w, [(FF, EnvAction("Drop", FF, PETER))])
    assert st[FF] == failed("NotCarrying")
    w, _, _ = step(w, [(FF, EnvAction("Take", FF, PETER))])
    w, _, _ = step(w, [(FF, EnvAction("MoveTo", FF, position=(5.0, 0.0)))])
    w, st, _ = step(w, [(FF, EnvAction("Drop", FF, PETER))])
    assert st[FF] == DONE
    assert not w.relations_of("InsideOf", succ=PETER)
    assert not w.is_trapped(PETER)


def test_carrying_exclusive(four_agent_world):
    w = teleport(teleport(four_agent_world, FF, (0.0, 0.0)), "Sim_01_FireFighter_1", (0.0, 0.0))
    w, st, _ = step(w, [(FF, EnvAction("Take", FF, PETER)),
                        ("Sim_01_FireFighter_1", EnvAction("Take", "Sim_01_FireFighter_1", PETER))])
    assert st[FF] == DONE
    assert st["Sim_01_FireFighter_1"] == failed("AlreadyCarried")
    assert len(w.relations_of("Carrying", succ=PETER)) == 1


def test_trapped_person_cannot_move(firefighter_world):
    _, st, _ = step(firefighter_world, [(PETER, EnvAction("MoveTo", PETER, position=(3.0, 3.0)))])
    assert st[PETER] == failed("Trapped")


def test_heal(four_agent_world):
    med = "Sim_01_Paramedic_0"
    w = teleport(four_agent_world, med, (0.0, 0.0))
    w, st, _ = step(w, [(med, EnvAction("Heal", med, PETER))])
    assert st[med] == DONE
    assert w.entities[PETER].properties["healed"] and not w.entities[PETER].properties["injured"]
    _, st, _ = step(w, [(med, EnvAction("Heal", med, PETER))])
    assert st[med] == failed("NotInjured")


def test_call_firefighters_flag(firefighter_world):
    w, st, events = step(firefighter_world, [(PETER, EnvAction("CallFirefighters", PETER))])
    assert st[PETER] == DONE and w.flags["firefighters_called"]
    assert events[0].kind == "flag_set"


def test_hazard_injures_people_in_burning_cars():
    doc = json.loads(data_text("firefighter.json"))
    doc["sim_config"] = {"hazard_ticks": 2}
    w = load_scenario(doc)
    w, _, _ = step(w, [])
    assert not w.entities[PETER].properties.get("injured")
    w, _, _ = step(w, [])
    assert w.entities[PETER].properties.get("injured")


def test_duplicate_submission_rejected(firefighter_world):
    a = EnvAction("Noop", FF)
    with pytest.raises(ValueError):
        step(firefighter_world, [(FF, a), (FF, a)])


def test_non_agent_actor_fails(firefighter_world):
    _, st, _ = step(firefighter_world, [(CAR, EnvAction("Noop", CAR))])
    assert st[CAR].state == "failed"


def test_step_is_pure(firefighter_world):
    before = firefighter_world
    snapshot = (dict(before.entities), dict(before.relations), before.tick)
    step(before, [(FF, EnvAction("MoveTo", FF, position=(0.0, 0.0)))])
    assert (dict(before.entities), dict(before.relations), before.tick) == snapshot


def test_perceptions(firefighter_world):
    ps = perceptions(firefighter_world, FF)
    texts = [p.text for p in ps]
    assert "There is a fire called 'Sim_01_Fire_0'" in texts
    assert "There is a person called 'Peter'" in texts
    assert "'Sim_01_Fire_0' is burning 'Sim_01_CommonCar_0'" in texts
    assert "'Peter' is inside of 'Sim_01_CommonCar_0'" in texts
    assert len({p.key for p in ps}) == len(ps)
    assert perceptions(firefighter_world, FF) == ps
    with pytest.raises(KeyError):
        perceptions(firefighter_world, "ghost")


def test_env_action_validation():
    with pytest.raises(ValueError):
        EnvAction("Teleport", FF)
    assert EnvAction("Take", FF, EXT).describe() == f"taking '{EXT}'"
    assert EnvAction("MoveTo", FF, position=(1.0, 2.5)).to_dict() == {
        "kind": "MoveTo", "actor": FF, "position": [1.0, 2.5]}
