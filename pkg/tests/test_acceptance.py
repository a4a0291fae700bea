"""Acceptance criteria 1 to 10.

Each test records its outcome in ``conftest.ACCEPTANCE_RESULTS``; the
terminal summary prints one PASS/FAIL line per criterion.  Run this module
alone with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""
import random
import time
import warnings
from contextlib import contextmanager
from pathlib import Path

from hypothesis import given, settings, strategies as st

import hybrid_npc.runner as runner_mod
from conftest import ACCEPTANCE_RESULTS, DATA, SAMPLE_ANSWER, data_text
from hybrid_npc.chat import STRICT_PREFIX, ChatBackend, StubChatServer
from hybrid_npc.cli import main as cli_main
from hybrid_npc.goals import instantiate_all, planner_goal_of
from hybrid_npc.interface import AgentController, load_binding
from hybrid_npc.pddl import (
    Literal, PDDLError, parse_domain, parse_problem, print_domain, print_problem,
)
from hybrid_npc.planner import (
    SearchConfig, Unsolvable, bfs_optimal, ground, solve, validate_plan,
)
from hybrid_npc.reasoner import (
    CLOSING_LINE, MemoryStream, RecordingBackend, ReplayBackend, ScriptedBackend,
    parse_choice, sync_memories,
)
from hybrid_npc.runner import AgentSpec, RunConfig, preset, run, write_trace
from hybrid_npc.world import EnvAction, Perception, step
from strips_gen import random_instance

FF = "Sim_01_FireFighter_0"
FF2 = "Sim_01_FireFighter_1"
MED = "Sim_01_Paramedic_0"
PETER = "Sim_01_CommonPerson_0"
FIRE = "Sim_01_Fire_0"
EXT = "Sim_01_FireExtinguisher_0"
ZONE = "Sim_01_SafeZone_0"
REFERENCE_SCHEMAS = ["go_from_to", "takeExtinguisher", "go_from_to", "putOutFire"]
FIXTURES = [("simplified_domain.pddl", "simplified_problem.pddl"),
            ("simplified_domain_extinguished.pddl", "simplified_problem_extinguished.pddl")]


@contextmanager
def criterion(n, title):
    ACCEPTANCE_RESULTS[n] = (title, False)
    yield
    ACCEPTANCE_RESULTS[n] = (title, True)


def parse_plan_lines(domain, problem, lines):
    by_text = {str(a): a for a in ground(domain, problem)}
    return [by_text[line] for line in lines]


def test_c01_reference_plan(capsys):
    with criterion(1, "simplified fixtures give a valid 4-step plan in under 1 s"):
        for dom_file, prob_file in FIXTURES:
            d = parse_domain(data_text(dom_file))
            p = parse_problem(data_text(prob_file), d)
            start = time.perf_counter()
            code = cli_main(["plan", "--domain", str(DATA / dom_file),
                             "--problem", str(DATA / prob_file)])
            elapsed = time.perf_counter() - start
            lines = capsys.readouterr().out.splitlines()
            assert code == 0 and len(lines) == 4
            plan = parse_plan_lines(d, p, lines)
            assert validate_plan(d, p, plan)
            assert sorted(a.name for a in plan) == sorted(REFERENCE_SCHEMAS)
            assert elapsed < 1.0, f"{dom_file}: {elapsed:.3f}s"


def test_c02_random_planning_suite():
    with criterion(2, "500 random instances: sound, complete, greedy within 3x, A* optimal"):
        rng = random.Random(2024)
        start = time.perf_counter()
        greedy_ok = solved = 0
        n = 500
        for i in range(n):
            d, p = random_instance(rng)
            try:
                opt = bfs_optimal(d, p)
            except Unsolvable:
                opt = None
            try:
                g = solve(d, p, SearchConfig("gbfs", "h_add"))
            except Unsolvable:
                g = None
            try:
                a = solve(d, p, SearchConfig("astar", "h_zero"))
            except Unsolvable:
                a = None
            assert (g is None) == (opt is None) == (a is None), f"instance {i}"
            if opt is None:
                continue
            solved += 1
            assert validate_plan(d, p, g) and validate_plan(d, p, a), f"instance {i}"
            assert len(a) == len(opt), f"instance {i}: A* {len(a)} vs optimal {len(opt)}"
            greedy_ok += len(g) <= 3 * len(opt)
        elapsed = time.perf_counter() - start
        assert solved > 0
        assert greedy_ok >= 0.95 * solved
        assert elapsed < 60.0, f"{elapsed:.1f}s"


def test_c03_firefighter_rescue():
    with criterion(3, "FP save-first rescues within 50 ticks with a single rethink"):
        start = time.perf_counter()
        s = run(data_text("firefighter.json"),
                [AgentSpec(FF, preset("FP"), ScriptedBackend("save-first"))],
                RunConfig(max_ticks=50, termination="rescued"))
        elapsed = time.perf_counter() - start
        assert s.terminated and s.reason == "rescued" and s.ticks <= 50
        assert ZONE in {r.pred_uid for r in s.world.relations_of("InsideOf", succ=PETER)}
        rethinks = [e for e in s.events if e.kind == "rethink"]
        assert [e.tick for e in rethinks] == [0]
        replans = [e for e in s.events if e.kind == "replanned"]
        assert replans
        for e in replans:
            assert e.payload["ap_changed"] or e.payload["goal_changed"]
            assert not e.payload["action_failed"]
        assert elapsed < 5.0, f"{elapsed:.2f}s"


def test_c04_put_out_fire_first():
    with criterion(4, "put-out-fire-first removes the fire after taking the extinguisher"):
        start = time.perf_counter()
        s = run(data_text("firefighter.json"),
                [AgentSpec(FF, preset("FF"), ScriptedBackend("put-out-fire-first"))],
                RunConfig(max_ticks=100, termination="fire-out"))
        elapsed = time.perf_counter() - start
        assert s.reason == "fire-out" and FIRE not in s.world.entities
        emitted = [e.payload["action"] for e in s.events if e.kind == "action_emitted"]
        kinds = [(a["kind"], a.get("target")) for a in emitted]
        take = kinds.index(("Take", EXT))
        put = kinds.index(("ExtinguishFire", FIRE))
        assert take < put
        assert elapsed < 5.0, f"{elapsed:.2f}s"


def test_c05_memory_stream_properties():
    with criterion(5, "memory stream properties hold over 1000 generated sequences"):
        profile = preset("FP")
        seen = []

        @settings(max_examples=1000, deadline=None, database=None)
        @given(st.lists(st.lists(st.sampled_from("abcdefghij"), unique=True, max_size=10),
                        min_size=1, max_size=10))
        def prop(sequence):
            seen.append(1)
            s = MemoryStream(profile)
            for tick, keys in enumerate(sequence):
                before = [(m.key, m.text, m.tick_added, m.retirement) for m in s.memories]
                current = [Perception(k, f"fact {k}") for k in keys]
                report = sync_memories(s, current, tick)
                after = [(m.key, m.text, m.tick_added, m.retirement) for m in s.memories]
                # append-only
                assert after[:len(before)] == before
                # live memories mirror the current perceptions
                assert sorted(s.live_keys()) == sorted(keys)
                # a second sync against the same perceptions is a no-op
                again = sync_memories(s, current, tick)
                assert (again.added, again.retired) == (0, 0)
                assert report.changed == (after != before)
                # retirement notes quote the original text
                for m in s.memories[len(before):]:
                    if m.retirement:
                        assert m.text == f"fact {m.key}: is no longer true"
            # every retired memory has exactly one retirement note
            dead = [m for m in s.memories if not m.live and not m.retirement]
            notes = [m for m in s.memories if m.retirement]
            assert len(dead) == len(notes)

        prop()
        assert len(seen) >= 1000


def test_c06_golden_prompt():
    with criterion(6, "initial FP prompt matches the golden snapshot"):
        prompts = []

        def capture(prompt, options, strict=False):
            prompts.append(prompt)
            return 2

        run(data_text("firefighter.json"), [AgentSpec(FF, preset("FP"), capture)],
            RunConfig(max_ticks=1))
        golden = Path(__file__).parent / "golden" / "fp_initial_prompt.txt"
        text = prompts[0]
        assert text + "\n" == golden.read_text(encoding="utf-8")
        lines = text.splitlines()
        assert "My duty is to put out fires and, above all, to save people." in lines
        assert "1. Do nothing" in lines
        assert lines[-1] == CLOSING_LINE


def test_c07_chat_endpoint_contract(firefighter_world):
    with criterion(7, "chat requests, answer parsing, strict retry and fallback"):
        assert parse_choice(SAMPLE_ANSWER, 4) == 1
        binding = load_binding()
        with StubChatServer(["I would choose option 2.", "I am not sure.", "Hard to say."]) as stub:
            ctrl = AgentController(FF, preset("FP"), ChatBackend(stub.url, timeout=5), binding)
            ctrl.update(firefighter_world)
            goal = ctrl.current_goal
            assert goal == f"SavePerson({PETER})"
            w, _, _ = step(firefighter_world, [(PETER, EnvAction("CallFirefighters", PETER))])
            out = ctrl.update(w)
            assert len(stub.requests) == 3
            for req in stub.requests:
                assert req["temperature"] == 0
                assert [m["role"] for m in req["messages"]] == ["system", "user"]
            assert not stub.requests[1]["messages"][0]["content"].startswith(STRICT_PREFIX)
            assert stub.requests[2]["messages"][0]["content"].startswith(STRICT_PREFIX)
        assert ctrl.current_goal == goal
        assert [e.kind for e in out.events].count("warning") == 1
        assert next(e for e in out.events if e.kind == "rethink").payload["backend_calls"] == 2


def test_c08_goal_options(firefighter_world, two_fire_world):
    with criterion(8, "goal options, phrases and planner goals"):
        opts = instantiate_all(firefighter_world)
        phrases = [o.phrase for o in opts]
        assert "Take Peter out of the fire" in phrases
        assert "Put out Sim_01_Fire_0" in phrases
        save = next(o for o in opts if o.phrase == "Take Peter out of the fire")
        assert planner_goal_of(save) == (Literal("inside_of", (PETER, ZONE)),)
        assert sum(o.goal_name == "PutOutFire" for o in instantiate_all(two_fire_world)) == 2


def _checked_step(violations):
    def checked(world, submissions):
        new, statuses, changes = step(world, submissions)
        carried = [r.succ_uid for r in new.relations.values() if r.rel_type == "Carrying"]
        if len(carried) != len(set(carried)):
            violations.append((world.tick, "carried twice"))
        before, after = set(world.entities), set(new.entities)
        if after - before:
            violations.append((world.tick, f"appeared {sorted(after - before)}"))
        vanished = [u for u in before - after if world.entities[u].entity_type != "Fire"]
        if vanished:
            violations.append((world.tick, f"vanished {vanished}"))
        return new, statuses, changes
    return checked


def test_c09_four_agent_determinism(tmp_path, monkeypatch):
    with criterion(9, "four-agent record then replay is byte-identical and consistent"):
        policies = {PETER: ("CI", "call-first"), FF: ("FP", "save-first"),
                    FF2: ("FF", "put-out-fire-first"), MED: ("PA", "heal-first")}
        violations = []
        monkeypatch.setattr(runner_mod, "step", _checked_step(violations))
        cfg = RunConfig(max_ticks=150)
        recorders = {u: RecordingBackend(ScriptedBackend(p)) for u, (_, p) in policies.items()}
        first = run(data_text("firefighter_four_agents.json"),
                    [AgentSpec(u, preset(c), recorders[u]) for u, (c, _) in policies.items()], cfg)
        write_trace(first.events, tmp_path / "trace0.jsonl")
        for u, rec in recorders.items():
            rec.dump(tmp_path / f"{u}.rec.jsonl")
        for i in (1, 2):
            again = run(data_text("firefighter_four_agents.json"),
                        [AgentSpec(u, preset(c), ReplayBackend(tmp_path / f"{u}.rec.jsonl"))
                         for u, (c, _) in policies.items()], cfg)
            write_trace(again.events, tmp_path / f"trace{i}.jsonl")
        t0, t1, t2 = ((tmp_path / f"trace{i}.jsonl").read_bytes() for i in range(3))
        assert t0 == t1 == t2
        assert first.terminated
        assert first.facts["rescued"] and first.facts["fire_extinguished"]
        assert not violations, violations[:5]


def test_c10_parser_round_trip_and_fuzz():
    with criterion(10, "fixtures round-trip and 10,000 fuzzed inputs raise only PDDLError"):
        for dom_file, prob_file in FIXTURES:
            d = parse_domain(data_text(dom_file))
            assert parse_domain(print_domain(d)) == d
            p = parse_problem(data_text(prob_file), d)
            assert parse_problem(print_problem(p), d) == p
        domain = parse_domain(data_text("simplified_domain.pddl"))
        seeds = [data_text(f).encode() for pair in FIXTURES for f in pair]
        rng = random.Random(10)
        unexpected = []
        for i in range(10_000):
            if i % 2:
                blob = rng.randbytes(rng.randrange(0, 300))
            else:
                # mutate a fixture so the fuzz also reaches the parser past tokenizing
                buf = bytearray(rng.choice(seeds))
                for _ in range(rng.randrange(1, 8)):
                    pos = rng.randrange(len(buf))
                    op = rng.randrange(3)
                    if op == 0:
                        buf[pos] = rng.randrange(256)
                    elif op == 1:
                        del buf[pos:pos + rng.randrange(1, 20)]
                    else:
                        buf[pos:pos] = bytes([rng.choice(b"()?-: \n\t;abcxyz0129")])
                blob = bytes(buf)
            for parse in (parse_domain, lambda b: parse_problem(b, domain)):
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        parse(blob)
                except PDDLError:
                    pass
                except Exception as exc:  # noqa: BLE001
                    unexpected.append((i, type(exc).__name__, str(exc)[:80]))
        assert not unexpected, unexpected[:5]


if __name__ == "__main__":
    import sys

    import pytest

    sys.exit(pytest.main([__file__, "-q"]))
