from __future__ import annotations

from importlib import resources

import pytest

from hybrid_npc.world import load_scenario

# a free-text answer from a chat model that should parse as option 1
SAMPLE_ANSWER = """As a firefighter, my priority
    is to save lives, so I would first
    assess the situation and determine
    the best course of action. In this
    case, there is a person inside the
    burning building, which means that
    saving them should be my top priority.
    Therefore, I would choose option 1:
    Save p1."""

DATA = resources.files("hybrid_npc") / "data"

# filled by test_acceptance.py: criterion number -> (title, passed)
ACCEPTANCE_RESULTS: dict[int, tuple[str, bool]] = {}


def data_text(name: str) -> str:
    return (DATA / name).read_text(encoding="utf-8")


@pytest.fixture
def firefighter_world():
    return load_scenario(data_text("firefighter.json"))


@pytest.fixture
def four_agent_world():
    return load_scenario(data_text("firefighter_four_agents.json"))


@pytest.fixture
def two_fire_world():
    return load_scenario(data_text("firefighter_two_fires.json"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        title, ok = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {n:2d}: {title}")
