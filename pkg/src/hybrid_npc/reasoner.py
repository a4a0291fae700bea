"""Memory stream, prompt construction and goal selection."""
from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol, Sequence, Union

from .goals import DO_NOTHING, GroundGoalOption
from .world import Perception

log = logging.getLogger(__name__)

RETIREMENT_SUFFIX = ": is no longer true"
CLOSING_LINE = "Indicate the number of the chosen answer."


@dataclass(frozen=True)
class PersonalityProfile:
    agent_name: str
    agent_type: str
    traits: str

    def __post_init__(self):
        if not self.traits.strip():
            raise ValueError("personality traits must not be empty")

    def identity_line(self) -> str:
        return f"I am '{self.agent_name}', a {self.agent_type}."


@dataclass
class Memory:
    key: str
    text: str
    tick_added: int
    live: bool = True
    retirement: bool = False


@dataclass(frozen=True)
class ChangeReport:
    added: int = 0
    retired: int = 0

    @property
    def changed(self) -> bool:
        return bool(self.added or self.retired)


@dataclass
class MemoryStream:
    profile: PersonalityProfile
    memories: list[Memory] = field(default_factory=list)

    def live_keys(self) -> dict[str, Memory]:
        return {m.key: m for m in self.memories if m.live and not m.retirement}

    def visible(self) -> list[Memory]:
        """Memories shown to the reasoner: live perceptions and retirement notes."""
        return [m for m in self.memories if m.retirement or m.live]


def sync_memories(stream: MemoryStream, current: Iterable[Perception], tick: int = 0) -> ChangeReport:
    """Append unseen perceptions and retire memories whose perception vanished."""
    current = list(current)
    live = stream.live_keys()
    present = {p.key for p in current}
    retired = 0
    for m in list(stream.memories):
        if m.live and not m.retirement and m.key not in present:
            m.live = False
            stream.memories.append(Memory(m.key, m.text + RETIREMENT_SUFFIX, tick, live=False, retirement=True))
            retired += 1
    added = 0
    for p in current:
        if p.key not in live:
            stream.memories.append(Memory(p.key, p.text, tick))
            live[p.key] = stream.memories[-1]
            added += 1
    return ChangeReport(added, retired)


def build_prompt(stream: MemoryStream, current_action: Optional[str],
                 options: Sequence[GroundGoalOption], max_memories: Optional[int] = None) -> str:
    if not options:
        raise ValueError("cannot build a prompt without options")
    profile = stream.profile
    lines = [profile.identity_line(), profile.traits.strip()]
    shown = stream.visible()
    if shown:
        lines.append("I have the following perceptions:")
        if max_memories is not None and len(shown) > max_memories:
            evicted = len(shown) - max_memories
            shown = shown[evicted:]
            lines.append(f"- …and {evicted} earlier observations")
        lines += [f"- {m.text}" for m in shown]
    else:
        lines.append("I have no perceptions.")
    lines.append(f"I am currently: {current_action}" if current_action else "I am currently idle.")
    lines.append("What should I do? I must choose only one option:")
    lines += [f"{i}. {o.phrase}" for i, o in enumerate(options, start=1)]
    lines.append(CLOSING_LINE)
    return "\n".join(lines) + "\n"


class NoParsableChoice(ValueError):
    pass


_OPTION_RE = re.compile(r"\boption\s*(?:number\s*)?#?\s*(\d+)", re.IGNORECASE)
_INT_RE = re.compile(r"(?<![\w.])(\d+)(?![\w])")


def parse_choice(text: str, num_options: int) -> int:
    """1-based option index named in a free-text answer.

    The last in-range ``option <k>`` wins.  Only when no ``option <k>``
    mention exists at all does the last standalone in-range integer count.
    """
    if num_options < 1:
        raise ValueError("num_options must be >= 1")
    text = text if isinstance(text, str) else str(text)
    mentions = [int(m.group(1)) for m in _OPTION_RE.finditer(text)]
    if mentions:
        in_range = [k for k in mentions if 1 <= k <= num_options]
        if in_range:
            return in_range[-1]
        raise NoParsableChoice(f"option {mentions[-1]} is out of range 1..{num_options}")
    ints = [int(m.group(1)) for m in _INT_RE.finditer(text) if len(m.group(1)) < 6]
    in_range = [k for k in ints if 1 <= k <= num_options]
    if in_range:
        return in_range[-1]
    raise NoParsableChoice(f"no choice in 1..{num_options} found in response")


# --------------------------------------------------------------------------
# backends


class BackendError(RuntimeError):
    """Transport or protocol failure of a reasoning backend."""


class Backend(Protocol):
    def __call__(self, prompt: str, options: Sequence[GroundGoalOption], strict: bool = False) -> Union[str, int]:
        ...


POLICIES: dict[str, tuple[str, ...]] = {
    "save-first": ("SavePerson", "PutOutFire", DO_NOTHING),
    "put-out-fire-first": ("PutOutFire", "SavePerson", DO_NOTHING),
    "heal-first": ("HealPerson", "SavePerson", DO_NOTHING),
    "call-first": ("CallFirefighters", DO_NOTHING),
    "do-nothing": (DO_NOTHING,),
}


class ScriptedBackend:
    """Deterministic policy: the first offered option whose general goal comes
    earliest in a preference list.  ``first`` always answers option 1."""

    def __init__(self, policy: Union[str, Sequence[str]]):
        if isinstance(policy, str):
            if policy == "first":
                self.preferences: Optional[tuple[str, ...]] = None
            elif policy.startswith("prefer="):
                self.preferences = tuple(p for p in policy[7:].split(",") if p)
            elif policy in POLICIES:
                self.preferences = POLICIES[policy]
            else:
                raise ValueError(f"unknown policy {policy!r}; choose from "
                                 f"{', '.join(['first', 'prefer=A,B', *POLICIES])}")
        else:
            self.preferences = tuple(policy)
        self.name = policy if isinstance(policy, str) else "prefer=" + ",".join(policy)

    def __call__(self, prompt, options, strict=False) -> int:
        if self.preferences is None:
            return 1
        for goal_name in self.preferences:
            for i, o in enumerate(options, start=1):
                if o.goal_name == goal_name:
                    return i
        for i, o in enumerate(options, start=1):
            if o.id == DO_NOTHING:
                return i
        return 1


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ReplayBackend:
    """Answers from recorded ``{prompt_hash, response_text}`` JSONL lines."""

    def __init__(self, source: Union[str, Path, Iterable[dict]]):
        if isinstance(source, (str, Path)):
            lines = Path(source).read_text(encoding="utf-8").splitlines()
            source = [json.loads(line) for line in lines if line.strip()]
        self.responses: dict[str, str] = {}
        for rec in source:
            self.responses.setdefault(rec["prompt_hash"], rec["response_text"])

    def __call__(self, prompt, options, strict=False) -> str:
        try:
            return self.responses[prompt_hash(prompt)]
        except KeyError:
            raise BackendError(f"no recorded response for prompt {prompt_hash(prompt)[:12]}") from None


class RecordingBackend:
    """Wraps a backend and keeps replayable records of every answer."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.records: list[dict] = []

    def __call__(self, prompt, options, strict=False) -> str:
        answer = self.inner(prompt, options, strict)
        text = f"I would choose option {answer}." if isinstance(answer, int) else answer
        self.records.append({"prompt_hash": prompt_hash(prompt), "response_text": text})
        return text

    def dump(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# goal selection


@dataclass(frozen=True)
class GoalChoice:
    option_index: int
    option_id: str
    raw_response: str
    changed: bool
    attempts: int = 1


class GoalSelectionError(RuntimeError):
    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


def select_goal(backend: Backend, prompt: str, options: Sequence[GroundGoalOption],
                previous: Optional[str] = None) -> GoalChoice:
    """Ask ``backend`` for a choice; retry once in strict mode on failure."""
    if not options:
        raise ValueError("no options to choose from")
    errors = []
    for attempt, strict in enumerate((False, True), start=1):
        try:
            answer = backend(prompt, options, strict)
            if isinstance(answer, int) and not isinstance(answer, bool):
                if not 1 <= answer <= len(options):
                    raise NoParsableChoice(f"backend chose {answer}, outside 1..{len(options)}")
                index, raw = answer, str(answer)
            else:
                raw = str(answer)
                index = parse_choice(raw, len(options))
        except (BackendError, NoParsableChoice) as exc:
            log.warning("goal selection attempt %d failed: %s", attempt, exc)
            errors.append(str(exc))
            continue
        chosen = options[index - 1]
        return GoalChoice(index, chosen.id, raw, chosen.id != previous, attempt)
    raise GoalSelectionError("; ".join(errors), attempts=2)
