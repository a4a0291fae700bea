"""Grounding, heuristic forward search, plan validation and a BFS oracle."""
from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .pddl import Atom, Domain, Literal, ProblemSpec, check_problem

DEFAULT_MAX_EXPANSIONS = 100_000


class PlanningError(Exception):
    pass


class Unsolvable(PlanningError):
    """The reachable state space contains no goal state."""


class ResourceExhausted(PlanningError):
    """Search stopped after ``max_expansions`` expansions."""


class BoundExceeded(PlanningError):
    """The oracle hit its state bound before deciding the instance."""


class PreconditionViolated(PlanningError):
    pass


@dataclass(frozen=True, order=True)
class GroundAction:
    name: str
    args: tuple[str, ...]
    pre_pos: frozenset = field(default=frozenset(), compare=False)
    pre_neg: frozenset = field(default=frozenset(), compare=False)
    add: frozenset = field(default=frozenset(), compare=False)
    delete: frozenset = field(default=frozenset(), compare=False)

    def __str__(self) -> str:
        return "(" + " ".join((self.name, *self.args)) + ")"


@dataclass(frozen=True)
class Plan:
    actions: tuple[GroundAction, ...] = ()

    @property
    def cost(self) -> int:
        return len(self.actions)

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def lines(self) -> list[str]:
        return [str(a) for a in self.actions]


@dataclass(frozen=True)
class SearchConfig:
    strategy: str = "gbfs"  # "gbfs" | "astar"
    heuristic: str = "h_add"  # "h_add" | "h_zero"
    max_expansions: int = DEFAULT_MAX_EXPANSIONS

    def __post_init__(self):
        if self.strategy not in ("gbfs", "astar"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.heuristic not in ("h_add", "h_zero"):
            raise ValueError(f"unknown heuristic {self.heuristic!r}")
        if self.max_expansions < 1:
            raise ValueError("max_expansions must be >= 1")


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    failed_step: Optional[int] = None  # 1-based; None when the goal check failed
    failed_literal: Optional[Literal] = None
    message: str = ""

    def __bool__(self) -> bool:
        return self.valid


# --------------------------------------------------------------------------
# grounding


def _objects_by_type(domain: Domain, problem: ProblemSpec) -> dict[str, list[str]]:
    tree = domain.type_tree
    by_type: dict[str, list[str]] = {t: [] for t in tree.names}
    for obj in sorted(problem.objects):
        for t in tree.ancestors(problem.objects[obj]):
            by_type[t].append(obj)
    return by_type


def ground(domain: Domain, problem: ProblemSpec) -> list[GroundAction]:
    """Every type-consistent instantiation of every action schema, sorted by
    (schema name, args).  Distinct parameters may bind the same object."""
    by_type = _objects_by_type(domain, problem)
    out: list[GroundAction] = []
    for schema in domain.actions:
        names = [n for n, _ in schema.params]
        domains = [by_type[t] for _, t in schema.params]
        for combo in itertools.product(*domains):
            sub = dict(zip(names, combo))

            def inst(lit: Literal) -> Atom:
                return (lit.predicate, *(sub[a] for a in lit.args))

            add = frozenset(inst(l) for l in schema.effect if l.positive)
            # add wins when a binding makes an add and a delete coincide
            delete = frozenset(inst(l) for l in schema.effect if not l.positive) - add
            out.append(GroundAction(
                schema.name, tuple(combo),
                frozenset(inst(l) for l in schema.precondition if l.positive),
                frozenset(inst(l) for l in schema.precondition if not l.positive),
                add, delete,
            ))
    out.sort()
    return out


def applicable(a: GroundAction, state: frozenset) -> bool:
    return a.pre_pos <= state and not (a.pre_neg & state)


def apply(a: GroundAction, state: frozenset) -> frozenset:
    if not applicable(a, state):
        raise PreconditionViolated(f"{a} is not applicable")
    return (state - a.delete) | a.add


def goal_satisfied(goal: Iterable[Literal], state: frozenset) -> bool:
    return all(lit.holds(state) for lit in goal)


# --------------------------------------------------------------------------
# heuristics


def h_add(state: frozenset, goal: Sequence[Literal], actions: Sequence[GroundAction]) -> float:
    """Additive delete-relaxation heuristic.

    Atom costs come from a generalized Dijkstra over the relaxed problem:
    atoms in ``state`` cost 0 and an action costs 1 plus the sum of its
    positive precondition costs.  Negative goal literals count 0.
    """
    targets = {lit.atom for lit in goal if lit.positive}
    if not targets:
        return 0.0
    cost: dict[Atom, float] = {}
    heap: list[tuple[float, Atom]] = []
    for atom in state:
        cost[atom] = 0.0
        heap.append((0.0, atom))
    waiting: dict[Atom, list[int]] = {}
    missing = [len(a.pre_pos) for a in actions]
    acc = [0.0] * len(actions)
    for i, a in enumerate(actions):
        for p in a.pre_pos:
            waiting.setdefault(p, []).append(i)
        if not a.pre_pos:
            for q in a.add:
                if cost.get(q, math.inf) > 1.0:
                    cost[q] = 1.0
                    heap.append((1.0, q))
    heapq.heapify(heap)
    done: set[Atom] = set()
    remaining = set(targets)
    while heap and remaining:
        c, atom = heapq.heappop(heap)
        if atom in done or c > cost[atom]:
            continue
        done.add(atom)
        remaining.discard(atom)
        for i in waiting.get(atom, ()):
            missing[i] -= 1
            acc[i] += c
            if missing[i] == 0:
                nc = 1.0 + acc[i]
                for q in actions[i].add:
                    if nc < cost.get(q, math.inf):
                        cost[q] = nc
                        heapq.heappush(heap, (nc, q))
    if remaining:
        return math.inf
    return float(sum(cost[t] for t in targets))


def h_zero(state: frozenset, goal: Sequence[Literal], actions: Sequence[GroundAction]) -> float:
    return 0.0


_HEURISTICS = {"h_add": h_add, "h_zero": h_zero}


# --------------------------------------------------------------------------
# search


def _canonical(state: frozenset) -> tuple:
    return tuple(sorted(state))


def _extract(parents: dict, key: tuple) -> Plan:
    steps: list[GroundAction] = []
    while parents[key] is not None:
        key, action = parents[key]
        steps.append(action)
    return Plan(tuple(reversed(steps)))


def search(init: frozenset, goal: Sequence[Literal], actions: Sequence[GroundAction],
           cfg: SearchConfig = SearchConfig()) -> Plan:
    """Forward search over already-grounded actions (kept in tie-break order)."""
    h = _HEURISTICS[cfg.heuristic]
    counter = itertools.count()
    start = frozenset(init)
    skey = _canonical(start)
    h0 = h(start, goal, actions)
    if h0 == math.inf:
        raise Unsolvable("goal unreachable even in the delete relaxation")
    parents: dict[tuple, Optional[tuple]] = {skey: None}
    best_g = {skey: 0}
    closed: set[tuple] = set()
    astar = cfg.strategy == "astar"
    open_list = [((h0, 0) if astar else (h0,), next(counter), 0, start, skey)]
    expansions = 0
    while open_list:
        _, _, g, state, key = heapq.heappop(open_list)
        if key in closed or g > best_g[key]:
            continue
        if goal_satisfied(goal, state):
            return _extract(parents, key)
        closed.add(key)
        expansions += 1
        if expansions > cfg.max_expansions:
            raise ResourceExhausted(f"no plan within {cfg.max_expansions} expansions")
        for a in actions:
            if not applicable(a, state):
                continue
            succ = (state - a.delete) | a.add
            skey2 = _canonical(succ)
            g2 = g + 1
            if skey2 in closed and not astar:
                continue
            if skey2 in best_g and best_g[skey2] <= g2:
                continue
            hv = h(succ, goal, actions)
            if hv == math.inf:
                continue
            closed.discard(skey2)
            best_g[skey2] = g2
            parents[skey2] = (key, a)
            prio = (g2 + hv, hv) if astar else (hv,)
            heapq.heappush(open_list, (prio, next(counter), g2, succ, skey2))
    raise Unsolvable("search space exhausted")


def solve(domain: Domain, problem: ProblemSpec, cfg: SearchConfig = SearchConfig()) -> Plan:
    """Find a plan, or raise :class:`Unsolvable` / :class:`ResourceExhausted`."""
    check_problem(domain, problem)
    return search(problem.init, problem.goal, ground(domain, problem), cfg)


def validate_plan(domain: Domain, problem: ProblemSpec, plan: Iterable[GroundAction]) -> ValidationReport:
    state = frozenset(problem.init)
    for step, a in enumerate(plan, start=1):
        for atom in sorted(a.pre_pos):
            if atom not in state:
                lit = Literal(atom[0], tuple(atom[1:]))
                return ValidationReport(False, step, lit, f"step {step} {a}: {lit} does not hold")
        for atom in sorted(a.pre_neg):
            if atom in state:
                lit = Literal(atom[0], tuple(atom[1:]), positive=False)
                return ValidationReport(False, step, lit, f"step {step} {a}: {lit} does not hold")
        state = (state - a.delete) | a.add
    for lit in problem.goal:
        if not lit.holds(state):
            return ValidationReport(False, None, lit, f"goal {lit} does not hold after the plan")
    return ValidationReport(True)


def bfs_optimal(domain: Domain, problem: ProblemSpec, state_bound: int = 100_000) -> Plan:
    """Breadth-first search returning a length-optimal plan.

    Raises :class:`BoundExceeded` once more than ``state_bound`` distinct
    states have been seen, :class:`Unsolvable` when the space is exhausted.
    """
    check_problem(domain, problem)
    actions = ground(domain, problem)
    start = frozenset(problem.init)
    parents: dict[frozenset, Optional[tuple]] = {start: None}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        if goal_satisfied(problem.goal, state):
            steps = []
            while parents[state] is not None:
                state, a = parents[state]
                steps.append(a)
            return Plan(tuple(reversed(steps)))
        for a in actions:
            if applicable(a, state):
                succ = (state - a.delete) | a.add
                if succ not in parents:
                    if len(parents) >= state_bound:
                        raise BoundExceeded(f"more than {state_bound} states")
                    parents[succ] = (state, a)
                    queue.append(succ)
    raise Unsolvable("state space exhausted")
