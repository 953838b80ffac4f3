"""Ordering constraints over placement sequences, goal specs, and env specs.

Constraints are evaluated over the *final placement order*: for every object
the last event that deposited it into a goal region, sorted by event index.
Events whose destination is ``None`` (the object came to rest outside every
goal region) do not count as placements.

Evaluation is completion-pessimistic: a constraint whose satisfaction cannot
be established from the sequence (for example because a referenced object
has not been placed yet) counts as violated. Each constraint contributes at
most one violation.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .world import Footprint, Region, Workspace, WorldState, contains, overlaps

MAX_ENUMERATION_K = 10


class UnknownObject(KeyError):
    pass


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class PlacementEvent:
    obj: str
    destination: str | None
    index: int


class OrderView:
    """Final placement order plus per-object placement counts."""

    __slots__ = ("order", "pos", "dest", "repeats")

    def __init__(self, order: Sequence[tuple[str, str]], repeats: Mapping[str, int] | None = None):
        self.order = list(order)
        self.pos = {o: i for i, (o, _) in enumerate(self.order)}
        self.dest = dict(self.order)
        self.repeats = dict(repeats) if repeats is not None else {o: 1 for o, _ in self.order}

    @classmethod
    def from_events(cls, events: Iterable[PlacementEvent]) -> "OrderView":
        last: dict[str, tuple[int, str]] = {}
        repeats: dict[str, int] = {}
        prev = -math.inf
        for ev in events:
            if ev.index <= prev:
                raise ValueError("event indices must be strictly increasing")
            prev = ev.index
            if ev.destination is None:
                continue
            last[ev.obj] = (ev.index, ev.destination)
            repeats[ev.obj] = repeats.get(ev.obj, 0) + 1
        order = [(o, d) for o, (_, d) in sorted(last.items(), key=lambda kv: kv[1][0])]
        return cls(order, repeats)

    def __len__(self) -> int:
        return len(self.order)


def _dest_map(dest: str | Mapping[str, str] | None, objs: Iterable[str]) -> tuple[tuple[str, str], ...]:
    if dest is None:
        return ()
    if isinstance(dest, str):
        return tuple((o, dest) for o in objs)
    return tuple(sorted(dest.items()))


class Constraint:
    """Base class. ``satisfied`` is exact; ``doomed`` is a sound prefix test.

    ``doomed(view)`` may only return True if no extension of ``view`` by
    appending placements of objects absent from it can satisfy the constraint.
    """

    dest: tuple[tuple[str, str], ...] = ()

    def objects(self) -> tuple[str, ...]:
        raise NotImplementedError

    def satisfied(self, view: OrderView) -> bool:
        raise NotImplementedError

    def doomed(self, view: OrderView) -> bool:
        raise NotImplementedError

    def _want(self, obj: str) -> str | None:
        for o, d in self.dest:
            if o == obj:
                return d
        return None

    def _ok(self, view: OrderView, obj: str) -> bool:
        """Placed, and at the qualified destination if there is one."""
        if obj not in view.pos:
            return False
        want = self._want(obj)
        return want is None or view.dest[obj] == want

    def _misplaced(self, view: OrderView, obj: str) -> bool:
        return obj in view.pos and not self._ok(view, obj)


@dataclass(frozen=True)
class PlacedAfterAll(Constraint):
    obj: str
    refs: tuple[str, ...]
    dest: tuple[tuple[str, str], ...] = ()

    def objects(self):
        return (self.obj, *self.refs)

    def satisfied(self, view):
        if not self._ok(view, self.obj):
            return False
        p = view.pos[self.obj]
        return all(self._ok(view, r) and view.pos[r] < p for r in self.refs)

    def doomed(self, view):
        if any(self._misplaced(view, o) for o in self.objects()):
            return True
        return self.obj in view.pos and not self.satisfied(view)


@dataclass(frozen=True)
class PlacedBeforeAll(Constraint):
    obj: str
    refs: tuple[str, ...]
    dest: tuple[tuple[str, str], ...] = ()

    def objects(self):
        return (self.obj, *self.refs)

    def satisfied(self, view):
        if not self._ok(view, self.obj):
            return False
        p = view.pos[self.obj]
        return all(self._ok(view, r) and p < view.pos[r] for r in self.refs)

    def doomed(self, view):
        if any(self._misplaced(view, o) for o in self.objects()):
            return True
        p = view.pos.get(self.obj)
        return any(r in view.pos and (p is None or view.pos[r] < p) for r in self.refs)


@dataclass(frozen=True)
class Adjacent(Constraint):
    a: str
    b: str
    dest: tuple[tuple[str, str], ...] = ()

    def objects(self):
        return (self.a, self.b)

    def satisfied(self, view):
        return (
            self._ok(view, self.a)
            and self._ok(view, self.b)
            and abs(view.pos[self.a] - view.pos[self.b]) == 1
        )

    def doomed(self, view):
        if self._misplaced(view, self.a) or self._misplaced(view, self.b):
            return True
        pa, pb = view.pos.get(self.a), view.pos.get(self.b)
        if pa is not None and pb is not None:
            return abs(pa - pb) != 1
        placed = pa if pa is not None else pb
        # the partner can only be appended at the end; it must be the next slot
        return placed is not None and placed + 1 < len(view)


@dataclass(frozen=True)
class ImmediatelyAfter(Constraint):
    """``a`` is placed in the slot right after ``b``."""

    a: str
    b: str
    dest: tuple[tuple[str, str], ...] = ()

    def objects(self):
        return (self.a, self.b)

    def satisfied(self, view):
        return (
            self._ok(view, self.a)
            and self._ok(view, self.b)
            and view.pos[self.a] == view.pos[self.b] + 1
        )

    def doomed(self, view):
        if self._misplaced(view, self.a) or self._misplaced(view, self.b):
            return True
        pa, pb = view.pos.get(self.a), view.pos.get(self.b)
        if pa is not None:
            return pb is None or pa != pb + 1
        return pb is not None and pb + 1 < len(view)


@dataclass(frozen=True)
class NotConsecutive(Constraint):
    a: str
    b: str

    def objects(self):
        return (self.a, self.b)

    def satisfied(self, view):
        return (
            self.a in view.pos
            and self.b in view.pos
            and abs(view.pos[self.a] - view.pos[self.b]) != 1
        )

    def doomed(self, view):
        return self.a in view.pos and self.b in view.pos and abs(view.pos[self.a] - view.pos[self.b]) == 1


@dataclass(frozen=True)
class NotFirst(Constraint):
    a: str

    def objects(self):
        return (self.a,)

    def satisfied(self, view):
        return self.a in view.pos and view.pos[self.a] != 0

    def doomed(self, view):
        return len(view) > 0 and view.order[0][0] == self.a


@dataclass(frozen=True)
class NotLast(Constraint):
    a: str

    def objects(self):
        return (self.a,)

    def satisfied(self, view):
        # something must demonstrably follow it
        return self.a in view.pos and view.pos[self.a] < len(view) - 1

    def doomed(self, view):
        return False


@dataclass(frozen=True)
class NoRepeat(Constraint):
    def objects(self):
        return ()

    def satisfied(self, view):
        return all(n <= 1 for n in view.repeats.values())

    def doomed(self, view):
        return not self.satisfied(view)


@dataclass(frozen=True)
class AllOf(Constraint):
    """Conjunction counted as a single constraint (one task-description clause)."""

    parts: tuple[Constraint, ...]

    def objects(self):
        return tuple(dict.fromkeys(o for p in self.parts for o in p.objects()))

    def satisfied(self, view):
        return all(p.satisfied(view) for p in self.parts)

    def doomed(self, view):
        return any(p.doomed(view) for p in self.parts)


def count_violations(
    constraints: Sequence[Constraint],
    events: Iterable[PlacementEvent],
    roster: Iterable[str] | None = None,
) -> int:
    events = list(events)
    if roster is not None:
        known = set(roster)
        for ev in events:
            if ev.obj not in known:
                raise UnknownObject(ev.obj)
    view = OrderView.from_events(events)
    return sum(not c.satisfied(view) for c in constraints)


def is_satisfied(
    constraints: Sequence[Constraint],
    events: Iterable[PlacementEvent],
    roster: Iterable[str] | None = None,
) -> bool:
    return count_violations(constraints, events, roster) == 0


@dataclass(frozen=True)
class GoalSpec:
    required: Mapping[str, str]  # object -> region kind


def goal_achieved(goal: GoalSpec, world: WorldState) -> bool:
    """Every object rests fully inside a region of its required kind, no overlaps."""
    if world.gripper is not None:
        return False
    placed = []
    for name, kind in goal.required.items():
        state = world.objects.get(name)
        if state is None or not state.on_table:
            return False
        if not any(r.kind == kind and contains(r, state.footprint, state.pose) for r in world.regions):
            return False
        placed.append(state)
    for s, t in itertools.combinations(placed, 2):
        if overlaps(s.pose, s.footprint, t.pose, t.footprint):
            return False
    return True


@dataclass(frozen=True)
class RosterObject:
    name: str
    footprint: Footprint
    attributes: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class EnvSpec:
    name: str
    roster: Mapping[str, RosterObject]
    regions: tuple[Region, ...]
    constraints: tuple[Constraint, ...]
    goal: GoalSpec
    prompt_domain_desc: str = ""
    workspace: Workspace = field(default_factory=Workspace)
    robot_base: tuple[float, float] = (-0.65, 0.0)

    @property
    def k(self) -> int:
        return len(self.roster)

    @property
    def no_repeat(self) -> bool:
        return any(isinstance(c, NoRepeat) for c in self.constraints)

    def __hash__(self) -> int:
        return hash(self.name)


# -- order search ----------------------------------------------------------


def _doomed_count(constraints: Sequence[Constraint], view: OrderView) -> int:
    return sum(c.doomed(view) for c in constraints)


def iter_satisfying_orders(
    constraints: Sequence[Constraint],
    roster: Sequence[str],
    destinations: Mapping[str, str] | None = None,
) -> Iterator[tuple[str, ...]]:
    """Yield every permutation of ``roster`` with zero violations, in lexicographic roster order."""
    roster = list(roster)
    dests = {o: (destinations or {}).get(o, "goal") for o in roster}
    order: list[tuple[str, str]] = []
    remaining = list(roster)

    def rec() -> Iterator[tuple[str, ...]]:
        if not remaining:
            if all(c.satisfied(OrderView(order)) for c in constraints):
                yield tuple(o for o, _ in order)
            return
        for i, obj in enumerate(list(remaining)):
            order.append((obj, dests[obj]))
            del remaining[i]
            if not any(c.doomed(OrderView(order)) for c in constraints):
                yield from rec()
            remaining.insert(i, obj)
            order.pop()

    if len(roster) > MAX_ENUMERATION_K:
        raise TooLarge(f"roster of {len(roster)} exceeds enumeration bound {MAX_ENUMERATION_K}")
    yield from rec()


def enumerate_satisfying_orders(
    constraints: Sequence[Constraint],
    roster: Sequence[str],
    destinations: Mapping[str, str] | None = None,
) -> int:
    return sum(1 for _ in iter_satisfying_orders(constraints, roster, destinations))


def best_completion(
    constraints: Sequence[Constraint],
    prefix: Sequence[tuple[str, str]],
    remaining: Sequence[tuple[str, str]],
    repeats: Mapping[str, int] | None = None,
    first: str | None = None,
    prefix_unordered: bool = False,
) -> tuple[tuple[str, ...], int]:
    """Order ``remaining`` after ``prefix`` minimising violations.

    ``prefix`` and ``remaining`` are (object, destination) pairs; objects in
    ``remaining`` must not appear in ``prefix``. ``first`` forces which
    object comes next. With ``prefix_unordered`` only the *set* of prefix
    placements is known and the search also chooses their order, as a
    planner without execution history must. Ties resolve to the earliest
    order in the given sequences, so results are deterministic.
    """
    base = [] if prefix_unordered else list(prefix)
    pool = list(prefix) if prefix_unordered else []
    n_prefix = len(prefix)
    reps = dict(repeats or {})
    for o, _ in remaining:
        reps[o] = reps.get(o, 0) + 1
    best: list = [None, math.inf]
    order = list(base)
    left = list(remaining)

    def rec() -> bool:
        if not left and not pool:
            v = sum(not c.satisfied(OrderView(order, reps)) for c in constraints)
            if v < best[1]:
                best[0], best[1] = tuple(o for o, _ in order[n_prefix:]), v
            return v == 0
        source = pool if pool else left
        for i, item in enumerate(list(source)):
            if source is left and first is not None and len(order) == n_prefix and item[0] != first:
                continue
            order.append(item)
            del source[i]
            bound = _doomed_count(constraints, OrderView(order, reps))
            stop = bound < best[1] and rec()
            source.insert(i, item)
            order.pop()
            if stop:
                return True
        return False

    rec()
    if best[0] is None:
        # forced first object not in remaining; fall back to the given order
        seq = tuple(o for o, _ in remaining)
        full = OrderView(base + list(remaining), reps)
        return seq, sum(not c.satisfied(full) for c in constraints)
    return best[0], int(best[1])
