"""Exact planner: constraint-satisfying order, collision-free grid packing."""
from __future__ import annotations

from functools import lru_cache

from ..constraints import Constraint, EnvSpec, OrderView, best_completion
from ..world import Failure, Pose2D, WorldState, contains, execute_pick, execute_place, free_poses
from .actions import Action
from .base import AgentError, PlanRequest, PlanResponse


class Unsatisfiable(AgentError):
    def __init__(self, message: str = ""):
        super().__init__("unsatisfiable", message, queries=1)


def correctly_placed(env: EnvSpec, world: WorldState, obj: str) -> bool:
    state = world.objects[obj]
    if not state.on_table:
        return False
    kind = env.goal.required[obj]
    return any(r.kind == kind and contains(r, state.footprint, state.pose) for r in world.regions)


def objects_to_move(env: EnvSpec, world: WorldState) -> list[str]:
    """Roster objects not yet at their required region and still movable."""
    out = []
    for obj in env.roster:
        if correctly_placed(env, world, obj):
            continue
        if world.lock_placed and world.gripper != obj and world.destination_of(obj) is not None:
            continue
        out.append(obj)
    return out


@lru_cache(maxsize=1 << 16)
def _cached_completion(
    constraints: tuple[Constraint, ...],
    prefix: tuple[tuple[str, str], ...],
    remaining: tuple[tuple[str, str], ...],
    repeats: tuple[tuple[str, int], ...],
    first: str | None,
    unordered: bool,
) -> tuple[tuple[str, ...], int]:
    return best_completion(constraints, prefix, remaining, dict(repeats), first, unordered)


def plan_order(request: PlanRequest) -> tuple[tuple[str, ...], int]:
    """Best order for the objects still to be moved.

    With a placement history (warm-started requests) the realized order is
    known. Without one, only the scene is visible: the objects already in goal
    regions form a prefix of unknown order, and the search picks the best
    order for it too.
    """
    env, world = request.env, request.world
    need = objects_to_move(env, world)
    remaining = tuple((o, env.goal.required[o]) for o in need)
    first = world.gripper if world.gripper in need else None
    if request.events:
        view = OrderView.from_events(request.events)
        prefix = tuple((o, d) for o, d in view.order if o not in need)
        repeats = tuple(sorted(view.repeats.items()))
        unordered = False
    else:
        prefix = tuple(
            (o, world.destination_of(o))
            for o in env.roster
            if o not in need and world.destination_of(o) is not None
        )
        repeats = tuple((o, 1) for o, _ in prefix)
        unordered = True
    return _cached_completion(tuple(env.constraints), prefix, remaining, repeats, first, unordered)


def place_pose(env: EnvSpec, world: WorldState, obj: str, extra=()) -> Pose2D:
    fp = world.objects[obj].footprint
    regions = [r for r in world.regions if r.kind == env.goal.required[obj]]
    for region in regions:
        for pose in free_poses(world, region, fp, extra=extra):
            return pose
    # no room: aim at the region centre and let the executor report it
    return Pose2D(regions[0].pose.x, regions[0].pose.y, 0.0) if regions else Pose2D(0.0, 0.0, 0.0)


def layout(env: EnvSpec, world: WorldState, order: tuple[str, ...]) -> tuple[Action, ...]:
    """Pick/place actions realising ``order``, simulated on a copy of the world."""
    sim = world
    actions: list[Action] = []
    for obj in order:
        if sim.gripper != obj:
            actions.append(Action.pick(obj))
            nxt = execute_pick(sim, obj)
            if not isinstance(nxt, Failure):
                sim = nxt
        pose = place_pose(env, sim, obj)
        actions.append(Action.place(obj, pose.x, pose.y, pose.theta))
        nxt = execute_place(sim, obj, pose)
        if not isinstance(nxt, Failure):
            sim = nxt
    return tuple(actions)


def oracle_plan(request: PlanRequest) -> PlanResponse:
    order, violations = plan_order(request)
    world = request.world
    fresh = world.gripper is None and not any(world.destination_of(o) for o in world.objects)
    if violations and fresh:
        raise Unsatisfiable(f"{request.env.name}: no order satisfies all constraints")
    actions = layout(request.env, request.world, order)
    return PlanResponse(
        reasoning=f"placement order {list(order)} with {violations} violation(s)",
        plan=actions,
        raw="",
        queries=1,
    )


class OracleAgent:
    name = "oracle"

    def __init__(self, name: str = "oracle"):
        self.name = name

    def plan(self, request: PlanRequest) -> PlanResponse:
        return oracle_plan(request)
