"""Scripted agent that corrupts oracle plans with geometric and ordering errors.

Memoryless agents regenerate and re-corrupt every plan from scratch.
Memoryful agents, when given warm-start context, keep the unexecuted suffix of
the previous plan as-is (its errors persist, unless an object placed since
then now occupies a target) and re-plan only the actions that
failed or left an object misplaced. Those repairs are exact, because the
previous attempt and its status locate the error; places new to the plan draw
fresh noise.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from ..seeding import derive_seed
from ..world import PLACE_X_RANGE, PLACE_Y_RANGE, Failure, Pose2D, execute_pick, execute_place, overlaps
from .actions import Action
from .base import PlanRequest, PlanResponse
from .oracle import objects_to_move, oracle_plan, place_pose, plan_order


@dataclass(frozen=True)
class ErrorModel:
    p_geo: float = 0.0
    p_log: float = 0.0
    memoryful: bool = True
    seed: int = 0
    geo_offset: float = 0.05  # half-width of the uniform pose perturbation, metres

    def __post_init__(self) -> None:
        for p in (self.p_geo, self.p_log):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability out of range: {p}")
        if self.geo_offset < 0:
            raise ValueError("geo_offset must be non-negative")


def _clip(v: float, lo: float, hi: float) -> float:
    return min(max(v, lo), hi)


def _perturb(action: Action, rng: random.Random, model: ErrorModel) -> Action:
    d = model.geo_offset
    x = _clip(action.x + rng.uniform(-d, d), *PLACE_X_RANGE)
    y = _clip(action.y + rng.uniform(-d, d), *PLACE_Y_RANGE)
    return Action.place(action.obj, x, y, action.theta)


def _blocks(plan: tuple[Action, ...]) -> list[list[Action]]:
    blocks: list[list[Action]] = []
    for a in plan:
        if a.kind == "pick" or not blocks or blocks[-1][-1].kind == "place":
            blocks.append([a])
        else:
            blocks[-1].append(a)
    return blocks


def corrupt(plan: tuple[Action, ...], rng: random.Random, model: ErrorModel) -> tuple[tuple[Action, ...], list[str]]:
    """Apply one optional adjacent swap, then per-place pose noise."""
    notes = []
    blocks = _blocks(plan)
    if rng.random() < model.p_log:
        # only whole pick+place blocks may move; a leading place of a held object stays first
        movable = [i for i, b in enumerate(blocks) if b[0].kind == "pick"]
        pairs = [i for i, j in zip(movable, movable[1:]) if j == i + 1]
        if pairs:
            i = pairs[rng.randrange(len(pairs))]
            blocks[i], blocks[i + 1] = blocks[i + 1], blocks[i]
            notes.append(f"swapped {blocks[i + 1][0].obj} and {blocks[i][0].obj}")
    out = []
    for a in (a for b in blocks for a in b):
        if a.kind == "place" and rng.random() < model.p_geo:
            a = _perturb(a, rng, model)
            notes.append(f"perturbed {a.obj}")
        out.append(a)
    return tuple(out), notes


def _warm_plan(request: PlanRequest, model: ErrorModel, rng: random.Random) -> PlanResponse:
    env, world, ws = request.env, request.world, request.warm_start
    need = objects_to_move(env, world)
    need_set = set(need)
    kept: dict[str, Action] = {}
    repaired: set[str] = set()
    prev_order: list[str] = []
    moved = {
        a.obj for a, st in zip(ws.prev_plan, ws.statuses)
        if a.kind == "place" and st.outcome == "success" and world.objects[a.obj].on_table
    }
    for action, status in zip(ws.prev_plan, ws.statuses):
        if action.kind != "place" or action.obj not in need_set:
            continue
        if action.obj not in prev_order:
            prev_order.append(action.obj)
        if status.outcome == "not_executed":
            # keep the old target unless something placed since then now occupies it
            fp = world.objects[action.obj].footprint
            if not any(
                overlaps(action.pose, fp, world.objects[m].pose, world.objects[m].footprint) for m in moved
            ):
                kept.setdefault(action.obj, action)
        else:
            # executed, yet the object still has to move: the error is located
            repaired.add(action.obj)
    fresh_order, _ = plan_order(request)
    order = prev_order + [o for o in fresh_order if o not in prev_order]
    if world.gripper in order:
        order.remove(world.gripper)
        order.insert(0, world.gripper)

    sim = world
    actions: list[Action] = []
    notes = []
    for idx, obj in enumerate(order):
        if sim.gripper != obj:
            actions.append(Action.pick(obj))
            nxt = execute_pick(sim, obj)
            sim = sim if isinstance(nxt, Failure) else nxt
        if obj in kept:
            place = kept[obj]
        else:
            later = [
                (kept[o].pose, world.objects[o].footprint) for o in order[idx + 1 :] if o in kept
            ]
            pose = place_pose(env, sim, obj, extra=later)
            place = Action.place(obj, pose.x, pose.y, pose.theta)
            # the previous attempt and its outcome pinpoint the error, so the repair is exact
            if obj not in repaired and rng.random() < model.p_geo:
                place = _perturb(place, rng, model)
                notes.append(f"perturbed {obj}")
        actions.append(place)
        nxt = execute_place(sim, obj, Pose2D(place.x, place.y, place.theta))
        sim = sim if isinstance(nxt, Failure) else nxt
    return PlanResponse(
        reasoning=f"revised previous plan; order {order}" + (f"; {', '.join(notes)}" if notes else ""),
        plan=tuple(actions),
    )


def noisy_plan(request: PlanRequest, model: ErrorModel) -> PlanResponse:
    rng = random.Random(derive_seed(model.seed, request.seed, request.query_index))
    if model.memoryful and request.warm_start is not None:
        return _warm_plan(request, model, rng)
    base = oracle_plan(request)
    plan, notes = corrupt(base.plan, rng, model)
    if not notes:
        return base
    return PlanResponse(reasoning=base.reasoning + "; " + ", ".join(notes), plan=plan)


class NoisyAgent:
    def __init__(self, model: ErrorModel, name: str = "noisy"):
        self.model = model
        self.name = name

    def plan(self, request: PlanRequest) -> PlanResponse:
        return noisy_plan(request, self.model)
