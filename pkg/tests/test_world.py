import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopbench.constraints import EnvSpec, GoalSpec
from loopbench.world import (
    EPS_GEO,
    Circle,
    Failure,
    ObjectState,
    Pose2D,
    Rect,
    Region,
    Workspace,
    WorldState,
    contains,
    execute_pick,
    execute_place,
    normalize_angle,
    overlaps,
    sample_initial_state,
)

BASKET = Region("basket", Rect(0.15, 0.15), Pose2D(0.25, 0.0), "basket")
STAGING = Region("staging", Rect(0.2, 0.45), Pose2D(-0.25, 0.0), "staging")
BOX = Rect(0.04, 0.04)


def world(**objects):
    return WorldState(
        objects={name: ObjectState(pose, BOX) for name, pose in objects.items()},
        regions=(BASKET, STAGING),
    )


def test_centered_square_is_contained():
    assert contains(BASKET, BOX, Pose2D(0.25, 0.0))


def test_square_with_corner_past_edge_is_not_contained():
    assert not contains(BASKET, BOX, Pose2D(0.25 + 0.14, 0.0))


def test_touching_the_edge_counts_as_contained():
    assert contains(BASKET, BOX, Pose2D(0.25 + 0.11, 0.0))
    assert not contains(BASKET, BOX, Pose2D(0.25 + 0.11 + 10 * EPS_GEO, 0.0))


def test_rotated_square_leaves_region_sooner():
    # at 45 degrees the corner reaches 0.04 * sqrt(2) from the center
    pose = Pose2D(0.25 + 0.11, 0.0, math.pi / 4)
    assert not contains(BASKET, BOX, pose)
    assert contains(BASKET, BOX, Pose2D(0.25 + 0.15 - 0.04 * math.sqrt(2), 0.0, math.pi / 4))


def test_circle_in_circle_region():
    plate = Region("plate", Circle(0.17), Pose2D(0.25, -0.25), "plate")
    assert contains(plate, Circle(0.05), Pose2D(0.25 + 0.12, -0.25))
    assert not contains(plate, Circle(0.05), Pose2D(0.25 + 0.121, -0.25))


def test_far_squares_do_not_overlap():
    assert not overlaps(Pose2D(0, 0), BOX, Pose2D(2.0, 0), BOX)


def test_close_squares_overlap():
    assert overlaps(Pose2D(0, 0), BOX, Pose2D(0.05, 0), BOX)


def test_touching_circles_do_not_overlap():
    c = Circle(0.03)
    assert not overlaps(Pose2D(0, 0), c, Pose2D(0.06, 0), c)
    assert overlaps(Pose2D(0, 0), c, Pose2D(0.0599, 0), c)


def test_rect_circle_corner_case():
    # circle near the rectangle's corner but outside the corner's reach
    r = 0.02
    d = 0.04 + r / math.sqrt(2) + 1e-4
    assert not overlaps(Pose2D(0, 0), BOX, Pose2D(d, d), Circle(r))
    assert overlaps(Pose2D(0, 0), BOX, Pose2D(0.055, 0.0), Circle(r))


def test_rotated_rects_separated_on_diagonal_axis():
    a = Pose2D(0, 0, math.pi / 4)
    gap = 0.04 * math.sqrt(2)
    assert not overlaps(a, BOX, Pose2D(2 * gap + 1e-4, 0, math.pi / 4), BOX)
    # axis-aligned neighbour at the same spot intrudes past the diamond's tip
    assert overlaps(a, BOX, Pose2D(gap + 0.03, 0, 0.0), BOX)


def test_pick_free_object():
    w = world(a=Pose2D(-0.25, 0.0))
    after = execute_pick(w, "a")
    assert not isinstance(after, Failure)
    assert after.gripper == "a" and not after.objects["a"].on_table


def test_pick_while_holding_fails():
    w = execute_pick(world(a=Pose2D(-0.25, 0.1), b=Pose2D(-0.25, -0.1)), "a")
    assert execute_pick(w, "b") == Failure("gripper_occupied")


def test_pick_unknown_object():
    assert execute_pick(world(a=Pose2D(-0.25, 0.0)), "zzz") == Failure("unknown_object")


def test_place_in_basket_sets_destination():
    w = execute_pick(world(a=Pose2D(-0.25, 0.0)), "a")
    after = execute_place(w, "a", Pose2D(0.25, 0.0))
    assert not isinstance(after, Failure)
    assert after.destination_of("a") == "basket"
    assert after.gripper is None


def test_place_outside_ranges():
    w = execute_pick(world(a=Pose2D(-0.25, 0.0)), "a")
    assert execute_place(w, "a", Pose2D(0.7, 0.0)) == Failure("out_of_workspace")
    # centre inside the ranges but footprint sticking past the edge
    assert execute_place(w, "a", Pose2D(0.49, 0.0)) == Failure("out_of_workspace")


def test_place_on_top_of_another_object():
    w = execute_pick(world(a=Pose2D(-0.25, 0.2), b=Pose2D(0.25, 0.0)), "a")
    assert execute_place(w, "a", Pose2D(0.27, 0.0)) == Failure("collision")


def test_place_not_held():
    w = world(a=Pose2D(-0.25, 0.0))
    assert execute_place(w, "a", Pose2D(0.25, 0.0)) == Failure("not_held")


def test_locked_objects_cannot_be_picked_again():
    w = WorldState(
        objects={"a": ObjectState(Pose2D(0.25, 0.0), BOX)}, regions=(BASKET, STAGING), lock_placed=True
    )
    assert execute_pick(w, "a") == Failure("already_placed")
    # an object lying on the table outside every goal region is still movable
    w2 = WorldState(
        objects={"a": ObjectState(Pose2D(-0.25, 0.0), BOX)}, regions=(BASKET, STAGING), lock_placed=True
    )
    assert not isinstance(execute_pick(w2, "a"), Failure)


def test_pick_then_place_back_restores_state():
    pose = Pose2D(-0.2, 0.13, 1.1)
    w = world(a=pose, b=Pose2D(-0.3, -0.2))
    held = execute_pick(w, "a")
    assert execute_place(held, "a", pose) == w


def test_normalize_angle_range():
    assert normalize_angle(math.pi) == pytest.approx(math.pi)
    assert normalize_angle(-math.pi) == pytest.approx(math.pi)
    assert normalize_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


def test_non_finite_pose_rejected():
    with pytest.raises(ValueError):
        Pose2D(float("nan"), 0.0)


def test_sampling_is_deterministic(cube):
    assert sample_initial_state(cube, 7) == sample_initial_state(cube, 7)


def test_fifty_seeds_give_distinct_collision_free_states(envs):
    for env in envs.values():
        seen = set()
        for seed in range(50):
            w = sample_initial_state(env, seed)
            staging = next(r for r in w.regions if r.kind == "staging")
            states = list(w.objects.values())
            for s in states:
                assert contains(staging, s.footprint, s.pose)
            for s, t in itertools.combinations(states, 2):
                assert not overlaps(s.pose, s.footprint, t.pose, t.footprint)
            seen.add(tuple(sorted((n, s.pose) for n, s in w.objects.items())))
        assert len(seen) == 50


def test_empty_roster_gives_empty_state():
    env = EnvSpec("empty", {}, (BASKET, STAGING), (), GoalSpec({}), "", Workspace())
    w = sample_initial_state(env, 0)
    assert w.objects == {} and w.gripper is None


coords = st.floats(-0.45, 0.45, allow_nan=False)
angles = st.floats(-math.pi, math.pi, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(coords, coords, angles), min_size=1, max_size=12))
def test_successful_places_never_leave_overlaps(targets):
    names = [f"o{i}" for i in range(len(targets))]
    # stack everything off to the side first; only placement order matters here
    w = WorldState(
        objects={n: ObjectState(Pose2D(-0.45 + 0.09 * i, -0.45), Rect(0.02, 0.02), on_table=False) for i, n in enumerate(names)},
        regions=(BASKET, STAGING),
    )
    placed = 0
    for n, (x, y, th) in zip(names, targets):
        w = WorldState(w.objects, w.regions, gripper=n)
        after = execute_place(w, n, Pose2D(x, y, th))
        if isinstance(after, Failure):
            w = WorldState(w.objects, w.regions)
            continue
        w = after
        placed += 1
        on = [s for s in w.objects.values() if s.on_table]
        for s, t in itertools.combinations(on, 2):
            assert not overlaps(s.pose, s.footprint, t.pose, t.footprint)
    assert placed == sum(s.on_table for s in w.objects.values())
