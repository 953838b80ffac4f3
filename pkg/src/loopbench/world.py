"""Deterministic 2D kinematic tabletop simulator.

Objects are planar footprints (rotated rectangles or discs) resting on a
bounded table. Goal regions (basket, plate) and a staging area are fixed
shapes. Pick and place never fail stochastically: an action fails only for
the enumerated reasons in :class:`Failure`.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Mapping

if TYPE_CHECKING:
    from .constraints import EnvSpec

EPS_GEO = 1e-6

# Place parameter ranges advertised to planners.
PLACE_X_RANGE = (-0.5, 0.5)
PLACE_Y_RANGE = (-0.5, 0.5)

MAX_SAMPLING_ATTEMPTS = 2000


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.fmod(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    elif wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError(f"non-finite pose {self.x}, {self.y}, {self.theta}")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def to_local(self, px: float, py: float) -> tuple[float, float]:
        """Express a world point in this pose's frame."""
        dx, dy = px - self.x, py - self.y
        c, s = math.cos(self.theta), math.sin(self.theta)
        return c * dx + s * dy, -s * dx + c * dy

    def to_world(self, lx: float, ly: float) -> tuple[float, float]:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return self.x + c * lx - s * ly, self.y + s * lx + c * ly


@dataclass(frozen=True)
class Rect:
    half_x: float
    half_y: float

    def __post_init__(self) -> None:
        if not (self.half_x > 0 and self.half_y > 0):
            raise ValueError("rectangle extents must be positive")

    @property
    def bounding_radius(self) -> float:
        return math.hypot(self.half_x, self.half_y)


@dataclass(frozen=True)
class Circle:
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("circle radius must be positive")

    @property
    def bounding_radius(self) -> float:
        return self.radius


Footprint = Rect | Circle


def corners(fp: Rect, pose: Pose2D) -> list[tuple[float, float]]:
    hx, hy = fp.half_x, fp.half_y
    return [pose.to_world(sx * hx, sy * hy) for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1))]


@dataclass(frozen=True)
class Region:
    name: str
    shape: Footprint
    pose: Pose2D
    kind: str  # basket | plate | staging

    def contains(self, fp: Footprint, pose: Pose2D) -> bool:
        return contains(self, fp, pose)

    def contains_point(self, px: float, py: float) -> bool:
        lx, ly = self.pose.to_local(px, py)
        if isinstance(self.shape, Rect):
            return abs(lx) <= self.shape.half_x + EPS_GEO and abs(ly) <= self.shape.half_y + EPS_GEO
        return math.hypot(lx, ly) <= self.shape.radius + EPS_GEO

    def bounds(self) -> tuple[float, float, float, float]:
        """Axis-aligned (min_x, min_y, max_x, max_y)."""
        if isinstance(self.shape, Circle):
            r = self.shape.radius
            return self.pose.x - r, self.pose.y - r, self.pose.x + r, self.pose.y + r
        xs, ys = zip(*corners(self.shape, self.pose))
        return min(xs), min(ys), max(xs), max(ys)


@dataclass(frozen=True)
class Workspace:
    min_x: float = -0.5
    min_y: float = -0.5
    max_x: float = 0.5
    max_y: float = 0.5

    def as_region(self) -> Region:
        return Region(
            name="workspace",
            shape=Rect((self.max_x - self.min_x) / 2, (self.max_y - self.min_y) / 2),
            pose=Pose2D((self.max_x + self.min_x) / 2, (self.max_y + self.min_y) / 2, 0.0),
            kind="workspace",
        )


def contains(region: Region, fp: Footprint, pose: Pose2D) -> bool:
    """True iff the whole footprint lies inside the region (EPS_GEO slack)."""
    if isinstance(fp, Rect) and isinstance(region.shape, Rect) and pose.theta == 0.0 and region.pose.theta == 0.0:
        return (
            abs(pose.x - region.pose.x) + fp.half_x <= region.shape.half_x + EPS_GEO
            and abs(pose.y - region.pose.y) + fp.half_y <= region.shape.half_y + EPS_GEO
        )
    if isinstance(fp, Rect):
        return all(region.contains_point(px, py) for px, py in corners(fp, pose))
    lx, ly = region.pose.to_local(pose.x, pose.y)
    r = fp.radius
    if isinstance(region.shape, Rect):
        return (
            abs(lx) + r <= region.shape.half_x + EPS_GEO
            and abs(ly) + r <= region.shape.half_y + EPS_GEO
        )
    return math.hypot(lx, ly) + r <= region.shape.radius + EPS_GEO


def _project(points: list[tuple[float, float]], ax: float, ay: float) -> tuple[float, float]:
    dots = [px * ax + py * ay for px, py in points]
    return min(dots), max(dots)


def _rect_rect(fa: Rect, pa: Pose2D, fb: Rect, pb: Pose2D) -> bool:
    if pa.theta == 0.0 and pb.theta == 0.0:
        return (
            fa.half_x + fb.half_x - abs(pa.x - pb.x) > EPS_GEO
            and fa.half_y + fb.half_y - abs(pa.y - pb.y) > EPS_GEO
        )
    ca, cb = corners(fa, pa), corners(fb, pb)
    for theta in (pa.theta, pb.theta):
        c, s = math.cos(theta), math.sin(theta)
        for ax, ay in ((c, s), (-s, c)):
            lo_a, hi_a = _project(ca, ax, ay)
            lo_b, hi_b = _project(cb, ax, ay)
            if min(hi_a, hi_b) - max(lo_a, lo_b) <= EPS_GEO:
                return False
    return True


def _rect_circle(fr: Rect, pr: Pose2D, fc: Circle, pc: Pose2D) -> bool:
    lx, ly = pr.to_local(pc.x, pc.y)
    # closest point of the rectangle to the disc centre, in the rectangle frame
    qx = min(max(lx, -fr.half_x), fr.half_x)
    qy = min(max(ly, -fr.half_y), fr.half_y)
    if qx == lx and qy == ly:
        return True
    return math.hypot(lx - qx, ly - qy) < fc.radius - EPS_GEO


def overlaps(pose_a: Pose2D, fp_a: Footprint, pose_b: Pose2D, fp_b: Footprint) -> bool:
    """True iff the two footprints share positive area (touching is not overlap)."""
    dist = math.hypot(pose_a.x - pose_b.x, pose_a.y - pose_b.y)
    if dist >= fp_a.bounding_radius + fp_b.bounding_radius:
        return False
    if isinstance(fp_a, Circle) and isinstance(fp_b, Circle):
        return dist < fp_a.radius + fp_b.radius - EPS_GEO
    if isinstance(fp_a, Rect) and isinstance(fp_b, Rect):
        return _rect_rect(fp_a, pose_a, fp_b, pose_b)
    if isinstance(fp_a, Rect):
        return _rect_circle(fp_a, pose_a, fp_b, pose_b)
    return _rect_circle(fp_b, pose_b, fp_a, pose_a)


def inflate(fp: Footprint, margin: float) -> Footprint:
    if isinstance(fp, Rect):
        return Rect(fp.half_x + margin, fp.half_y + margin)
    return Circle(fp.radius + margin)


@dataclass(frozen=True)
class ObjectState:
    pose: Pose2D
    footprint: Footprint
    on_table: bool = True


@dataclass(frozen=True)
class Failure:
    """Why an executor action was rejected."""

    reason: str  # unknown_object | gripper_occupied | already_placed | not_held | out_of_workspace | collision

    def __str__(self) -> str:
        return f"failure({self.reason})"


@dataclass(frozen=True)
class WorldState:
    objects: Mapping[str, ObjectState]
    regions: tuple[Region, ...]
    gripper: str | None = None
    workspace: Workspace = field(default_factory=Workspace)
    # objects resting in a goal region may not be picked again
    lock_placed: bool = False

    def region(self, name: str) -> Region:
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(name)

    def goal_regions(self) -> list[Region]:
        return [r for r in self.regions if r.kind != "staging"]

    def destination_of(self, obj: str) -> str | None:
        """Kind of the unique goal region fully containing the object, else None."""
        state = self.objects[obj]
        if not state.on_table:
            return None
        found = [r for r in self.goal_regions() if contains(r, state.footprint, state.pose)]
        return found[0].kind if len(found) == 1 else None

    def on_table(self) -> list[str]:
        return [name for name, s in self.objects.items() if s.on_table]

    def collisions(self, fp: Footprint, pose: Pose2D, ignore: str | None = None) -> list[str]:
        return [
            name
            for name, s in self.objects.items()
            if s.on_table and name != ignore and overlaps(pose, fp, s.pose, s.footprint)
        ]

    def with_object(self, name: str, state: ObjectState) -> "WorldState":
        objs = dict(self.objects)
        objs[name] = state
        return replace(self, objects=objs)


def execute_pick(world: WorldState, obj: str) -> WorldState | Failure:
    if obj not in world.objects:
        return Failure("unknown_object")
    if world.gripper is not None:
        return Failure("gripper_occupied")
    state = world.objects[obj]
    if world.lock_placed and world.destination_of(obj) is not None:
        return Failure("already_placed")
    return replace(world.with_object(obj, replace(state, on_table=False)), gripper=obj)


def in_place_ranges(pose: Pose2D, workspace: Workspace) -> bool:
    return (
        workspace.min_x <= pose.x <= workspace.max_x
        and workspace.min_y <= pose.y <= workspace.max_y
    )


def execute_place(world: WorldState, obj: str, pose: Pose2D) -> WorldState | Failure:
    if obj not in world.objects:
        return Failure("unknown_object")
    if world.gripper != obj:
        return Failure("not_held")
    fp = world.objects[obj].footprint
    if not in_place_ranges(pose, world.workspace) or not contains(world.workspace.as_region(), fp, pose):
        return Failure("out_of_workspace")
    if world.collisions(fp, pose, ignore=obj):
        return Failure("collision")
    placed = world.with_object(obj, ObjectState(pose=pose, footprint=fp, on_table=True))
    return replace(placed, gripper=None)


def sample_initial_state(env: "EnvSpec", seed: int) -> WorldState:
    """Scatter the roster uniformly over the staging region without overlaps."""
    rng = random.Random(seed)
    staging = [r for r in env.regions if r.kind == "staging"]
    if env.roster and not staging:
        raise ValueError(f"{env.name}: no staging region")
    objects: dict[str, ObjectState] = {}
    for name, obj in env.roster.items():
        area = staging[0]
        min_x, min_y, max_x, max_y = area.bounds()
        for _ in range(MAX_SAMPLING_ATTEMPTS):
            pose = Pose2D(
                rng.uniform(min_x, max_x),
                rng.uniform(min_y, max_y),
                rng.uniform(-math.pi, math.pi),
            )
            if not contains(area, obj.footprint, pose):
                continue
            if any(overlaps(pose, obj.footprint, s.pose, s.footprint) for s in objects.values()):
                continue
            objects[name] = ObjectState(pose, obj.footprint, True)
            break
        else:
            raise SamplingExhausted(f"{env.name}: could not place {name} after {MAX_SAMPLING_ATTEMPTS} attempts")
    return WorldState(
        objects=objects,
        regions=tuple(env.regions),
        gripper=None,
        workspace=env.workspace,
        lock_placed=env.no_repeat,
    )


class SamplingExhausted(RuntimeError):
    pass


def free_poses(
    world: WorldState,
    region: Region,
    fp: Footprint,
    step: float = 0.01,
    gap: float = 0.02,
    extra: Iterable[tuple[Pose2D, Footprint]] = (),
) -> Iterable[Pose2D]:
    """Raster-scan axis-aligned poses in ``region`` with clearance ``gap``.

    Yields in row-major order starting at the region's lower-left corner, so
    repeated first-fit allocation packs objects into a regular grid.
    """
    padded = inflate(fp, gap / 2)
    obstacles = [(s.pose, inflate(s.footprint, gap / 2)) for s in world.objects.values() if s.on_table]
    obstacles += [(p, inflate(f, gap / 2)) for p, f in extra]
    min_x, min_y, max_x, max_y = region.bounds()
    ext_x = fp.half_x if isinstance(fp, Rect) else fp.radius
    ext_y = fp.half_y if isinstance(fp, Rect) else fp.radius
    nx = int(math.floor((max_x - min_x - 2 * ext_x) / step + 1e-9)) + 1
    ny = int(math.floor((max_y - min_y - 2 * ext_y) / step + 1e-9)) + 1
    near = [
        (p, f)
        for p, f in obstacles
        if p.x + f.bounding_radius > min_x and p.x - f.bounding_radius < max_x
        and p.y + f.bounding_radius > min_y and p.y - f.bounding_radius < max_y
    ]
    for j in range(ny):
        y = round(min_y + ext_y + j * step, 9)
        for i in range(nx):
            x = round(min_x + ext_x + i * step, 9)
            pose = Pose2D(x, y, 0.0)
            if not contains(region, fp, pose):
                continue
            if any(overlaps(pose, padded, p, f) for p, f in near):
                continue
            yield pose
