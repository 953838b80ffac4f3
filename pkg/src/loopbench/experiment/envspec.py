"""JSON environment-spec files: schema, compilation to :class:`EnvSpec`."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from ..constraints import (
    Adjacent,
    AllOf,
    Constraint,
    EnvSpec,
    GoalSpec,
    ImmediatelyAfter,
    NoRepeat,
    NotConsecutive,
    NotFirst,
    NotLast,
    PlacedAfterAll,
    PlacedBeforeAll,
    RosterObject,
    _dest_map,
    best_completion,
    iter_satisfying_orders,
    MAX_ENUMERATION_K,
)
from ..world import Circle, Pose2D, Rect, Region, Workspace

BUNDLED = ("cube_easy", "ycb_easy", "ycb_medium", "ycb_hard")


class EnvSpecError(ValueError):
    def __init__(self, kind: str, message: str):
        self.kind = kind  # parse | unsatisfiable | unknown_reference
        super().__init__(f"{kind}: {message}")


_SHAPE = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"rect": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2, "maxItems": 2}},
            "required": ["rect"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"circle": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["circle"],
            "additionalProperties": False,
        },
    ]
}
_NAMES = {"type": "array", "items": {"type": "string"}, "minItems": 1}
_DEST = {"oneOf": [{"type": "string"}, {"type": "object", "additionalProperties": {"type": "string"}}]}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["name", "roster", "regions", "goal", "constraints"],
    "properties": {
        "name": {"type": "string"},
        "workspace": {
            "type": "object",
            "properties": {k: {"type": "number"} for k in ("min_x", "min_y", "max_x", "max_y")},
            "required": ["min_x", "min_y", "max_x", "max_y"],
        },
        "robot_base": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "roster": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "footprint"],
                "properties": {"name": {"type": "string"}, "footprint": _SHAPE, "attributes": {"type": "object"}},
            },
        },
        "regions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "kind", "shape", "pose"],
                "properties": {
                    "name": {"type": "string"},
                    "kind": {"enum": ["basket", "plate", "staging"]},
                    "shape": _SHAPE,
                    "pose": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                },
            },
        },
        "goal": {
            "type": "object",
            "properties": {
                "required": {"type": "object", "additionalProperties": {"type": "string"}},
                "default": {"type": "string"},
                "rules": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["when", "region"],
                        "properties": {"when": {"type": "object"}, "region": {"type": "string"}},
                    },
                },
            },
        },
        "constraints": {"type": "array", "items": {"$ref": "#/$defs/constraint"}},
        "prompt": {"type": "string"},
    },
    "$defs": {
        "constraint": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {
                    "enum": [
                        "PlacedAfterAll", "PlacedBeforeAll", "Adjacent", "ImmediatelyAfter",
                        "NotConsecutive", "NotFirst", "NotLast", "NoRepeat", "AllOf", "GroupBefore",
                    ]
                },
                "obj": {"type": "string"},
                "refs": _NAMES,
                "a": {"type": "string"},
                "b": {"type": "string"},
                "dest": _DEST,
                "parts": {"type": "array", "items": {"$ref": "#/$defs/constraint"}, "minItems": 1},
                "first": {"type": "string"},
                "then": {"type": "string"},
            },
        }
    },
}

_REQUIRED_FIELDS = {
    "PlacedAfterAll": ("obj", "refs"),
    "PlacedBeforeAll": ("obj", "refs"),
    "Adjacent": ("a", "b"),
    "ImmediatelyAfter": ("a", "b"),
    "NotConsecutive": ("a", "b"),
    "NotFirst": ("a",),
    "NotLast": ("a",),
    "NoRepeat": (),
    "AllOf": ("parts",),
    "GroupBefore": ("first", "then"),
}


def _shape(d: dict):
    if "rect" in d:
        return Rect(*map(float, d["rect"]))
    return Circle(float(d["circle"]))


def _compile(raw: dict, roster: set[str], kinds: set[str], required: dict[str, str]) -> list[Constraint]:
    kind = raw["type"]
    missing = [f for f in _REQUIRED_FIELDS[kind] if f not in raw]
    if missing:
        raise EnvSpecError("parse", f"{kind} needs {missing}")
    names = [raw[f] for f in ("obj", "a", "b") if f in raw] + list(raw.get("refs", []))
    dest = raw.get("dest")
    if isinstance(dest, dict):
        names += list(dest)
    for n in names:
        if n not in roster:
            raise EnvSpecError("unknown_reference", f"{kind} references unknown object {n!r}")
    for d in ([dest] if isinstance(dest, str) else list((dest or {}).values())):
        if d not in kinds:
            raise EnvSpecError("unknown_reference", f"{kind} references unknown region kind {d!r}")

    if kind == "GroupBefore":
        for k in (raw["first"], raw["then"]):
            if k not in kinds:
                raise EnvSpecError("unknown_reference", f"GroupBefore references unknown region kind {k!r}")
        firsts = [o for o, k in required.items() if k == raw["first"]]
        thens = tuple(o for o, k in required.items() if k == raw["then"])
        if not thens:
            return []
        return [
            PlacedBeforeAll(o, thens, _dest_map({o: raw["first"], **{t: raw["then"] for t in thens}}, ()))
            for o in firsts
        ]
    if kind == "AllOf":
        parts = [c for p in raw["parts"] for c in _compile(p, roster, kinds, required)]
        return [AllOf(tuple(parts))]
    if kind == "NoRepeat":
        return [NoRepeat()]
    if kind in ("NotFirst", "NotLast"):
        return [{"NotFirst": NotFirst, "NotLast": NotLast}[kind](raw["a"])]
    if kind == "NotConsecutive":
        return [NotConsecutive(raw["a"], raw["b"])]
    if kind in ("PlacedAfterAll", "PlacedBeforeAll"):
        cls = PlacedAfterAll if kind == "PlacedAfterAll" else PlacedBeforeAll
        refs = tuple(raw["refs"])
        return [cls(raw["obj"], refs, _dest_map(dest, (raw["obj"], *refs)))]
    cls = Adjacent if kind == "Adjacent" else ImmediatelyAfter
    return [cls(raw["a"], raw["b"], _dest_map(dest, (raw["a"], raw["b"])))]


def _goal(raw: dict, roster: list[RosterObject], kinds: set[str]) -> GoalSpec:
    if "required" in raw:
        required = dict(raw["required"])
        if set(required) != {o.name for o in roster}:
            raise EnvSpecError("unknown_reference", "goal.required must list every roster object exactly once")
    else:
        if "default" not in raw:
            raise EnvSpecError("parse", "goal needs 'required' or 'default'")
        required = {}
        for obj in roster:
            region = raw["default"]
            for rule in raw.get("rules", []):
                if all(obj.attributes.get(k) == v for k, v in rule["when"].items()):
                    region = rule["region"]
                    break
            required[obj.name] = region
    for obj, kind in required.items():
        if kind not in kinds or kind == "staging":
            raise EnvSpecError("unknown_reference", f"goal for {obj!r} names unknown region kind {kind!r}")
    return GoalSpec(required)


def parse_env_spec(data: dict) -> EnvSpec:
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise EnvSpecError("parse", exc.message) from None
    roster = [
        RosterObject(o["name"], _shape(o["footprint"]), dict(o.get("attributes", {}))) for o in data["roster"]
    ]
    if len({o.name for o in roster}) != len(roster):
        raise EnvSpecError("parse", "duplicate roster names")
    regions = tuple(
        Region(r["name"], _shape(r["shape"]), Pose2D(*map(float, r["pose"])), r["kind"]) for r in data["regions"]
    )
    ws = Workspace(**data["workspace"]) if "workspace" in data else Workspace()
    ws_region = ws.as_region()
    for r in regions:
        min_x, min_y, max_x, max_y = r.bounds()
        if min_x < ws.min_x - 1e-9 or min_y < ws.min_y - 1e-9 or max_x > ws.max_x + 1e-9 or max_y > ws.max_y + 1e-9:
            raise EnvSpecError("parse", f"region {r.name!r} leaves the workspace {ws_region.shape}")
    kinds = {r.kind for r in regions}
    goal = _goal(data["goal"], roster, kinds)
    names = {o.name for o in roster}
    constraints = tuple(c for raw in data["constraints"] for c in _compile(raw, names, kinds, goal.required))
    env = EnvSpec(
        name=data["name"],
        roster={o.name: o for o in roster},
        regions=regions,
        constraints=constraints,
        goal=goal,
        prompt_domain_desc=data.get("prompt", ""),
        workspace=ws,
        robot_base=tuple(data.get("robot_base", (-0.65, 0.0))),
    )
    check_satisfiable(env)
    return env


def check_satisfiable(env: EnvSpec) -> None:
    names = list(env.roster)
    if len(names) <= MAX_ENUMERATION_K:
        found = next(iter_satisfying_orders(env.constraints, names, env.goal.required), None)
        ok = found is not None
    else:
        _, v = best_completion(env.constraints, (), tuple((o, env.goal.required[o]) for o in names))
        ok = v == 0
    if not ok:
        raise EnvSpecError("unsatisfiable", f"{env.name}: no placement order satisfies every constraint")


def load_env_spec(path: str | Path) -> EnvSpec:
    """Load a spec file; a bare bundled name such as ``cube_easy`` also works."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        text = resources.files("loopbench.envs").joinpath(f"{path}.json").read_text(encoding="utf-8")
    else:
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise EnvSpecError("parse", str(exc)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise EnvSpecError("parse", f"invalid JSON: {exc}") from None
    return parse_env_spec(data)


def bundled_envs() -> list[EnvSpec]:
    return [load_env_spec(name) for name in BUNDLED]
