"""Primitive actions and the ``pick([...], {})`` / ``place([...], {...})`` grammar."""
from __future__ import annotations

import re
from dataclasses import dataclass

from ..world import Pose2D

PLACE_KEYS = ("x", "y", "theta")

_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_NAME = re.compile(r"[A-Za-z_]\w*")


class ActionParseError(ValueError):
    """Raised for text outside the action grammar; ``offset`` is a byte offset."""

    def __init__(self, message: str, text: str, pos: int):
        self.offset = len(text[:pos].encode("utf-8"))
        self.text = text
        super().__init__(f"{message} at byte {self.offset}: {text!r}")


@dataclass(frozen=True)
class Action:
    kind: str  # pick | place
    obj: str
    x: float | None = None
    y: float | None = None
    theta: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("pick", "place"):
            raise ValueError(f"unknown action kind {self.kind!r}")
        has = [v is not None for v in (self.x, self.y, self.theta)]
        if self.kind == "pick" and any(has):
            raise ValueError("pick takes no parameters")
        if self.kind == "place" and not all(has):
            raise ValueError("place needs x, y and theta")

    @classmethod
    def pick(cls, obj: str) -> "Action":
        return cls("pick", obj)

    @classmethod
    def place(cls, obj: str, x: float, y: float, theta: float = 0.0) -> "Action":
        return cls("place", obj, float(x), float(y), float(theta))

    @property
    def pose(self) -> Pose2D:
        return Pose2D(self.x, self.y, self.theta)

    def __str__(self) -> str:
        return format_action(self)


@dataclass(frozen=True)
class ActionStatus:
    action: Action
    outcome: str  # success | failure | not_executed
    reason: str | None = None

    def __post_init__(self) -> None:
        if (self.outcome == "failure") != (self.reason is not None):
            raise ValueError("reason present iff outcome is failure")

    @property
    def tag(self) -> str:
        return f"failure({self.reason})" if self.outcome == "failure" else self.outcome


def _quote(s: str) -> str:
    if "'" not in s:
        return f"'{s}'"
    if '"' not in s:
        return f'"{s}"'
    raise ValueError(f"identifier {s!r} cannot be quoted")


def format_action(action: Action) -> str:
    if action.kind == "pick":
        return f"pick([{_quote(action.obj)}], {{}})"
    return (
        f"place([{_quote(action.obj)}], "
        f"{{'x': {action.x!r}, 'y': {action.y!r}, 'theta': {action.theta!r}}})"
    )


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.i = 0

    def fail(self, msg: str):
        raise ActionParseError(msg, self.text, self.i)

    def ws(self) -> None:
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def peek(self) -> str:
        return self.text[self.i] if self.i < len(self.text) else ""

    def expect(self, ch: str) -> None:
        self.ws()
        if self.peek() != ch:
            self.fail(f"expected {ch!r}")
        self.i += 1

    def regex(self, pattern: re.Pattern, what: str) -> str:
        self.ws()
        m = pattern.match(self.text, self.i)
        if not m:
            self.fail(f"expected {what}")
        self.i = m.end()
        return m.group(0)

    def quoted(self) -> str:
        self.ws()
        q = self.peek()
        if q not in ("'", '"'):
            self.fail("expected quoted string")
        end = self.text.find(q, self.i + 1)
        if end < 0:
            self.fail("unterminated string")
        value = self.text[self.i + 1 : end]
        if not value:
            self.fail("empty identifier")
        self.i = end + 1
        return value


def parse_action(text: str) -> Action:
    s = _Scanner(text)
    name_pos = s.i
    name = s.regex(_NAME, "action name")
    if name not in ("pick", "place"):
        s.i = name_pos
        s.ws()
        s.fail(f"unknown action {name!r}")
    s.expect("(")
    s.expect("[")
    obj = s.quoted()
    s.expect("]")
    s.expect(",")
    s.expect("{")
    params: dict[str, float] = {}
    s.ws()
    if s.peek() != "}":
        while True:
            key_pos = s.i
            key = s.quoted()
            if key in params:
                s.i = key_pos
                s.fail(f"duplicate key {key!r}")
            s.expect(":")
            params[key] = float(s.regex(_NUMBER, "decimal literal"))
            s.ws()
            if s.peek() == ",":
                s.i += 1
                continue
            break
    s.expect("}")
    s.expect(")")
    s.ws()
    if s.i != len(text):
        s.fail("trailing characters")
    if name == "pick":
        if params:
            s.fail("pick takes no parameters")
        return Action.pick(obj)
    if set(params) != set(PLACE_KEYS):
        s.fail(f"place needs keys {PLACE_KEYS}, got {tuple(params)}")
    return Action.place(obj, params["x"], params["y"], params["theta"])
