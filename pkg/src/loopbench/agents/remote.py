"""Chat-completion planner client using the planner prompt templates."""
from __future__ import annotations

import base64
import json
import logging
import math
import mimetypes
import os
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import httpx

from ..world import Circle, WorldState
from .actions import Action, ActionParseError, parse_action
from .base import AgentError, PlanRequest, PlanResponse, WarmStart

log = logging.getLogger(__name__)

TEMPLATES = {
    "open_loop": "open_loop.txt",
    "closed_loop": "closed_loop.txt",
    "closed_loop_nws": "closed_loop_nws.txt",
}


def load_template(name: str) -> str:
    return resources.files("loopbench.prompts").joinpath(TEMPLATES[name]).read_text(encoding="utf-8")


def describe_scene(world: WorldState) -> str:
    """Deterministic textual stand-in for the camera observations."""
    lines = ["Objects (name: x, y, theta, footprint, location):"]
    for name in sorted(world.objects):
        s = world.objects[name]
        if isinstance(s.footprint, Circle):
            fp = f"circle radius {s.footprint.radius:.3f}"
        else:
            fp = f"rectangle {2 * s.footprint.half_x:.3f} x {2 * s.footprint.half_y:.3f}"
        if not s.on_table:
            where = "held by the gripper"
        else:
            where = world.destination_of(name) or "not inside any goal region"
        lines.append(f"- {name}: x={s.pose.x:.3f}, y={s.pose.y:.3f}, theta={s.pose.theta:.3f}, {fp}, {where}")
    lines.append("Regions:")
    for r in world.regions:
        if isinstance(r.shape, Circle):
            shape = f"circle radius {r.shape.radius:.3f}"
        else:
            shape = f"rectangle {2 * r.shape.half_x:.3f} x {2 * r.shape.half_y:.3f}"
        lines.append(f"- {r.name} ({r.kind}): centre ({r.pose.x:.3f}, {r.pose.y:.3f}), {shape}")
    occupancy = {}
    for name in sorted(world.objects):
        dest = world.destination_of(name)
        if dest:
            occupancy.setdefault(dest, []).append(name)
    for kind in sorted(occupancy):
        lines.append(f"Currently in the {kind}: {', '.join(occupancy[kind])}")
    lines.append(f"Gripper: {world.gripper or 'empty'}")
    return "\n".join(lines)


def format_warm_start(ws: WarmStart) -> str:
    lines = []
    for i, st in enumerate(ws.statuses, 1):
        lines.append(f"{i}. {st.action} -> {st.tag}")
    return "\n".join(lines) if lines else "(empty)"


def build_prompt(request: PlanRequest) -> str:
    if request.reason == "initial":
        template = load_template("open_loop")
    elif request.warm_start is not None:
        template = load_template("closed_loop")
    else:
        template = load_template("closed_loop_nws")
    domain = (
        request.env.prompt_domain_desc.rstrip()
        + "\n\nThe current state of the environment is:\n"
        + describe_scene(request.world)
    )
    text = template.replace("{domain_desc}", domain)
    if request.warm_start is not None:
        text = text.replace("{prev_plan}", format_warm_start(request.warm_start))
        text = text.replace("{n_steps_replan}", str(request.warm_start.n_steps_replan))
    return text


_FENCE = re.compile(r"^\s*```[A-Za-z]*\s*\n?(.*?)\n?\s*```\s*$", re.S)


class MalformedOutput(ValueError):
    pass


def parse_response(text: str) -> tuple[str, tuple[Action, ...]]:
    """Parse ``{"Reasoning": ..., "Full Plan": [...]}``, tolerating code fences."""
    body = text.strip()
    m = _FENCE.match(body)
    if m:
        body = m.group(1).strip()
    try:
        data = json.loads(body)
    except json.JSONDecodeError:
        start, end = body.find("{"), body.rfind("}")
        if start < 0 or end <= start:
            raise MalformedOutput("no JSON object in output") from None
        try:
            data = json.loads(body[start : end + 1])
        except json.JSONDecodeError as exc:
            raise MalformedOutput(f"invalid JSON: {exc}") from None
    if not isinstance(data, dict) or "Full Plan" not in data:
        raise MalformedOutput("missing 'Full Plan'")
    steps = data["Full Plan"]
    if not isinstance(steps, list) or not all(isinstance(s, str) for s in steps):
        raise MalformedOutput("'Full Plan' must be a list of strings")
    reasoning = data.get("Reasoning", "")
    if not isinstance(reasoning, str):
        reasoning = json.dumps(reasoning)
    return reasoning, tuple(parse_action(s) for s in steps)


class RateLimiter:
    """Serialises calls per endpoint with a minimum spacing between them."""

    _locks: dict[str, threading.Lock] = {}
    _last: dict[str, float] = {}
    _guard = threading.Lock()

    def __init__(self, endpoint: str, min_interval: float):
        self.endpoint = endpoint
        self.min_interval = min_interval
        with self._guard:
            self._lock = self._locks.setdefault(endpoint, threading.Lock())

    def __enter__(self):
        self._lock.acquire()
        wait = self._last.get(self.endpoint, -math.inf) + self.min_interval - time.monotonic()
        if wait > 0:
            time.sleep(wait)
        return self

    def __exit__(self, *exc):
        self._last[self.endpoint] = time.monotonic()
        self._lock.release()


@dataclass(frozen=True)
class RemoteConfig:
    endpoint: str
    model: str
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3  # transport-level retries per query
    parse_retries: int = 2  # extra queries after malformed output; each costs budget
    min_interval: float = 0.0
    backoff: float = 1.0
    images: tuple[str, ...] = field(default_factory=tuple)


def _image_part(path: str) -> dict:
    mime = mimetypes.guess_type(path)[0] or "image/png"
    data = base64.b64encode(Path(path).read_bytes()).decode("ascii")
    return {"type": "image_url", "image_url": {"url": f"data:{mime};base64,{data}"}}


class RemoteAgent:
    def __init__(self, config: RemoteConfig, name: str | None = None, transport: httpx.BaseTransport | None = None):
        self.config = config
        self.name = name or config.model
        self._transport = transport

    def _messages(self, prompt: str) -> list[dict]:
        if not self.config.images:
            return [{"role": "user", "content": prompt}]
        parts = [{"type": "text", "text": prompt}] + [_image_part(p) for p in self.config.images]
        return [{"role": "user", "content": parts}]

    def _post(self, client: httpx.Client, body: dict) -> str:
        cfg = self.config
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(cfg.backoff * 2 ** (attempt - 1))
            try:
                with RateLimiter(cfg.endpoint, cfg.min_interval):
                    resp = client.post(cfg.endpoint, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last = exc
                log.warning("transport error on %s: %s", cfg.endpoint, exc)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = RuntimeError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise AgentError("transport", f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise MalformedOutput(f"unexpected response body: {exc}") from None
        raise AgentError("transport", str(last))

    def plan(self, request: PlanRequest) -> PlanResponse:
        prompt = build_prompt(request)
        body = {
            "model": self.config.model,
            "messages": self._messages(prompt),
            "temperature": self.config.temperature,
        }
        attempts = max(1, min(1 + self.config.parse_retries, request.max_queries))
        error: AgentError | None = None
        with httpx.Client(transport=self._transport, timeout=self.config.timeout) as client:
            for used in range(1, attempts + 1):
                try:
                    raw = self._post(client, body)
                    reasoning, plan = parse_response(raw)
                except AgentError as exc:
                    exc.queries = used
                    raise
                except MalformedOutput as exc:
                    error = AgentError("malformed_output", str(exc), used)
                    continue
                except ActionParseError as exc:
                    error = AgentError("unparseable_action", str(exc), used)
                    continue
                if not plan:
                    error = AgentError("malformed_output", "empty plan", used)
                    continue
                return PlanResponse(reasoning=reasoning, plan=plan, raw=raw, queries=used)
        raise error


def remote_plan(request: PlanRequest, config: RemoteConfig) -> PlanResponse:
    return RemoteAgent(config).plan(request)
