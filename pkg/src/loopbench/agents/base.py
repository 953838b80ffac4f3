from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

from ..constraints import EnvSpec, PlacementEvent
from ..world import WorldState
from .actions import Action, ActionStatus


@dataclass(frozen=True)
class WarmStart:
    prev_plan: tuple[Action, ...]
    statuses: tuple[ActionStatus, ...]
    n_steps_replan: int


@dataclass(frozen=True)
class PlanRequest:
    env: EnvSpec
    world: WorldState
    reason: str = "initial"  # initial | horizon_elapsed | action_failed
    warm_start: WarmStart | None = None
    # realized placement log; the loop sends it only with warm-start context
    events: tuple[PlacementEvent, ...] = ()
    seed: int = 0
    query_index: int = 0
    max_queries: int = 1


@dataclass(frozen=True)
class PlanResponse:
    reasoning: str
    plan: tuple[Action, ...]
    raw: str = ""
    queries: int = 1


class AgentError(RuntimeError):
    """A planner could not produce a plan. ``queries`` counts attempts spent."""

    def __init__(self, kind: str, message: str = "", queries: int = 1):
        self.kind = kind
        self.queries = queries
        super().__init__(f"{kind}: {message}" if message else kind)


class Agent(Protocol):
    name: str

    def plan(self, request: PlanRequest) -> PlanResponse: ...
