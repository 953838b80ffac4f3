"""Open-loop and closed-loop (receding-horizon) execution of symbolic plans."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .agents.actions import Action, ActionStatus
from .agents.base import Agent, AgentError, PlanRequest, PlanResponse, WarmStart
from .constraints import EnvSpec, PlacementEvent, count_violations, goal_achieved, is_satisfied
from .world import Failure, Pose2D, WorldState, execute_pick, execute_place, sample_initial_state

OPEN_LOOP = "open_loop"
CLOSED_LOOP = "closed_loop"


def control_horizon_for(setting: str, k: int) -> int:
    if k < 1:
        raise ValueError("task length must be at least 1")
    if setting == "short":
        return 2
    if setting == "half":
        return math.ceil(k / 2)
    if setting == "full":
        return k
    raise ValueError(f"unknown horizon setting {setting!r}")


@dataclass(frozen=True)
class LoopConfig:
    mode: str = CLOSED_LOOP
    control_horizon: int | None = None
    warm_start: bool = True
    query_budget: int | None = None
    initial_plan_source: str = "fresh"  # fresh | shared_open_loop

    def __post_init__(self) -> None:
        if self.mode not in (OPEN_LOOP, CLOSED_LOOP):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == CLOSED_LOOP and (self.control_horizon is None or self.control_horizon < 1):
            raise ValueError("closed loop needs a positive control horizon")
        if self.mode == OPEN_LOOP and self.query_budget not in (None, 1):
            raise ValueError("open loop query budget is 1")
        if self.query_budget is not None and self.query_budget < 1:
            raise ValueError("query budget must be positive")
        if self.initial_plan_source not in ("fresh", "shared_open_loop"):
            raise ValueError(f"unknown initial plan source {self.initial_plan_source!r}")

    def budget(self, k: int) -> int:
        if self.mode == OPEN_LOOP:
            return 1
        if self.query_budget is not None:
            return self.query_budget
        return max(1, (2 * k) // self.control_horizon)


@dataclass
class IterationRecord:
    query_index: int
    request_reason: str
    plan: tuple[Action, ...]
    violations_of_intended_order: int
    queries: int = 1
    reasoning: str = ""
    raw: str = ""
    actions_executed_this_iteration: list[ActionStatus] = field(default_factory=list)


@dataclass
class TrialTrace:
    env_name: str
    seed: int
    config: LoopConfig
    iterations: list[IterationRecord]
    final_world: WorldState
    events: list[PlacementEvent]
    terminated_by: str  # task_complete | budget_exhausted | plan_exhausted | agent_error
    queries_used: int
    error: str | None = None

    @property
    def violations(self) -> list[int]:
        return [it.violations_of_intended_order for it in self.iterations]


def build_warm_start_context(prev: PlanResponse | tuple[Action, ...], statuses: list[ActionStatus], n_steps_replan: int) -> WarmStart:
    """Tag every action of the previous plan with what happened to it."""
    plan = prev.plan if isinstance(prev, PlanResponse) else tuple(prev)
    tagged = list(statuses[: len(plan)])
    tagged += [ActionStatus(a, "not_executed") for a in plan[len(tagged):]]
    return WarmStart(prev_plan=plan, statuses=tuple(tagged), n_steps_replan=n_steps_replan)


def execute(world: WorldState, action: Action) -> WorldState | Failure:
    if action.kind == "pick":
        return execute_pick(world, action.obj)
    return execute_place(world, action.obj, Pose2D(action.x, action.y, action.theta))


def intended_events(env: EnvSpec, world: WorldState, events: list[PlacementEvent], plan: tuple[Action, ...]) -> list[PlacementEvent]:
    """Executed placements followed by the placements the plan intends.

    A planned place is attributed to the goal region containing its target
    point, so a slightly-off pose still expresses the same logical intent.
    """
    out = list(events)
    goal_regions = world.goal_regions()
    for action in plan:
        if action.kind != "place" or action.obj not in env.roster:
            continue
        kinds = [r.kind for r in goal_regions if r.contains_point(action.x, action.y)]
        out.append(PlacementEvent(action.obj, kinds[0] if len(kinds) == 1 else None, len(out)))
    return out


def run_trial(
    env: EnvSpec,
    agent: Agent,
    config: LoopConfig,
    seed: int,
    *,
    agent_seed: int | None = None,
    shared_plan: PlanResponse | None = None,
    world: WorldState | None = None,
) -> TrialTrace:
    """Run one trial from the initial condition ``seed``.

    ``shared_plan`` is the stored open-loop output for this initial
    condition; with ``initial_plan_source == "shared_open_loop"`` it is used as
    iteration 0 in place of a fresh agent call (it still counts as a query).
    """
    world = world if world is not None else sample_initial_state(env, seed)
    agent_seed = seed if agent_seed is None else agent_seed
    closed = config.mode == CLOSED_LOOP
    horizon = config.control_horizon if closed else None
    budget = config.budget(env.k)
    events: list[PlacementEvent] = []
    iterations: list[IterationRecord] = []
    queries = 0
    reason = "initial"
    warm: WarmStart | None = None
    error = None

    def finish(terminated_by: str) -> TrialTrace:
        return TrialTrace(env.name, seed, config, iterations, world, events, terminated_by, queries, error)

    if goal_achieved(env.goal, world) and is_satisfied(env.constraints, events):
        return finish("task_complete")

    while True:
        request = PlanRequest(
            env=env,
            world=world,
            reason=reason,
            warm_start=warm,
            # placement history travels with warm-start context only
            events=tuple(events) if warm is not None else (),
            seed=agent_seed,
            query_index=len(iterations),
            max_queries=budget - queries,
        )
        try:
            if not iterations and shared_plan is not None and config.initial_plan_source == "shared_open_loop":
                response = shared_plan
            else:
                response = agent.plan(request)
        except AgentError as exc:
            queries += min(max(exc.queries, 1), budget - queries)
            error = str(exc)
            return finish("agent_error")
        queries += response.queries
        record = IterationRecord(
            query_index=len(iterations),
            request_reason=reason,
            plan=tuple(response.plan),
            violations_of_intended_order=count_violations(
                env.constraints, intended_events(env, world, events, response.plan)
            ),
            queries=response.queries,
            reasoning=response.reasoning,
            raw=response.raw,
        )
        iterations.append(record)

        trigger = None
        done = False
        successes = 0
        for action in response.plan:
            result = execute(world, action)
            if isinstance(result, Failure):
                record.actions_executed_this_iteration.append(ActionStatus(action, "failure", result.reason))
                trigger = "action_failed"
                break
            world = result
            record.actions_executed_this_iteration.append(ActionStatus(action, "success"))
            if action.kind == "place":
                events.append(PlacementEvent(action.obj, world.destination_of(action.obj), len(events)))
            successes += 1
            if goal_achieved(env.goal, world):
                done = True
                break
            # once the budget is spent the current plan simply runs on
            if closed and successes == horizon and queries < budget:
                trigger = "horizon_elapsed"
                break

        if done:
            return finish("task_complete" if is_satisfied(env.constraints, events) else "plan_exhausted")
        if not closed:
            return finish("plan_exhausted" if trigger is None else "budget_exhausted")
        if trigger is None:
            if queries >= budget:
                return finish("plan_exhausted")
            trigger = "horizon_elapsed"
        if queries >= budget:
            return finish("budget_exhausted")
        warm = (
            build_warm_start_context(response, record.actions_executed_this_iteration, horizon)
            if config.warm_start
            else None
        )
        reason = trigger
