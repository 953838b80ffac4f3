"""Batch orchestration: one work unit per (env, agent, trial index).

Each unit samples the initial condition, asks the agent for the open-loop plan
once, and runs every configured variant from that shared plan. Records are
written to ``records.jsonl`` in grid order, so the file is byte-identical
across runs for scripted agents once the ``timing`` field is dropped.
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from ..agents import AgentError, PlanRequest, PlanResponse, format_action
from ..constraints import EnvSpec
from ..loop import TrialTrace, run_trial
from ..metrics import compute_trial_metrics
from ..seeding import derive_seed
from ..world import sample_initial_state
from .config import AgentSpec, ExperimentConfig, loop_config
from .envspec import load_env_spec

SCHEMA_VERSION = 1
RECORDS = "records.jsonl"
MANIFEST = "manifest.json"
TIMING_FIELD = "timing"

log = logging.getLogger(__name__)


def world_seed(base_seed: int, env: str, index: int) -> int:
    """Initial-condition seed; shared by every agent and variant."""
    return derive_seed(base_seed, env, index)


def trial_seed(base_seed: int, env: str, agent: str, variant: str, index: int) -> int:
    return derive_seed(base_seed, env, agent, variant, index)


class _FirstQuery:
    """Replays a stored first-query outcome, then defers to the real agent."""

    def __init__(self, agent, first: PlanResponse | AgentError):
        self.agent = agent
        self.first = first
        self.name = getattr(agent, "name", "agent")

    def plan(self, request: PlanRequest) -> PlanResponse:
        if request.query_index == 0:
            if isinstance(self.first, AgentError):
                raise self.first
            return self.first
        return self.agent.plan(request)


def _status(s) -> dict:
    return {"action": format_action(s.action), "outcome": s.outcome, "reason": s.reason}


def trace_to_record(trace: TrialTrace) -> dict:
    return {
        "terminated_by": trace.terminated_by,
        "queries_used": trace.queries_used,
        "error": trace.error,
        "violations": trace.violations,
        "iterations": [
            {
                "query_index": it.query_index,
                "request_reason": it.request_reason,
                "plan": [format_action(a) for a in it.plan],
                "violations": it.violations_of_intended_order,
                "queries": it.queries,
                "reasoning": it.reasoning,
                "executed": [_status(s) for s in it.actions_executed_this_iteration],
            }
            for it in trace.iterations
        ],
        "events": [{"obj": e.obj, "destination": e.destination, "index": e.index} for e in trace.events],
        "final_state": {
            name: {"x": s.pose.x, "y": s.pose.y, "theta": s.pose.theta, "on_table": s.on_table}
            for name, s in sorted(trace.final_world.objects.items())
        },
    }


@dataclass(frozen=True)
class _Unit:
    env_ref: str
    env: EnvSpec
    agent: AgentSpec
    variants: tuple[str, ...]
    index: int
    base_seed: int
    denominator: str


def _run_unit(unit: _Unit) -> list[dict]:
    env, spec = unit.env, unit.agent
    out = []
    wseed = world_seed(unit.base_seed, env.name, unit.index)
    base = {
        "schema_version": SCHEMA_VERSION,
        "env": env.name,
        "agent": spec.name,
        "index": unit.index,
        "world_seed": wseed,
    }
    try:
        agent = spec.build()
        world = sample_initial_state(env, wseed)
        t0 = time.perf_counter()
        try:
            first = agent.plan(
                PlanRequest(env=env, world=world, seed=trial_seed(unit.base_seed, env.name, spec.name, "OL", unit.index))
            )
        except AgentError as exc:
            first = exc
        shared_seconds = time.perf_counter() - t0
    except Exception as exc:  # noqa: BLE001 - recorded, never fatal to the batch
        log.exception("unit %s/%s/%d failed", env.name, spec.name, unit.index)
        return [
            {**base, "variant": v, "trial_seed": trial_seed(unit.base_seed, env.name, spec.name, v, unit.index),
             "terminated_by": "harness_error", "error": f"{type(exc).__name__}: {exc}", "metrics": None,
             TIMING_FIELD: {"wall_seconds": 0.0}}
            for v in unit.variants
        ]

    replay = _FirstQuery(agent, first)
    for variant in unit.variants:
        seed = trial_seed(unit.base_seed, env.name, spec.name, variant, unit.index)
        rec = {**base, "variant": variant, "trial_seed": seed}
        t0 = time.perf_counter()
        try:
            cfg = loop_config(variant, env.k)
            trace = run_trial(env, replay, cfg, wseed, agent_seed=seed, world=world)
            rec.update(trace_to_record(trace))
            rec["budget"] = cfg.budget(env.k)
            rec["metrics"] = compute_trial_metrics(trace, env, unit.denominator).to_dict()
        except Exception as exc:  # noqa: BLE001
            log.exception("trial %s/%s/%s/%d failed", env.name, spec.name, variant, unit.index)
            rec.update(terminated_by="harness_error", error=f"{type(exc).__name__}: {exc}", metrics=None)
        rec[TIMING_FIELD] = {
            "wall_seconds": time.perf_counter() - t0,
            "shared_plan_seconds": shared_seconds,
        }
        out.append(rec)
    return out


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _units(config: ExperimentConfig, envs: list[tuple[str, EnvSpec]]) -> Iterator[_Unit]:
    for ref, env in envs:
        for spec in config.agents:
            for i in range(config.n_trials):
                yield _Unit(ref, env, spec, config.variants, i, config.base_seed, config.correction_denominator)


def _executor(config: ExperimentConfig) -> Executor | None:
    if config.parallelism <= 1:
        return None
    if any(a.type == "remote" for a in config.agents):
        # network-bound; threads share the per-endpoint rate limiter
        return ThreadPoolExecutor(config.parallelism)
    return ProcessPoolExecutor(config.parallelism)


def run_experiment(config: ExperimentConfig, out: str | Path | None = None) -> Path:
    """Run the whole grid and return the results directory."""
    out_dir = Path(out if out is not None else config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    envs = [(ref, load_env_spec(ref)) for ref in config.envs]
    names = [env.name for _, env in envs]
    if len(set(names)) != len(names):
        raise ValueError("environment names must be unique")
    (out_dir / MANIFEST).write_text(
        json.dumps({"schema_version": SCHEMA_VERSION, "config": config.to_dict()}, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    pool = _executor(config)
    units = list(_units(config, envs))
    with open(out_dir / RECORDS, "w", encoding="utf-8") as sink:
        # map() yields in submission order, so the single writer stays deterministic
        results = pool.map(_run_unit, units) if pool else map(_run_unit, units)
        try:
            for records in results:
                for rec in records:
                    sink.write(dumps(rec) + "\n")
        finally:
            if pool:
                pool.shutdown()
    return out_dir


def read_records(results: str | Path) -> list[dict]:
    path = Path(results)
    if path.is_dir():
        path = path / RECORDS
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def strip_timing(record: dict) -> dict:
    return {k: v for k, v in record.items() if k != TIMING_FIELD}
