"""Per-trial metrics, scenario aggregation, and two-proportion z-tests."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .constraints import EnvSpec, goal_achieved, is_satisfied
from .loop import TrialTrace

ALPHA = 0.05


class EmptyScenario(ValueError):
    pass


class BadSample(ValueError):
    pass


@dataclass(frozen=True)
class TrialMetrics:
    goal_achieved: bool
    task_completed: bool
    final_logic_ok: bool
    pos_corrections: int = 0
    pos_opportunities: int = 0
    neg_corrections: int = 0
    neg_opportunities: int = 0
    # the deterministic executor makes every trial valid; kept for ingesting external tables
    valid: bool = True

    def __post_init__(self) -> None:
        if self.task_completed and not (self.goal_achieved and self.final_logic_ok):
            raise ValueError("task completion requires goal achievement and logical correctness")
        if self.pos_corrections > self.pos_opportunities or self.neg_corrections > self.neg_opportunities:
            raise ValueError("corrections cannot exceed opportunities")

    def to_dict(self) -> dict:
        return asdict(self)


DENOMINATORS = ("opportunities", "replans")


def correction_counts(
    violations: Sequence[int], n_constraints: int, denominator: str = "opportunities"
) -> tuple[int, int, int, int]:
    """(pos, pos_opportunities, neg, neg_opportunities) over consecutive iterations.

    With ``"opportunities"`` a replan can only count toward a positive
    correction if the previous plan had a violation, and toward a negative one
    if it had room to get worse. ``"replans"`` counts every replan for both.
    """
    if denominator not in DENOMINATORS:
        raise ValueError(f"unknown correction denominator {denominator!r}")
    pos = pos_opp = neg = neg_opp = 0
    every = denominator == "replans"
    for prev, nxt in zip(violations, violations[1:]):
        if every or prev > 0:
            pos_opp += 1
        if every or prev < n_constraints:
            neg_opp += 1
        if nxt < prev:
            pos += 1
        elif nxt > prev:
            neg += 1
    return pos, pos_opp, neg, neg_opp


def compute_trial_metrics(trace: TrialTrace, env: EnvSpec, denominator: str = "opportunities") -> TrialMetrics:
    goal = goal_achieved(env.goal, trace.final_world)
    logic = is_satisfied(env.constraints, trace.events)
    pos, pos_opp, neg, neg_opp = correction_counts(trace.violations, len(env.constraints), denominator)
    return TrialMetrics(
        goal_achieved=goal,
        task_completed=goal and logic,
        final_logic_ok=logic,
        pos_corrections=pos,
        pos_opportunities=pos_opp,
        neg_corrections=neg,
        neg_opportunities=neg_opp,
    )


@dataclass(frozen=True)
class ScenarioStats:
    gar: float
    tcr: float
    cfp: float
    pcr: float | None
    ncr: float | None
    n_trials: int  # valid trials
    n_total: int
    counts: dict

    def __post_init__(self) -> None:
        if self.tcr > self.gar:
            raise ValueError("task completion rate exceeds goal achieved rate")


def aggregate(trials: Iterable[TrialMetrics]) -> ScenarioStats:
    """Pool trials of one scenario.

    GAR and TCR are over valid trials, CFP over all trials; PCR/NCR are
    pooled correction counts over pooled opportunities (None when there are
    no opportunities).
    """
    trials = list(trials)
    if not trials:
        raise EmptyScenario("no trials to aggregate")
    valid = [t for t in trials if t.valid]
    n_valid = len(valid)
    goal = sum(t.goal_achieved for t in valid)
    task = sum(t.task_completed for t in valid)
    logic = sum(t.final_logic_ok for t in trials)
    pos = sum(t.pos_corrections for t in trials)
    pos_opp = sum(t.pos_opportunities for t in trials)
    neg = sum(t.neg_corrections for t in trials)
    neg_opp = sum(t.neg_opportunities for t in trials)
    return ScenarioStats(
        gar=goal / n_valid if n_valid else 0.0,
        tcr=task / n_valid if n_valid else 0.0,
        cfp=logic / len(trials),
        pcr=pos / pos_opp if pos_opp else None,
        ncr=neg / neg_opp if neg_opp else None,
        n_trials=n_valid,
        n_total=len(trials),
        counts=dict(
            goal=goal, task=task, logic=logic, pos=pos, pos_opp=pos_opp, neg=neg, neg_opp=neg_opp
        ),
    )


@dataclass(frozen=True)
class ZTestResult:
    z: float
    p_value: float
    significant: bool
    direction: int  # sign of p1 - p2


def normal_sf(x: float) -> float:
    """Upper tail of the standard normal."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def two_prop_z(p1: float, n1: int, p2: float, n2: int, alpha: float = ALPHA) -> ZTestResult:
    """Pooled two-sided two-proportion z-test."""
    for n in (n1, n2):
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise BadSample(f"sample size must be a positive integer, got {n!r}")
    for p in (p1, p2):
        if not (0.0 <= p <= 1.0) or math.isnan(p):
            raise BadSample(f"proportion out of range: {p!r}")
    pooled = (p1 * n1 + p2 * n2) / (n1 + n2)
    var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)
    if var <= 0.0:
        return ZTestResult(0.0, 1.0, False, 0)
    z = (p1 - p2) / math.sqrt(var)
    p_value = min(1.0, 2.0 * normal_sf(abs(z)))
    direction = (p1 > p2) - (p1 < p2)
    return ZTestResult(z, p_value, p_value < alpha, direction)
