"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Oracles here are independent of the package: a hand-written evaluator
(reference.py), numpy point sampling with shapely margins for geometry, and
statsmodels for the z-test.
"""
import contextlib
import itertools
import math
import random
import time

import numpy as np
import pytest
import shapely
from shapely import affinity
from shapely.geometry import Point, box
from statsmodels.stats.proportion import proportions_ztest

from loopbench.agents import Action, AgentError, ErrorModel, NoisyAgent, format_action, parse_action
from loopbench.constraints import PlacementEvent, count_violations, enumerate_satisfying_orders, is_satisfied
from loopbench.experiment.config import VARIANTS, AgentSpec, ExperimentConfig, loop_config
from loopbench.experiment.envspec import BUNDLED
from loopbench.experiment.report import generate_report, read_table, scenario_stats
from loopbench.experiment.runner import RECORDS, dumps, read_records, run_experiment
from loopbench.loop import run_trial
from loopbench.metrics import ALPHA, two_prop_z
from loopbench.world import EPS_GEO, Circle, Pose2D, Rect, Region, contains, overlaps
from reference import CUBE_EASY_TABLE, EVALUATORS, TOTAL_TRIALS, count_for, smallest_fraction

CUBE_EASY_SATISFYING = 16


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def run(n, title):
        info = {}
        try:
            yield info
        except BaseException:
            with capsys.disabled():
                print(f"\ncriterion {n} FAIL: {title}")
            raise
        with capsys.disabled():
            detail = ", ".join(f"{k}={v}" for k, v in info.items())
            print(f"\ncriterion {n} PASS: {title}" + (f" ({detail})" if detail else ""))

    return run


def test_1_oracle_end_to_end(criterion, tmp_path):
    with criterion(1, "oracle reaches TCR 1.0 everywhere in under 60 s") as info:
        cfg = ExperimentConfig(envs=BUNDLED, variants=("OL", "CL-S", "CL-H", "CL-F"), n_trials=50)
        t0 = time.perf_counter()
        out = run_experiment(cfg, tmp_path)
        elapsed = time.perf_counter() - t0
        stats = scenario_stats(read_records(out))
        assert set(stats) == set(BUNDLED)
        for env, cells in stats.items():
            assert len(cells) == 4
            for key, s in cells.items():
                assert s.n_trials == 50 and s.tcr == 1.0, (env, key, s.tcr)
        assert elapsed < 60.0
        info["seconds"] = f"{elapsed:.1f}"


def test_2_constraint_checker_equivalence(criterion, envs):
    with criterion(2, "checker agrees with the reference evaluator on every permutation") as info:
        checked = 0
        for name in BUNDLED:
            env = envs[name]
            ref = EVALUATORS[name]
            satisfying = 0
            for perm in itertools.permutations(env.roster):
                seq = [(o, env.goal.required[o]) for o in perm]
                ev = [PlacementEvent(o, d, i) for i, (o, d) in enumerate(seq)]
                expected = ref(seq)
                assert count_violations(env.constraints, ev) == expected, (name, perm)
                assert is_satisfied(env.constraints, ev) == (expected == 0)
                satisfying += expected == 0
                checked += 1
            if name == "cube_easy":
                assert satisfying == CUBE_EASY_SATISFYING
            assert enumerate_satisfying_orders(env.constraints, list(env.roster), env.goal.required) == satisfying
        info["permutations"] = checked


# --- geometry oracle ----------------------------------------------------------

GRID = 1e-3
EDGE = 1e-4
QUAD_SEGS = 256


def _local_samples(fp):
    """Grid, boundary, and vertex points of a footprint in its own frame."""
    if isinstance(fp, Rect):
        hx, hy = fp.half_x, fp.half_y
        # linspace keeps every sample on or inside the edges, spacing at most GRID
        xs = np.linspace(-hx, hx, math.ceil(2 * hx / GRID) + 1)
        ys = np.linspace(-hy, hy, math.ceil(2 * hy / GRID) + 1)
        gx, gy = np.meshgrid(xs, ys)
        tx = np.linspace(-hx, hx, math.ceil(2 * hx / EDGE) + 1)
        ty = np.linspace(-hy, hy, math.ceil(2 * hy / EDGE) + 1)
        return np.vstack([
            np.column_stack([gx.ravel(), gy.ravel()]),
            np.column_stack([tx, np.full_like(tx, hy)]),
            np.column_stack([tx, np.full_like(tx, -hy)]),
            np.column_stack([np.full_like(ty, hx), ty]),
            np.column_stack([np.full_like(ty, -hx), ty]),
        ])
    r = fp.radius
    xs = np.linspace(-r, r, math.ceil(2 * r / GRID) + 1)
    gx, gy = np.meshgrid(xs, xs)
    inside = gx**2 + gy**2 <= r * r
    n = int(2 * math.pi * r / EDGE) + 8
    t = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    return np.vstack([np.column_stack([gx[inside], gy[inside]]), np.column_stack([r * np.cos(t), r * np.sin(t)])])


def _to_world(pts, pose):
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return np.column_stack([pose.x + c * pts[:, 0] - s * pts[:, 1], pose.y + s * pts[:, 0] + c * pts[:, 1]])


def _inside(pts, fp, pose, strict):
    dx, dy = pts[:, 0] - pose.x, pts[:, 1] - pose.y
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    lx, ly = c * dx + s * dy, -s * dx + c * dy
    if isinstance(fp, Rect):
        if strict:
            return (np.abs(lx) < fp.half_x) & (np.abs(ly) < fp.half_y)
        return (np.abs(lx) <= fp.half_x) & (np.abs(ly) <= fp.half_y)
    d2 = lx**2 + ly**2
    return d2 < fp.radius**2 if strict else d2 <= fp.radius**2


def _poly(fp, pose):
    if isinstance(fp, Rect):
        g = box(-fp.half_x, -fp.half_y, fp.half_x, fp.half_y)
    else:
        g = Point(0, 0).buffer(fp.radius, quad_segs=QUAD_SEGS)
    g = affinity.rotate(g, pose.theta, origin=(0, 0), use_radians=True)
    return affinity.translate(g, pose.x, pose.y)


def _approx_bound(*fps):
    # inscribed polygon approximation of a circle is off by at most r(1 - cos(pi / 4q))
    return max((fp.radius * (1 - math.cos(math.pi / (4 * QUAD_SEGS))) for fp in fps if isinstance(fp, Circle)), default=0.0)


def _shape(rng, lo, hi):
    if rng.random() < 0.5:
        return Rect(rng.uniform(lo, hi), rng.uniform(lo, hi))
    return Circle(rng.uniform(lo, hi))


def _pose(rng, spread):
    return Pose2D(rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(-math.pi, math.pi))


def test_3_geometry_equivalence(criterion):
    with criterion(3, "contains/overlaps agree with dense point sampling away from boundaries") as info:
        rng = random.Random(2024)
        kept = {"contains": 0, "overlaps": 0}
        outcomes = {"contains": set(), "overlaps": set()}

        for _ in range(1000):
            region_shape = _shape(rng, 0.08, 0.2)
            region = Region("r", region_shape, _pose(rng, 0.05), "basket")
            fp = _shape(rng, 0.01, 0.08)
            pose = _pose(rng, 0.2)
            margin = EPS_GEO + _approx_bound(region_shape, fp)
            rp, fpp = _poly(region_shape, region.pose), _poly(fp, pose)
            if rp.buffer(-margin, quad_segs=QUAD_SEGS).contains(fpp) != rp.buffer(margin, quad_segs=QUAD_SEGS).contains(fpp):
                continue
            pts = _to_world(_local_samples(fp), pose)
            expected = bool(_inside(pts, region_shape, region.pose, strict=False).all())
            assert contains(region, fp, pose) == expected, (region, fp, pose)
            kept["contains"] += 1
            outcomes["contains"].add(expected)

        for _ in range(1000):
            fa, fb = _shape(rng, 0.01, 0.1), _shape(rng, 0.01, 0.1)
            pa, pb = _pose(rng, 0.1), _pose(rng, 0.1)
            margin = EPS_GEO + _approx_bound(fa, fb)
            ga, gb = _poly(fa, pa), _poly(fb, pb)
            if ga.buffer(-margin, quad_segs=QUAD_SEGS).intersects(gb) != ga.buffer(margin, quad_segs=QUAD_SEGS).intersects(gb):
                continue
            a_pts, b_pts = _to_world(_local_samples(fa), pa), _to_world(_local_samples(fb), pb)
            expected = bool(_inside(a_pts, fb, pb, strict=True).any() or _inside(b_pts, fa, pa, strict=True).any())
            assert overlaps(pa, fa, pb, fb) == expected, (fa, pa, fb, pb)
            assert overlaps(pb, fb, pa, fa) == expected
            kept["overlaps"] += 1
            outcomes["overlaps"].add(expected)

        assert kept["contains"] >= 950 and kept["overlaps"] >= 950
        assert outcomes["contains"] == {True, False} and outcomes["overlaps"] == {True, False}
        info.update(contains=kept["contains"], overlaps=kept["overlaps"], shapely=shapely.__version__)


def test_4_statistics(criterion):
    with criterion(4, "z-test matches statsmodels and passes 10,000 fuzzed property checks") as info:
        r = two_prop_z(0.78, 50, 0.14, 50)
        z_ref, p_ref = proportions_ztest([39, 7], [50, 50])
        assert abs(abs(r.z) - abs(z_ref)) < 1e-6
        assert abs(r.p_value - p_ref) < 1e-6
        assert r.significant
        info["z"] = f"{r.z:.4f}"

        rng = random.Random(7)
        degenerate = 0
        for _ in range(10_000):
            n1, n2 = rng.randint(1, 500), rng.randint(1, 500)
            roll = rng.random()
            if roll < 0.1:
                k1, k2 = 0, 0
            elif roll < 0.2:
                k1, k2 = n1, n2
            else:
                k1, k2 = rng.randint(0, n1), rng.randint(0, n2)
            p1, p2 = k1 / n1, k2 / n2
            a, b = two_prop_z(p1, n1, p2, n2), two_prop_z(p2, n2, p1, n1)
            assert abs(a.z + b.z) < 1e-9
            assert abs(a.p_value - b.p_value) < 1e-12
            assert a.significant == b.significant and a.direction == -b.direction
            assert a.significant == (a.p_value < ALPHA)
            if k1 + k2 in (0, n1 + n2):
                degenerate += 1
                assert (a.z, a.p_value, a.significant) == (0.0, 1.0, False)
        assert degenerate >= 1000
        info["degenerate"] = degenerate


def test_5_replanning_helps(criterion, tmp_path):
    with criterion(5, "GAR(CL-F) > GAR(OL), significant") as info:
        agent = AgentSpec("geo", "noisy", {"p_geo": 0.2, "p_log": 0.0, "memoryful": True})
        cfg = ExperimentConfig(envs=("cube_easy",), agents=(agent,), variants=("OL", "CL-F"), n_trials=500)
        cells = scenario_stats(read_records(run_experiment(cfg, tmp_path)))["cube_easy"]
        cl, ol = cells[("geo", "CL-F")], cells[("geo", "OL")]
        r = two_prop_z(cl.gar, cl.n_trials, ol.gar, ol.n_trials)
        assert cl.gar > ol.gar and r.significant
        info.update(cl_f=f"{cl.gar:.3f}", ol=f"{ol.gar:.3f}", z=f"{r.z:.2f}")


def test_6_warm_start_helps(criterion, tmp_path):
    with criterion(6, "TCR(warm CL-S) > TCR(CL-S-NWS), significant") as info:
        params = {"p_geo": 0.15, "p_log": 0.1}
        warm = ExperimentConfig(
            envs=("cube_easy",), agents=(AgentSpec("warm", "noisy", {**params, "memoryful": True}),),
            variants=("CL-S",), n_trials=500,
        )
        cold = ExperimentConfig(
            envs=("cube_easy",), agents=(AgentSpec("cold", "noisy", {**params, "memoryful": False}),),
            variants=("CL-S-NWS",), n_trials=500,
        )
        w = scenario_stats(read_records(run_experiment(warm, tmp_path / "warm")))["cube_easy"][("warm", "CL-S")]
        c = scenario_stats(read_records(run_experiment(cold, tmp_path / "cold")))["cube_easy"][("cold", "CL-S-NWS")]
        r = two_prop_z(w.tcr, w.n_trials, c.tcr, c.n_trials)
        assert w.tcr > c.tcr and r.significant
        info.update(warm=f"{w.tcr:.3f}", nws=f"{c.tcr:.3f}", z=f"{r.z:.2f}")


class _Flaky:
    """Noisy planner that sometimes fails, claiming a random number of attempts."""

    def __init__(self, model, rng):
        self.inner = NoisyAgent(model)
        self.rng = rng
        self.name = "flaky"

    def plan(self, request):
        if self.rng.random() < 0.1:
            raise AgentError("malformed_output", "fuzz", self.rng.randint(1, 5))
        return self.inner.plan(request)


def test_7_budget_invariant(criterion, envs):
    with criterion(7, "queries never exceed floor(2k/N); OL issues exactly one") as info:
        rng = random.Random(11)
        ol = 0
        for i in range(1000):
            env = envs[rng.choice(BUNDLED)]
            variant = rng.choice(VARIANTS)
            cfg = loop_config(variant, env.k)
            model = ErrorModel(rng.random(), rng.random(), memoryful=rng.random() < 0.5)
            agent = _Flaky(model, random.Random(i)) if rng.random() < 0.3 else NoisyAgent(model)
            t = run_trial(env, agent, cfg, rng.randrange(1 << 30), agent_seed=i)
            limit = 1 if variant == "OL" else (2 * env.k) // cfg.control_horizon
            assert 1 <= t.queries_used <= limit, (variant, env.name, t.queries_used)
            if variant == "OL":
                ol += 1
                assert t.queries_used == 1 and len(t.iterations) <= 1
        info["open_loop_trials"] = ol


def _synthetic_records(row):
    agent, variant, gar, tcr, cfp, pcr, ncr, n_valid = row
    n_invalid = TOTAL_TRIALS - n_valid
    goal, task, logic = count_for(gar, n_valid), count_for(tcr, n_valid), count_for(cfp, TOTAL_TRIALS)
    # valid trials: task, then goal-only (logic false), then the rest
    trials = [dict(goal_achieved=True, task_completed=True, final_logic_ok=True, valid=True) for _ in range(task)]
    trials += [dict(goal_achieved=True, task_completed=False, final_logic_ok=False, valid=True) for _ in range(goal - task)]
    trials += [dict(goal_achieved=False, task_completed=False, final_logic_ok=False, valid=True) for _ in range(n_valid - goal)]
    trials += [dict(goal_achieved=False, task_completed=False, final_logic_ok=False, valid=False) for _ in range(n_invalid)]
    extra = logic - task
    free = [t for t in trials if not t["goal_achieved"]]
    assert 0 <= extra <= len(free), row
    for t in free[:extra]:
        t["final_logic_ok"] = True
    for t in trials:
        t.update(pos_corrections=0, pos_opportunities=0, neg_corrections=0, neg_opportunities=0)
    if pcr != "–":
        trials[0]["pos_corrections"], trials[0]["pos_opportunities"] = smallest_fraction(pcr)
    if ncr != "–":
        trials[0]["neg_corrections"], trials[0]["neg_opportunities"] = smallest_fraction(ncr)
    return [
        {"schema_version": 1, "env": "cube_easy", "agent": agent, "variant": variant, "index": i, "metrics": m}
        for i, m in enumerate(trials)
    ]


def test_8_report_fidelity(criterion, tmp_path):
    with criterion(8, "Cube-Easy reference table round-trips cell-for-cell") as info:
        records = [r for row in CUBE_EASY_TABLE for r in _synthetic_records(row)]
        with open(tmp_path / RECORDS, "w", encoding="utf-8") as fh:
            for r in records:
                fh.write(dumps(r) + "\n")
        rows = read_table(generate_report(tmp_path) / "cube_easy.csv")
        got = [tuple(r.values()) for r in rows]
        want = [tuple(str(c) for c in row) for row in CUBE_EASY_TABLE]
        assert got == want
        info["cells"] = sum(len(r) for r in want)


def _fuzz_name(rng):
    first = rng.choice("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
    rest = "".join(rng.choice("abcdefghijklmnopqrstuvwxyz0123456789_") for _ in range(rng.randint(0, 20)))
    return first + rest


def _fuzz_float(rng):
    kind = rng.random()
    if kind < 0.4:
        return rng.uniform(-1.0, 1.0)
    if kind < 0.6:
        return rng.uniform(-math.pi, math.pi)
    if kind < 0.8:
        return math.ldexp(rng.uniform(-1.0, 1.0), rng.randint(-1074, 1023))
    if kind < 0.9:
        return float(rng.randint(-10**6, 10**6))
    return rng.choice([0.0, -0.0, 5e-324, -5e-324, 1.7976931348623157e308, 1e-7, 0.1])


def test_9_parser_round_trip(criterion):
    with criterion(9, "format-then-parse identity on 10,000 actions plus the literal strings") as info:
        rng = random.Random(99)
        for _ in range(10_000):
            name = _fuzz_name(rng)
            if rng.random() < 0.3:
                a = Action.pick(name)
            else:
                a = Action.place(name, _fuzz_float(rng), _fuzz_float(rng), _fuzz_float(rng))
            back = parse_action(format_action(a))
            assert back == a
            if a.kind == "place":
                for u, v in ((a.x, back.x), (a.y, back.y), (a.theta, back.theta)):
                    assert math.copysign(1.0, u) == math.copysign(1.0, v)
        assert parse_action("place(['red_box'], {'x': 0.51, 'y': 0.02, 'theta': 0.00})") == Action(
            "place", "red_box", 0.51, 0.02, 0.0
        )
        assert parse_action("pick(['apple'], {})") == Action("pick", "apple")
        info["fuzzed"] = 10_000
