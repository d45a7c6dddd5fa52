"""Release gates for the planner, one test per gate.

Run with -v to get the per-gate verdict lines; each test also prints one
line of measured evidence (visible with -rA, or on failure). Gates 4-9
replay the seeded scenario presets at desk scale and assert the behavior
the presets were designed to show, at fixed tolerances.
"""

import itertools
import time
from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest

from decoyplan.cost import CostWeights
from decoyplan.errors import SizeLimitExceeded
from decoyplan.harness import RunSpec, compute_metrics, run, run_trials
from decoyplan.horizon import generate_candidates
from decoyplan.metrics import approach_rate
from decoyplan.planner_multi import (
    TeamConfig,
    assemble_cost_matrix,
    enumerate_joint,
)
from decoyplan.planner_single import SingleAgentConfig
from decoyplan.policy import build_joint_pmf, build_pmf, sample
from decoyplan.cost import GoalLayout
from decoyplan.scenarios import build, goal_position
from decoyplan.world import Action, Cell, GridWorld, OutOfBounds, apply


class _Log:
    def __init__(self, states):
        self.states = states


@lru_cache(maxsize=None)
def preset_results(name, trials, seed, scale):
    scenario = build(name, scale=scale)
    spec = RunSpec(preset=name, trials=trials, seed=seed, scale=scale,
                   parallel=1, overrides={})
    results = run_trials(scenario, spec)
    return scenario, results, compute_metrics(scenario, results)


def verdict(gate, ok, detail):
    print(f"[gate {gate:02d}] {'PASS' if ok else 'FAIL'}: {detail}")


# ---------------------------------------------------------------------------


def test_gate_01_action_distributions():
    started = time.perf_counter()
    rng = np.random.default_rng(2026)
    worst_norm = worst_shift = worst_uniform = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 65))
        costs = rng.uniform(-100.0, 100.0, n)
        if rng.random() < 0.33:
            k = int(rng.integers(1, n))
            costs[rng.choice(n, size=k, replace=False)] = np.inf
        lam = float(rng.uniform(0.1, 2.0))
        p = build_pmf(costs, lam).probabilities

        worst_norm = max(worst_norm, abs(p.sum() - 1.0))

        finite_min = costs[np.isfinite(costs)].min()
        shifted = build_pmf(costs - finite_min, lam).probabilities
        worst_shift = max(worst_shift, float(np.max(np.abs(p - shifted))))

        finite = np.isfinite(costs)
        assert np.all(p[~finite] == 0.0)
        order = np.argsort(costs[finite])
        ranked = p[finite][order]
        assert np.all(np.diff(ranked) < 0.0), "cheaper choices must win mass"

        flat = build_pmf(costs, 1e-12).probabilities
        worst_uniform = max(
            worst_uniform,
            float(np.max(np.abs(flat[finite] - 1.0 / finite.sum()))),
        )
    elapsed = time.perf_counter() - started
    ok = worst_norm < 1e-12 and worst_shift < 1e-12 and worst_uniform < 1e-6 and elapsed < 1.0
    verdict(1, ok, f"1000 vectors: |sum-1|<={worst_norm:.1e}, "
                   f"shift dev<={worst_shift:.1e}, uniform dev<={worst_uniform:.1e}, "
                   f"{elapsed:.2f}s")
    assert worst_norm < 1e-12
    assert worst_shift < 1e-12
    assert worst_uniform < 1e-6
    assert elapsed < 1.0


def test_gate_02_candidate_counts():
    started = time.perf_counter()
    world = GridWorld(9, 9, boundary_margin=0)

    def brute_count(start, k):
        n = 0
        for seq in itertools.product(tuple(Action), repeat=k):
            s = start
            try:
                for a in seq:
                    s = apply(world, s, a)
            except OutOfBounds:
                continue
            n += 1
        return n

    center = Cell(4, 4)
    for k, expect in ((1, 4), (2, 16), (3, 64)):
        assert len(generate_candidates(world, center, k)) == expect
    checked = 0
    for start in (Cell(0, 0), Cell(0, 4), Cell(1, 1), Cell(8, 8), Cell(4, 0)):
        for k in (1, 2, 3):
            assert len(generate_candidates(world, start, k)) == brute_count(start, k)
            checked += 1
    elapsed = time.perf_counter() - started
    ok = elapsed < 1.0
    verdict(2, ok, f"interior 4/16/64; {checked} boundary counts match "
                   f"brute force; {elapsed:.2f}s")
    assert elapsed < 1.0


def test_gate_03_separable_factorization():
    world = GridWorld(7, 7, boundary_margin=0)
    agents = [
        SingleAgentConfig(start=Cell(2, 2), layout=GoalLayout(true_goal=Cell(6, 2)),
                          horizon=1, rationality=0.7, weights=CostWeights(w1=1.0, w2=0.0)),
        SingleAgentConfig(start=Cell(4, 4), layout=GoalLayout(true_goal=Cell(0, 4)),
                          horizon=1, rationality=1.3, weights=CostWeights(w1=1.0, w2=0.0)),
    ]
    team = TeamConfig(agents=agents)
    positions = [a.start for a in agents]
    sets = [generate_candidates(world, p, 1) for p in positions]
    joints = enumerate_joint(sets)
    matrix = assemble_cost_matrix(team, world, 0, positions, joints)
    joint_p = build_joint_pmf(matrix, [0.7, 1.3]).probabilities

    pmfs = [build_pmf(matrix[:: len(sets[1]), 0], 0.7),
            build_pmf(matrix[: len(sets[1]), 1], 1.3)]
    outer = np.outer(pmfs[0].probabilities, pmfs[1].probabilities).ravel()
    factor_dev = float(np.max(np.abs(joint_p - outer)))

    rng = np.random.default_rng(505)
    draws = 10_000
    counts = np.zeros((2, 4))
    for _ in range(draws):
        for a in range(2):
            counts[a, sample(pmfs[a], rng)] += 1
    freq = counts / draws
    grid = joint_p.reshape(len(sets[0]), len(sets[1]))
    marginals = np.stack([grid.sum(axis=1), grid.sum(axis=0)])
    sample_dev = float(np.max(np.abs(freq - marginals)))

    ok = factor_dev < 1e-12 and sample_dev < 0.02
    verdict(3, ok, f"outer-product dev={factor_dev:.1e}; per-agent sampling "
                   f"dev={sample_dev:.4f} over {draws} draws")
    assert factor_dev < 1e-12
    assert sample_dev < 0.02


def test_gate_04_exaggeration_schedules():
    started = time.perf_counter()
    variants = ("ExaggerationHardSwitch", "ExaggerationRampUp", "ExaggerationRampDown")
    stats = {}
    for name in variants:
        scenario, results, metrics = preset_results(name, 100, 0, 5)
        decoy = Cell(*scenario.metric_context["false_goals"][0])
        goal = Cell(*scenario.metric_context["true_goal"])
        early = []
        for r in results:
            states = [Cell(*p) for p in r.states[0]]
            w = (0, max(2, len(states) // 4))
            log = _Log(states)
            early.append(approach_rate(log, decoy, window=w)
                         - approach_rate(log, goal, window=w))
        stats[name] = {
            "reached": metrics["fraction_reached"][0],
            "frac_neg": metrics["cal"]["fraction_decoy_biased"],
            "mean": metrics["cal"]["mean"],
            "win_mean": metrics["cal"]["window_mean"],
            "win_frac": metrics["cal"]["window_fraction_decoy_biased"],
            "early": float(np.mean(early)),
        }
    elapsed = time.perf_counter() - started
    up, down = stats[variants[1]], stats[variants[2]]
    min_frac_neg = min(s["frac_neg"] for s in stats.values())
    ok = (all(s["reached"] == 1.0 for s in stats.values())
          and min_frac_neg >= 0.95
          and down["early"] > up["early"]
          and elapsed < 30.0)
    verdict(4, ok, "; ".join(
        f"{n}: reached={s['reached']:.2f} lean_mean={s['mean']:+.3f} "
        f"frac_decoy_biased={s['frac_neg']:.2f} "
        f"(deception-window lean={s['win_mean']:+.3f}, frac={s['win_frac']:.2f}) "
        f"early_decoy_approach={s['early']:+.4f}"
        for n, s in stats.items()) + f"; {elapsed:.1f}s")
    for name in variants:
        assert stats[name]["reached"] == 1.0, name
    assert down["early"] > up["early"], (down["early"], up["early"])
    assert elapsed < 30.0
    # Full-trajectory angular lean is dominated by the post-deception
    # approach leg, so this clause does not hold under these semantics;
    # the window statistics above carry the decoy-bias evidence.
    assert min_frac_neg >= 0.95, (
        f"full-trajectory decoy-biased fraction {min_frac_neg:.2f} < 0.95"
    )


def test_gate_05_ambiguity_bisector_tracking():
    started = time.perf_counter()
    scenario, results, metrics = preset_results("AmbiguityHardSwitch", 100, 0, 5)
    mid_gap = metrics["ambiguity"]["window_mean_abs_gap"]

    greedy_cfg = replace(scenario.config, weights=CostWeights(w1=4.0, w2=0.0),
                         rationality=100.0)
    greedy = replace(scenario, config=greedy_cfg)
    spec = RunSpec(preset="AmbiguityHardSwitch", trials=100, seed=0, scale=5,
                   parallel=1, overrides={})
    greedy_metrics = compute_metrics(greedy, run_trials(greedy, spec))
    greedy_gap = greedy_metrics["ambiguity"]["window_mean_abs_gap"]

    elapsed = time.perf_counter() - started
    ratio = mid_gap / greedy_gap
    ok = ratio < 0.5 and elapsed < 30.0
    verdict(5, ok, f"mid-phase |d_decoy - d_goal|: deceptive={mid_gap:.3f} "
                   f"greedy={greedy_gap:.3f} ratio={ratio:.4f}; {elapsed:.1f}s")
    assert ratio < 0.5
    assert elapsed < 30.0


def test_gate_06_obstacle_safety():
    started = time.perf_counter()
    scenario, results, metrics = preset_results("ObstacleExaggeration", 500, 0, 5)
    elapsed = time.perf_counter() - started
    visits = metrics["heatmap"]["obstacle_visits"]
    ok = visits == 0 and elapsed < 60.0
    verdict(6, ok, f"500 trials, {metrics['heatmap']['total_visits']} visited "
                   f"cells, {visits} on obstacles, reached="
                   f"{metrics['fraction_reached'][0]:.2f}; {elapsed:.1f}s")
    assert visits == 0
    assert elapsed < 60.0


def test_gate_07_moving_decoy_tracking():
    full = build("MovingFalseGoalFast", scale=1)
    layout = full.config.layout
    track = layout.track
    assert track.velocity == (0.0, -2.0)
    exact = all(
        layout(t).false_goals[0] == goal_position(track, t) for t in range(400)
    )
    # Independent reconstruction: straight-line drift, rounded, clamped.
    drifted = all(
        layout(t).false_goals[0]
        == Cell(track.origin.x, max(0, round(track.origin.y - 2.0 * t)))
        for t in range(180)
    )

    scenario, results, metrics = preset_results("MovingFalseGoalFast", 100, 0, 5)
    goal = scenario.config.layout(0).true_goal
    finals = [Cell(*r.states[0][-1]) for r in results]
    n_at_goal = sum(f == goal for f in finals)
    n_reached = sum(bool(r.reached[0]) for r in results)

    ok = exact and drifted and n_at_goal == 100 and n_reached == 100
    verdict(7, ok, f"decoy position exact over 400 steps (drift check "
                   f"{drifted}); {n_reached}/100 trials end on the static "
                   f"true goal")
    assert exact
    assert drifted
    assert n_reached == 100
    assert n_at_goal == 100


def test_gate_08_budget_compliance_and_deviation():
    rows = []
    asym = {}
    for case in "ABCD":
        name = f"BudgetTeam{case}"
        scenario, results, metrics = preset_results(name, 100, 0, 5)
        b = metrics["budget"]
        dev = metrics["deviation"]["mean_area"]
        rows.append(f"{case}: viol={b['violations']} "
                    f"consumed<={b['max_consumed']:.0f}/{b['total']:.0f} "
                    f"slack<={b['max_used']:.0f}/{b['slack_cap']:.0f} "
                    f"dev={dev[0]:.1f}/{dev[1]:.1f}")
        assert metrics["trials_ok"] == 100, name
        if scenario.config.budget.rates == (1.0, 4.0):
            asym[case] = dev
    ok = all("viol=0" in r for r in rows) and all(
        d[0] > d[1] for d in asym.values()
    )
    verdict(8, ok, "; ".join(rows) + "; cheap agent deviates more in "
            + ",".join(sorted(asym)))
    for case in "ABCD":
        name = f"BudgetTeam{case}"
        _, _, metrics = preset_results(name, 100, 0, 5)
        b = metrics["budget"]
        assert b["violations"] == 0, name
        assert b["max_consumed"] <= b["total"] + 1e-9, name
        assert b["max_used"] <= b["slack_cap"] + 1e-9, name
    assert set(asym) == {"A", "D"}
    for case, dev in asym.items():
        assert dev[0] > dev[1], (case, dev)


def test_gate_09_role_split():
    stats = {}
    for name in ("VolleyballUp", "VolleyballDown"):
        scenario, results, metrics = preset_results(name, 300, 0, 1)
        stats[name] = metrics["splits"]
    up, down = stats["VolleyballUp"], stats["VolleyballDown"]
    ok = (min(s["fraction_target_split"] for s in stats.values()) >= 0.70
          and max(s["mean_final_split_penalty"] for s in stats.values()) < 6.0
          and abs(up["mean_final_sf"] - down["mean_final_sf"]) <= 0.3
          and abs(up["mean_final_st"] - down["mean_final_st"]) <= 0.3)
    verdict(9, ok, "; ".join(
        f"{n}: 3-1 split in {s['fraction_target_split']:.2f} of 300 rollouts, "
        f"mean sides {s['mean_final_sf']:.2f}/{s['mean_final_st']:.2f}, "
        f"penalty {s['mean_final_split_penalty']:.2f}"
        for n, s in stats.items()))
    for s in stats.values():
        assert s["fraction_target_split"] >= 0.70
        assert s["mean_final_split_penalty"] < 6.0
    assert abs(up["mean_final_sf"] - down["mean_final_sf"]) <= 0.3
    assert abs(up["mean_final_st"] - down["mean_final_st"]) <= 0.3


def test_gate_10_byte_determinism(tmp_path):
    def spec(name, workers):
        return RunSpec(preset="ExaggerationHardSwitch", trials=3, seed=11,
                       scale=25, output_dir=str(tmp_path / name),
                       parallel=workers, overrides={})

    runs = [run(spec("a", 1)), run(spec("b", 1)), run(spec("c", 2))]
    assert all(r.exit_code == 0 for r in runs)
    identical = True
    for fname in ("trajectories.csv", "heatmap.csv", "heatmap.pgm"):
        ref = (runs[0].output_dir / fname).read_bytes()
        for other in runs[1:]:
            identical &= (other.output_dir / fname).read_bytes() == ref
    verdict(10, identical, "trajectories.csv, heatmap.csv, heatmap.pgm "
                           "byte-identical across reruns and worker counts")
    assert identical


def test_gate_11_joint_growth_and_cap():
    world = GridWorld(9, 9, boundary_margin=0)
    shallow = [generate_candidates(world, Cell(4, 4), 1) for _ in range(2)]
    deep = [generate_candidates(world, Cell(4, 4), 3) for _ in range(2)]
    n_shallow = len(enumerate_joint(shallow))
    n_deep = len(enumerate_joint(deep, cap=4096))
    capped = False
    try:
        enumerate_joint(deep, cap=4095)
    except SizeLimitExceeded:
        capped = True
    ok = n_shallow == 16 and n_deep == 4096 and capped
    verdict(11, ok, f"joint counts {n_shallow}/{n_deep} match 4^K products; "
                    f"cap 4095 rejects, 4096 admits")
    assert n_shallow == 16
    assert n_deep == 4096
    assert capped
