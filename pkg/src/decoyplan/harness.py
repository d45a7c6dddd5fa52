"""Seeded Monte-Carlo driver.

Runs independent trials of a built scenario, each on its own child
generator split from the master seed, merges results in trial order, and
writes the requested artifacts atomically. Output bytes depend only on the
run spec, never on the parallelism degree: trial k's generator is
Philox(SeedSequence(seed, spawn_key=(k,))) whether it runs inline or in a
worker process, and merging is ordered reduction, not interleaved
accumulation.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import NoFeasibleJoint, ParseError, StepCapExceeded
from .metrics import (
    accumulate_heatmap,
    ambiguity_trace,
    cal_report,
    deviation_area,
    split_counts,
    split_penalty,
)
from .planner_multi import TeamConfig, plan_team
from .planner_single import SingleAgentConfig, TrajectoryLog, plan_episode
from .scenarios import Scenario, build
from .world import Cell

SCHEMA_VERSION = 1
EMIT_TOKENS = ("trajectories", "heatmap", "metrics", "summary")
_OVERRIDE_KEYS = ("lambda", "horizon", "execute_steps", "max_steps")
_TOP_KEYS = {
    "schema", "preset", "trials", "seed", "scale", "output_dir",
    "emit", "parallel", "fail_tolerance", "overrides",
}


@dataclass
class RunSpec:
    """Everything that determines a run's output bytes (plus wall clock)."""

    preset: str
    trials: int
    seed: int
    scale: int = 1
    output_dir: str | None = None
    emit: frozenset = frozenset(EMIT_TOKENS)
    parallel: int | None = None
    fail_tolerance: float = 0.0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ParseError("trials must be >= 1", field="trials")
        if self.seed < 0:
            raise ParseError("seed must be a non-negative integer", field="seed")
        if self.scale < 1:
            raise ParseError("scale must be >= 1", field="scale")
        if not 0.0 <= self.fail_tolerance <= 1.0:
            raise ParseError(
                "fail_tolerance must lie in [0, 1]", field="fail_tolerance"
            )
        bad = set(self.emit) - set(EMIT_TOKENS)
        if bad:
            raise ParseError(f"unknown emit tokens {sorted(bad)}", field="emit")
        for key in self.overrides:
            if key not in _OVERRIDE_KEYS:
                raise ParseError(f"unknown override key {key!r}", field=key)


def load_config(path: str | Path) -> RunSpec:
    """Parse a JSON run config with a strict schema: unknown keys are errors."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParseError(f"cannot read config file: {e}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(
            f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e
    if not isinstance(raw, dict):
        raise ParseError("config root must be a JSON object")
    for key in raw:
        if key not in _TOP_KEYS:
            raise ParseError(f"unknown key {key!r}", field=key)
    if raw.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ParseError(
            f"unsupported schema version {raw.get('schema')!r}", field="schema"
        )
    for required in ("preset", "trials", "seed"):
        if required not in raw:
            raise ParseError(f"missing required key {required!r}", field=required)
    overrides = raw.get("overrides", {})
    if not isinstance(overrides, dict):
        raise ParseError("overrides must be an object", field="overrides")
    return RunSpec(
        preset=str(raw["preset"]),
        trials=int(raw["trials"]),
        seed=int(raw["seed"]),
        scale=int(raw.get("scale", 1)),
        output_dir=raw.get("output_dir"),
        emit=frozenset(raw.get("emit", EMIT_TOKENS)),
        parallel=raw.get("parallel"),
        fail_tolerance=float(raw.get("fail_tolerance", 0.0)),
        overrides=dict(overrides),
    )


def apply_overrides(scenario: Scenario, overrides: dict) -> Scenario:
    """Return a scenario with rationality/horizon/execution overrides applied."""
    if not overrides:
        return scenario
    for key in overrides:
        if key not in _OVERRIDE_KEYS:
            raise ParseError(f"unknown override key {key!r}", field=key)

    def patch_agent(cfg: SingleAgentConfig) -> SingleAgentConfig:
        kwargs = {}
        if "lambda" in overrides:
            kwargs["rationality"] = float(overrides["lambda"])
        if "horizon" in overrides:
            kwargs["horizon"] = int(overrides["horizon"])
        if "execute_steps" in overrides:
            kwargs["execute_steps"] = int(overrides["execute_steps"])
        return replace(cfg, **kwargs) if kwargs else cfg

    config = scenario.config
    if isinstance(config, SingleAgentConfig):
        config = patch_agent(config)
        if "max_steps" in overrides:
            config = replace(config, max_steps=int(overrides["max_steps"]))
    else:
        agents = [patch_agent(a) for a in config.agents]
        kwargs = {"agents": agents}
        if "lambda" in overrides and config.lambda_vec is not None:
            kwargs["lambda_vec"] = (float(overrides["lambda"]),) * len(config.lambda_vec)
        if "max_steps" in overrides:
            kwargs["max_steps"] = int(overrides["max_steps"])
        config = replace(config, **kwargs)
    return replace(scenario, config=config)


@dataclass
class TrialResult:
    """Picklable outcome of one trial."""

    index: int
    status: str
    states: list
    reached: list
    budget_trace: list = field(default_factory=list)


def trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))
    )


def run_trial(scenario: Scenario, index: int, seed: int) -> TrialResult:
    rng = trial_rng(seed, index)
    config = scenario.config
    if isinstance(config, SingleAgentConfig):
        try:
            log = plan_episode(config, scenario.world, rng)
            status = "ok"
        except StepCapExceeded as e:
            log = e.log if e.log is not None else TrajectoryLog(states=[])
            status = "step_cap"
        return TrialResult(
            index=index,
            status=status,
            states=[[tuple(s) for s in log.states]],
            reached=[log.reached_goal],
        )
    try:
        run = plan_team(config, scenario.world, rng)
        status = "ok"
    except StepCapExceeded as e:
        run = e.run
        status = "step_cap"
    except NoFeasibleJoint as e:
        run = e.run
        status = "no_feasible"
    logs = run.trajectories if run is not None else []
    return TrialResult(
        index=index,
        status=status,
        states=[[tuple(s) for s in log.states] for log in logs],
        reached=[log.reached_goal for log in logs],
        budget_trace=list(run.budget_trace) if run is not None else [],
    )


_WORKER_SCENARIO: Scenario | None = None
_WORKER_SEED: int | None = None


def _init_worker(preset: str, scale: int, overrides: dict, seed: int) -> None:
    global _WORKER_SCENARIO, _WORKER_SEED
    _WORKER_SCENARIO = apply_overrides(build(preset, scale), overrides)
    _WORKER_SEED = seed


def _run_indexed(index: int) -> TrialResult:
    return run_trial(_WORKER_SCENARIO, index, _WORKER_SEED)


def run_trials(scenario: Scenario, spec: RunSpec) -> list[TrialResult]:
    """Execute all trials, inline or in worker processes, in trial order."""
    workers = spec.parallel if spec.parallel is not None else (os.cpu_count() or 1)
    indices = range(spec.trials)
    if workers <= 1:
        return [run_trial(scenario, i, spec.seed) for i in indices]
    with ProcessPoolExecutor(
        max_workers=workers,
        initializer=_init_worker,
        initargs=(spec.preset, spec.scale, spec.overrides, spec.seed),
    ) as pool:
        return list(pool.map(_run_indexed, indices, chunksize=8))


def _logs_per_agent(results: list[TrialResult]) -> list[list[TrajectoryLog]]:
    if not results:
        return []
    n_agents = len(results[0].states)
    logs = [[] for _ in range(n_agents)]
    for r in results:
        for a in range(n_agents):
            logs[a].append(
                TrajectoryLog(
                    states=[Cell(*s) for s in r.states[a]],
                    reached_goal=bool(r.reached[a]),
                )
            )
    return logs


def compute_metrics(scenario: Scenario, results: list[TrialResult]) -> dict:
    """Aggregate the scenario's declared metrics over successful trials."""
    ok = [r for r in results if r.status == "ok"]
    per_agent = _logs_per_agent(ok)
    ctx = scenario.metric_context
    out: dict = {
        "trials_ok": len(ok),
        "trials_failed": len(results) - len(ok),
        "fraction_reached": [
            float(np.mean([log.reached_goal for log in agent_logs]))
            for agent_logs in per_agent
        ],
    }
    if not ok:
        return out
    all_logs = [log for agent_logs in per_agent for log in agent_logs]
    world = scenario.world
    heat = accumulate_heatmap(all_logs, world)
    plan = scenario.metric_plan

    if "heatmap" in plan:
        obstacle_visits = (
            int(heat.counts[world.obstacle_mask].sum()) if world.obstacles else 0
        )
        out["heatmap"] = {
            "total_visits": heat.total(),
            "obstacle_visits": obstacle_visits,
        }
    if "cal" in plan:
        goal = Cell(*ctx["true_goal"])
        decoy = Cell(*ctx["false_goals"][0])
        full = cal_report(per_agent[0], goal, decoy)
        out["cal"] = {
            "mean": full.mean,
            "fraction_decoy_biased": full.fraction_decoy_biased,
            "count": len(full.per_trial),
            "modes": full.modes,
        }
        window = ctx.get("window")
        if window:
            win = cal_report(per_agent[0], goal, decoy, window=tuple(window))
            out["cal"]["window_mean"] = win.mean
            out["cal"]["window_fraction_decoy_biased"] = win.fraction_decoy_biased
    if "ambiguity" in plan:
        goal = Cell(*ctx["true_goal"])
        decoy = Cell(*ctx["false_goals"][0])
        lo, hi = ctx["window"]
        window_means = []
        full_means = []
        for log in per_agent[0]:
            trace = ambiguity_trace(log, goal, decoy)
            full_means.append(float(np.mean(trace)))
            segment = trace[lo : min(hi + 1, len(trace))]
            if segment:
                window_means.append(float(np.mean(segment)))
        out["ambiguity"] = {
            "mean_abs_gap": float(np.mean(full_means)),
            "window_mean_abs_gap": float(np.mean(window_means)) if window_means else None,
        }
    if "budget" in plan:
        total = ctx["budget_total"]
        cap = ctx["slack_cap"]
        max_consumed = max_used = 0.0
        violations = 0
        final_consumed = []
        final_used = []
        for r in ok:
            for _, consumed, used in r.budget_trace:
                max_consumed = max(max_consumed, consumed)
                max_used = max(max_used, used)
                if consumed > total + 1e-9 or used > cap + 1e-9:
                    violations += 1
            if r.budget_trace:
                final_consumed.append(r.budget_trace[-1][1])
                final_used.append(r.budget_trace[-1][2])
        out["budget"] = {
            "total": total,
            "slack_cap": cap,
            "max_consumed": max_consumed,
            "max_used": max_used,
            "violations": violations,
            "mean_final_consumed": float(np.mean(final_consumed)) if final_consumed else None,
            "mean_final_used": float(np.mean(final_used)) if final_used else None,
        }
    if "deviation" in plan:
        starts = ctx.get("starts") or [ctx["start"]] * len(per_agent)
        goals = ctx.get("true_goals") or [ctx["true_goal"]] * len(per_agent)
        out["deviation"] = {
            "mean_area": [
                float(np.mean([
                    deviation_area(log, Cell(*starts[a]), Cell(*goals[a]))
                    for log in per_agent[a]
                ]))
                for a in range(len(per_agent))
            ]
        }
    if "splits" in plan:
        runners = ctx["runners"]
        x_mid = ctx["x_mid"]
        sf_final = []
        st_final = []
        on_target = 0
        penalties = []
        tf, tt = ctx["targets"]
        for r in ok:
            last = [Cell(*r.states[a][-1]) for a in range(len(r.states))]
            (sf, st), = split_counts([last], runners, x_mid, ctx["side_false"], ctx["side_true"])
            sf_final.append(sf)
            st_final.append(st)
            if sf == tf and st == tt:
                on_target += 1
            penalties.append(split_penalty(sf, st, 12.0, 12.0, tf, tt))
        out["splits"] = {
            "mean_final_sf": float(np.mean(sf_final)),
            "mean_final_st": float(np.mean(st_final)),
            "fraction_target_split": on_target / len(ok),
            "mean_final_split_penalty": float(np.mean(penalties)),
        }
    return out


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_trajectories_csv(path: Path, results: list[TrialResult]) -> None:
    lines = ["trial,agent,t,x,y"]
    for r in results:
        if r.status != "ok":
            continue
        for agent, states in enumerate(r.states):
            for t, (x, y) in enumerate(states):
                lines.append(f"{r.index},{agent},{t},{x},{y}")
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))


def write_heatmap_csv(path: Path, counts: np.ndarray) -> None:
    lines = [",".join(str(int(v)) for v in row) for row in counts]
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))


def write_heatmap_pgm(path: Path, counts: np.ndarray) -> None:
    """16-bit binary PGM; row 0 of the file is grid row y=0."""
    h, w = counts.shape
    clipped = np.clip(counts, 0, 65535).astype(">u2")
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    _atomic_write_bytes(path, header + clipped.tobytes(order="C"))


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("ascii")


@dataclass
class RunOutcome:
    exit_code: int
    output_dir: Path | None
    metrics: dict | None = None
    error: dict | None = None


def run(spec: RunSpec) -> RunOutcome:
    """Execute a run spec end to end and write the requested artifacts.

    Nothing is written when the scenario cannot be built (config errors
    surface before the output directory is created).
    """
    scenario = apply_overrides(build(spec.preset, spec.scale), spec.overrides)
    out_dir = Path(spec.output_dir) if spec.output_dir else Path("runs") / spec.preset
    started = time.perf_counter()
    results = run_trials(scenario, spec)
    elapsed = time.perf_counter() - started

    n_no_feasible = sum(1 for r in results if r.status == "no_feasible")
    n_step_cap = sum(1 for r in results if r.status == "step_cap")
    failed_fraction = (n_no_feasible + n_step_cap) / spec.trials
    out_dir.mkdir(parents=True, exist_ok=True)

    if n_no_feasible > 0 or failed_fraction > spec.fail_tolerance:
        error = {
            "error": "trial_failures",
            "no_feasible": n_no_feasible,
            "step_cap": n_step_cap,
            "failed_fraction": failed_fraction,
            "tolerance": spec.fail_tolerance,
            "trials": [
                {"trial": r.index, "status": r.status}
                for r in results
                if r.status != "ok"
            ],
        }
        _atomic_write_bytes(out_dir / "error.json", _json_bytes(error))
        return RunOutcome(exit_code=3, output_dir=out_dir, error=error)

    ok = [r for r in results if r.status == "ok"]
    per_agent = _logs_per_agent(ok)
    all_logs = [log for agent_logs in per_agent for log in agent_logs]
    heat = accumulate_heatmap(all_logs, scenario.world)
    metrics = compute_metrics(scenario, results)

    if "trajectories" in spec.emit:
        write_trajectories_csv(out_dir / "trajectories.csv", results)
    if "heatmap" in spec.emit:
        write_heatmap_csv(out_dir / "heatmap.csv", heat.counts)
        write_heatmap_pgm(out_dir / "heatmap.pgm", heat.counts)
    if "metrics" in spec.emit:
        _atomic_write_bytes(out_dir / "metrics.json", _json_bytes(metrics))
    if "summary" in spec.emit:
        summary = {
            "schema": SCHEMA_VERSION,
            "spec": {
                "preset": spec.preset,
                "trials": spec.trials,
                "seed": spec.seed,
                "scale": spec.scale,
                "emit": sorted(spec.emit),
                "parallel": spec.parallel,
                "fail_tolerance": spec.fail_tolerance,
                "overrides": spec.overrides,
            },
            "scenario_notes": scenario.notes,
            "per_trial": [
                {"trial": r.index, "status": r.status, "reached": r.reached}
                for r in results
            ],
            "metrics": metrics,
            "wall_clock_seconds": elapsed,
        }
        _atomic_write_bytes(out_dir / "summary.json", _json_bytes(summary))
    return RunOutcome(exit_code=0, output_dir=out_dir, metrics=metrics)
