"""Figure rendering for completed runs.

Reads the delimited artifacts a run wrote (trajectories.csv, heatmap.csv,
summary.json) and renders PNG figures next to them. Kept separate from the
harness so runs stay plotting-free; the CLI exposes this as the `report`
subcommand and as `run --figures`.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .planner_single import SingleAgentConfig
from .scenarios import Scenario, build


def _load_summary(run_dir: Path) -> dict | None:
    path = run_dir / "summary.json"
    if not path.exists():
        return None
    return json.loads(path.read_text())


def _scenario_from_summary(summary: dict | None) -> Scenario | None:
    if not summary:
        return None
    spec = summary.get("spec", {})
    try:
        return build(spec["preset"], int(spec.get("scale", 1)))
    except Exception:
        return None


def render_heatmap(run_dir: Path, out_dir: Path) -> Path | None:
    src = run_dir / "heatmap.csv"
    if not src.exists():
        return None
    counts = np.loadtxt(src, delimiter=",", dtype=np.int64, ndmin=2)
    fig, ax = plt.subplots(figsize=(6, 6))
    shown = np.log1p(counts)
    im = ax.imshow(shown, origin="lower", cmap="magma", interpolation="nearest")
    fig.colorbar(im, ax=ax, label="log(1 + visits)")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title("visit frequency")
    out = out_dir / "heatmap.png"
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out


def _annotate_scenario(ax, scenario: Scenario | None) -> None:
    if scenario is None:
        return
    ctx = scenario.metric_context
    config = scenario.config
    if isinstance(config, SingleAgentConfig):
        starts = [ctx.get("start")]
        goals = [ctx.get("true_goal")]
    else:
        starts = ctx.get("starts", [])
        goals = ctx.get("true_goals", [])
        if not goals and "true_goal" in ctx:
            goals = [ctx["true_goal"]]
    for s in starts:
        if s:
            ax.plot(s[0], s[1], "o", color="tab:blue", ms=8, mec="white", zorder=5)
    for g in goals:
        if g:
            ax.plot(g[0], g[1], "*", color="tab:green", ms=14, mec="black", zorder=5)
    for f in ctx.get("false_goals", []):
        ax.plot(f[0], f[1], "X", color="tab:red", ms=10, mec="black", zorder=5)
    if scenario.world.obstacles:
        ys, xs = np.nonzero(scenario.world.obstacle_mask)
        ax.scatter(xs, ys, marker="s", s=4, color="dimgray", zorder=4)


def render_trajectories(
    run_dir: Path, out_dir: Path, scenario: Scenario | None, max_trials: int = 40
) -> Path | None:
    src = run_dir / "trajectories.csv"
    if not src.exists():
        return None
    data = np.loadtxt(src, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    if data.size == 0:
        return None
    fig, ax = plt.subplots(figsize=(6, 6))
    trials = np.unique(data[:, 0])[:max_trials]
    agents = np.unique(data[:, 1])
    cmap = plt.get_cmap("tab10")
    for trial in trials:
        rows = data[data[:, 0] == trial]
        for agent in agents:
            path = rows[rows[:, 1] == agent]
            ax.plot(
                path[:, 3], path[:, 4],
                color=cmap(int(agent) % 10), alpha=0.25, lw=1,
            )
    _annotate_scenario(ax, scenario)
    if scenario is not None:
        ax.set_xlim(-0.5, scenario.world.width - 0.5)
        ax.set_ylim(-0.5, scenario.world.height - 0.5)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"trajectories ({len(trials)} of the logged trials)")
    out = out_dir / "trajectories.png"
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out


def render_run(run_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Render all figures the run's artifacts support; returns written paths."""
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir
    out.mkdir(parents=True, exist_ok=True)
    summary = _load_summary(run_dir)
    scenario = _scenario_from_summary(summary)
    written = []
    for path in (
        render_heatmap(run_dir, out),
        render_trajectories(run_dir, out, scenario),
    ):
        if path is not None:
            written.append(path)
    return written
