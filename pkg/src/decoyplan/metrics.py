"""Post-hoc trajectory analysis.

Alignment scoring, bisector traces, visit-count heatmaps, corridor split
counts, and deviation areas. All functions are pure reductions over logged
trajectories; nothing here touches the planner or the rng.

Alignment sign convention: each scored step contributes the unsigned angle
to the decoy minus the unsigned angle to the true goal, so negative means
the motion pointed more at the decoy than at the goal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import TooShort
from .planner_single import TrajectoryLog
from .world import Cell, GridWorld, euclidean


def _angle_between(ux: float, uy: float, vx: float, vy: float) -> float:
    nu = math.hypot(ux, uy)
    nv = math.hypot(vx, vy)
    dot = (ux * vx + uy * vy) / (nu * nv)
    return math.acos(min(1.0, max(-1.0, dot)))


def _scored_steps(
    states: Sequence[Cell], goal: Cell, decoy: Cell, window: tuple[int, int] | None
):
    """Yield (theta_true, theta_decoy) for each scoreable step.

    Steps with no motion, or taken while standing on the goal or decoy cell
    (target direction undefined), are skipped.
    """
    lo, hi = (0, len(states) - 1) if window is None else window
    lo = max(0, lo)
    hi = min(len(states) - 1, hi)
    for k in range(lo, hi):
        s = states[k]
        nxt = states[k + 1]
        mx, my = nxt[0] - s[0], nxt[1] - s[1]
        if mx == 0 and my == 0:
            continue
        if tuple(s) == tuple(goal) or tuple(s) == tuple(decoy):
            continue
        theta_true = _angle_between(mx, my, goal[0] - s[0], goal[1] - s[1])
        theta_decoy = _angle_between(mx, my, decoy[0] - s[0], decoy[1] - s[1])
        yield theta_true, theta_decoy


def cal(
    trajectory: TrajectoryLog,
    goal: Cell,
    decoy: Cell,
    *,
    window: tuple[int, int] | None = None,
) -> float:
    """Mean per-step angular bias toward the decoy, in radians.

    Returns mean(theta_decoy - theta_true) over scoreable steps; negative
    values mean decoy-biased motion. ``window`` restricts scoring to steps
    with index in [lo, hi). Raises TooShort when the trajectory has fewer
    than two states or no scoreable step.
    """
    states = trajectory.states
    if len(states) < 2:
        raise TooShort("alignment needs at least two states")
    diffs = [td - tt for tt, td in _scored_steps(states, goal, decoy, window)]
    if not diffs:
        raise TooShort("no scoreable steps (all motionless or on a target cell)")
    return float(np.mean(diffs))


@dataclass
class CalReport:
    """Per-trial alignment values with a two-sided summary."""

    per_trial: list[float]
    mean: float
    fraction_decoy_biased: float
    modes: dict = field(default_factory=dict)


def cal_report(
    trajectories: Sequence[TrajectoryLog],
    goal: Cell,
    decoy: Cell,
    *,
    window: tuple[int, int] | None = None,
) -> CalReport:
    """Score every trajectory that has scoreable steps; skip the rest."""
    values = []
    for traj in trajectories:
        try:
            values.append(cal(traj, goal, decoy, window=window))
        except TooShort:
            continue
    if not values:
        return CalReport(per_trial=[], mean=float("nan"), fraction_decoy_biased=0.0)
    arr = np.asarray(values)
    neg = arr[arr < 0]
    pos = arr[arr >= 0]
    modes = {
        "negative": {"count": int(neg.size), "mean": float(neg.mean()) if neg.size else None},
        "positive": {"count": int(pos.size), "mean": float(pos.mean()) if pos.size else None},
    }
    return CalReport(
        per_trial=values,
        mean=float(arr.mean()),
        fraction_decoy_biased=float((arr < 0).mean()),
        modes=modes,
    )


def approach_rate(
    trajectory: TrajectoryLog, target: Cell, window: tuple[int, int] | None = None
) -> float:
    """Mean per-step drop in Euclidean distance to ``target`` (signed)."""
    states = trajectory.states
    if len(states) < 2:
        raise TooShort("approach rate needs at least two states")
    lo, hi = (0, len(states) - 1) if window is None else window
    lo = max(0, lo)
    hi = min(len(states) - 1, hi)
    if hi <= lo:
        raise TooShort("empty scoring window")
    drops = [
        euclidean(states[k], target) - euclidean(states[k + 1], target)
        for k in range(lo, hi)
    ]
    return float(np.mean(drops))


@dataclass
class Heatmap:
    """Visit counts indexed [y, x]; totals are conserved across merges."""

    counts: np.ndarray
    trials: int

    def total(self) -> int:
        return int(self.counts.sum())


def accumulate_heatmap(
    trajectories: Sequence[TrajectoryLog], world: GridWorld
) -> Heatmap:
    """Count every logged state, repeats included."""
    counts = np.zeros((world.height, world.width), dtype=np.int64)
    for traj in trajectories:
        for s in traj.states:
            counts[s[1], s[0]] += 1
    return Heatmap(counts=counts, trials=len(trajectories))


def merge_heatmaps(maps: Sequence[Heatmap]) -> Heatmap:
    if not maps:
        raise ValueError("nothing to merge")
    counts = maps[0].counts.copy()
    trials = maps[0].trials
    for m in maps[1:]:
        counts += m.counts
        trials += m.trials
    return Heatmap(counts=counts, trials=trials)


def ambiguity_trace(trajectory: TrajectoryLog, goal: Cell, decoy: Cell) -> list[float]:
    """Per-state |d(s, decoy) - d(s, goal)|; flat traces mean bisector tracking."""
    return [
        abs(euclidean(s, decoy) - euclidean(s, goal)) for s in trajectory.states
    ]


def split_counts(
    joint_states: Sequence[Sequence[Cell]],
    runners: Sequence[int],
    x_mid: float,
    sigma_false: int,
    sigma_true: int,
) -> list[tuple[float, float]]:
    """Per-step corridor membership counts (S_false, S_true).

    A runner at x >= x_mid has side +1 (ties go to +1 by convention); the
    count for a corridor is the number of runners sharing its side.
    """
    out = []
    for per_agent in joint_states:
        sf = st = 0.0
        for i in runners:
            sigma = 1 if per_agent[i][0] >= x_mid else -1
            sf += 0.5 * (1 + sigma * sigma_false)
            st += 0.5 * (1 + sigma * sigma_true)
        out.append((sf, st))
    return out


def split_penalty(
    sf: float, st: float, gamma_false: float, gamma_true: float,
    target_false: float = 3.0, target_true: float = 1.0,
) -> float:
    return gamma_false * (sf - target_false) ** 2 + gamma_true * (st - target_true) ** 2


def _point_segment_distance(p: Cell, a: Cell, b: Cell) -> float:
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    px, py = float(p[0]), float(p[1])
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return math.hypot(px - ax, py - ay)
    u = ((px - ax) * dx + (py - ay) * dy) / seg2
    u = min(1.0, max(0.0, u))
    return math.hypot(px - (ax + u * dx), py - (ay + u * dy))


def deviation_area(trajectory: TrajectoryLog, start: Cell, goal: Cell) -> float:
    """Sum over states of the distance to the straight start-goal segment."""
    return float(
        sum(_point_segment_distance(s, start, goal) for s in trajectory.states)
    )
