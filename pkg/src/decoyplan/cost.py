"""Cost terms, schedules, and weighted composition for candidate scoring.

Costs follow the convention that approaching a target lowers cost: the goal
term is the negated clamped distance drop toward the true goal, and the
deception term is either the negated drop toward a false goal (exaggeration)
or the absolute distance imbalance between false and true goal (ambiguity).
Optional terms penalize predicted deadline overrun and heading changes.

Time-varying behavior comes from a trapezoidal activation schedule u(t) in
[0, 1] that trades the goal gain against the deception gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import OutOfRange
from .horizon import ActionSequence, CandidateSet
from .world import Cell, GridWorld, euclidean, manhattan

DECEPTION_MODES = ("exaggeration", "ambiguity")
AGGREGATION_MODES = ("per_step", "terminal")


@dataclass(frozen=True)
class CostWeights:
    """Gains for the four cost terms.

    ``w1`` scales goal progress, ``w2`` the deception term, ``w3``/``w4``
    the optional deadline and smoothness penalties, which are active only
    when their binary flags ``delta3``/``delta4`` are set.
    """

    w1: float
    w2: float
    w3: float = 0.0
    w4: float = 0.0
    delta3: int = 0
    delta4: int = 0

    def __post_init__(self):
        if min(self.w1, self.w2, self.w3, self.w4) < 0:
            raise ValueError("weights must be non-negative")
        if self.delta3 not in (0, 1) or self.delta4 not in (0, 1):
            raise ValueError("delta flags must be 0 or 1")


@dataclass(frozen=True)
class PiecewiseSchedule:
    """Trapezoidal activation window: off, ramp up, hold, ramp down, off.

    ``switch_on`` is the activation time, ``window`` the total active length,
    and the two ramp durations shape the edges. Zero ramps give hard switches.
    """

    switch_on: float
    window: float
    ramp_up: float = 0.0
    ramp_down: float = 0.0

    def __post_init__(self):
        if self.window < 0 or self.ramp_up < 0 or self.ramp_down < 0:
            raise ValueError("schedule durations must be non-negative")
        if self.ramp_up + self.ramp_down > self.window:
            raise ValueError("ramps do not fit inside the activation window")


@dataclass(frozen=True)
class TriangularRamp:
    """Weight that rises linearly from w_min to w_max at 1/2 and back."""

    w_min: float
    w_max: float


@dataclass(frozen=True)
class GoalLayout:
    """True goal, zero or more false goals, and an optional time budget."""

    true_goal: Cell
    false_goals: tuple[Cell, ...] = ()
    time_budget: float | None = None
    false_goal_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        goals = tuple(Cell(int(x), int(y)) for x, y in self.false_goals)
        object.__setattr__(self, "false_goals", goals)
        object.__setattr__(self, "true_goal", Cell(int(self.true_goal[0]), int(self.true_goal[1])))
        if self.true_goal in goals:
            raise ValueError("true goal may not also be a false goal")
        if self.false_goal_weights is not None and len(self.false_goal_weights) != len(goals):
            raise ValueError("per-goal weights must match the number of false goals")


def progress_drop(d_before: float, d_after: float) -> float:
    """Clamped one-step distance drop, never negative."""
    return max(0.0, d_before - d_after)


def c_goal(goal: Cell, s: Cell, s_next: Cell) -> float:
    """Negated clamped progress toward the true goal."""
    return -progress_drop(euclidean(s, goal), euclidean(s_next, goal))


def c_decep(false_goal: Cell, s: Cell, s_next: Cell) -> float:
    """Negated clamped progress toward a false goal."""
    return -progress_drop(euclidean(s, false_goal), euclidean(s_next, false_goal))


def c_amb(goal: Cell, false_goal: Cell, s_next: Cell) -> float:
    """Absolute distance imbalance between false and true goal at s_next."""
    return abs(euclidean(s_next, false_goal) - euclidean(s_next, goal))


def c_time(t: float, horizon: int, budget: float, goal: Cell, s_hat: Cell) -> float:
    """Predicted deadline overrun after the candidate completes."""
    return max(0.0, t + horizon + math.ceil(euclidean(s_hat, goal)) - budget)


def c_smooth(seq: ActionSequence) -> float:
    """Number of heading changes within the sequence."""
    return float(sum(1 for i in range(1, len(seq)) if seq[i] != seq[i - 1]))


def schedule_u(sched: PiecewiseSchedule, t: float) -> float:
    """Activation level at time t, in [0, 1]."""
    s, length = sched.switch_on, sched.window
    up, down = sched.ramp_up, sched.ramp_down
    if t < s:
        return 0.0
    if up > 0 and t < s + up:
        return (t - s) / up
    if t < s + length - down:
        return 1.0
    if down > 0 and t < s + length:
        return (s + length - t) / down
    return 0.0


def exaggeration_weights(u: float, kappa0: float, alpha0: float) -> tuple[float, float]:
    """Goal and deception gains under activation level u."""
    return kappa0 * (1.0 - u), alpha0 * u


def triangular_ramp(ramp: TriangularRamp, fraction: float) -> float:
    """Evaluate the triangular weight at a depletion fraction in [0, 1]."""
    if not 0.0 <= fraction <= 1.0:
        raise OutOfRange(f"fraction {fraction} outside [0, 1]")
    return ramp.w_min + (ramp.w_max - ramp.w_min) * max(0.0, 1.0 - abs(2.0 * fraction - 1.0))


def energy_increment(rate: float, s: Cell, s_next: Cell, goal: Cell) -> float:
    """Non-optimal expenditure charged for one executed step.

    Uses the grid geodesic (Manhattan) change toward the goal, so a unit
    approach step costs max(0, rate - 1) and a retreat costs rate + 1.
    """
    return max(0.0, rate + (manhattan(s_next, goal) - manhattan(s, goal)))


@dataclass(frozen=True)
class ScheduledWeights:
    """Weight provider that trades goal gain against deception gain over time."""

    schedule: PiecewiseSchedule
    kappa0: float
    alpha0: float

    def u(self, t: float) -> float:
        return schedule_u(self.schedule, t)

    def __call__(self, t: float) -> CostWeights:
        w1, w2 = exaggeration_weights(self.u(t), self.kappa0, self.alpha0)
        return CostWeights(w1=w1, w2=w2)


WeightsLike = CostWeights | Callable[[float], CostWeights]
LayoutLike = GoalLayout | Callable[[float], GoalLayout]


def weights_at(weights: WeightsLike, t: float) -> CostWeights:
    return weights(t) if callable(weights) else weights


def layout_at(layout: LayoutLike, t: float) -> GoalLayout:
    return layout(t) if callable(layout) else layout


def _false_goal_weights(layout: GoalLayout) -> tuple[float, ...]:
    if layout.false_goal_weights is not None:
        return layout.false_goal_weights
    return (1.0,) * len(layout.false_goals)


def total_cost_single(
    weights: CostWeights,
    layout: GoalLayout,
    t: float,
    s: Cell,
    seq: ActionSequence,
    s_hat: Cell,
    world: GridWorld,
    *,
    path: Sequence[Cell] | None = None,
    deception: str = "exaggeration",
    aggregation: str = "per_step",
) -> float:
    """Weighted total cost of one candidate; +inf when it crosses an obstacle.

    ``per_step`` aggregation sums the goal and deception terms along the
    simulated path; ``terminal`` evaluates them once between the origin and
    the predicted terminal. Deadline and smoothness terms always apply once
    per candidate.
    """
    if deception not in DECEPTION_MODES:
        raise ValueError(f"unknown deception mode {deception!r}")
    if aggregation not in AGGREGATION_MODES:
        raise ValueError(f"unknown aggregation mode {aggregation!r}")
    if path is None:
        from .horizon import rollout

        s_hat, path = rollout(world, s, seq)

    for cell in path:
        if cell in world.obstacles:
            return math.inf

    goal = layout.true_goal
    total = 0.0
    chain = (s, *path)
    if weights.w1:
        if aggregation == "per_step":
            total += weights.w1 * sum(
                c_goal(goal, chain[i], chain[i + 1]) for i in range(len(path))
            )
        else:
            total += weights.w1 * c_goal(goal, s, s_hat)
    if weights.w2 and layout.false_goals:
        for fg, fw in zip(layout.false_goals, _false_goal_weights(layout)):
            if deception == "exaggeration":
                if aggregation == "per_step":
                    term = sum(c_decep(fg, chain[i], chain[i + 1]) for i in range(len(path)))
                else:
                    term = c_decep(fg, s, s_hat)
            else:
                if aggregation == "per_step":
                    term = sum(c_amb(goal, fg, cell) for cell in path)
                else:
                    term = c_amb(goal, fg, s_hat)
            total += weights.w2 * fw * term
    if weights.delta3 and weights.w3 and layout.time_budget is not None:
        total += weights.w3 * c_time(t, len(seq), layout.time_budget, goal, s_hat)
    if weights.delta4 and weights.w4:
        total += weights.w4 * c_smooth(seq)
    return total


def _chain_distances(chain: np.ndarray, target: Cell) -> np.ndarray:
    delta = chain - np.asarray(target, dtype=np.float64)
    return np.hypot(delta[..., 0], delta[..., 1])


def evaluate_candidates(
    weights: CostWeights,
    layout: GoalLayout,
    t: float,
    origin: Cell,
    cands: CandidateSet,
    world: GridWorld,
    *,
    deception: str = "exaggeration",
    aggregation: str = "per_step",
) -> np.ndarray:
    """Vectorized equivalent of total_cost_single over a candidate set."""
    if deception not in DECEPTION_MODES:
        raise ValueError(f"unknown deception mode {deception!r}")
    if aggregation not in AGGREGATION_MODES:
        raise ValueError(f"unknown aggregation mode {aggregation!r}")

    n = len(cands)
    k = cands.horizon
    paths = cands.paths_array
    start = np.broadcast_to(np.asarray(origin, dtype=np.int64), (n, 1, 2))
    chain = np.concatenate([start, paths], axis=1)

    total = np.zeros(n, dtype=np.float64)
    goal = layout.true_goal
    d_goal = None
    if weights.w1 or (weights.w2 and deception == "ambiguity" and layout.false_goals):
        d_goal = _chain_distances(chain, goal)
    if weights.w1:
        if aggregation == "per_step":
            drops = np.clip(d_goal[:, :-1] - d_goal[:, 1:], 0.0, None).sum(axis=1)
        else:
            drops = np.clip(d_goal[:, 0] - d_goal[:, -1], 0.0, None)
        total -= weights.w1 * drops
    if weights.w2 and layout.false_goals:
        for fg, fw in zip(layout.false_goals, _false_goal_weights(layout)):
            d_false = _chain_distances(chain, fg)
            if deception == "exaggeration":
                if aggregation == "per_step":
                    term = -np.clip(d_false[:, :-1] - d_false[:, 1:], 0.0, None).sum(axis=1)
                else:
                    term = -np.clip(d_false[:, 0] - d_false[:, -1], 0.0, None)
            else:
                if aggregation == "per_step":
                    term = np.abs(d_false[:, 1:] - d_goal[:, 1:]).sum(axis=1)
                else:
                    term = np.abs(d_false[:, -1] - d_goal[:, -1])
            total += weights.w2 * fw * term
    if weights.delta3 and weights.w3 and layout.time_budget is not None:
        d_term = _chain_distances(chain[:, -1, :], goal)
        overrun = np.clip(t + k + np.ceil(d_term) - layout.time_budget, 0.0, None)
        total += weights.w3 * overrun
    if weights.delta4 and weights.w4 and k > 1:
        acts = cands.actions_array
        total += weights.w4 * (acts[:, 1:] != acts[:, :-1]).sum(axis=1)

    if world.obstacles:
        hit = world.obstacle_mask[paths[:, :, 1], paths[:, :, 0]].any(axis=1)
        total[hit] = np.inf
    return total
