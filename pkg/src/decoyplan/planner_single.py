"""Receding-horizon episode planner for a single agent.

Each replan enumerates K-step candidates from the current cell, scores them
with the active weights and goal layout, samples one sequence from the
Boltzmann distribution, executes its first M actions, and repeats until the
true goal is reached or the step cap fires.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cost import (
    CostWeights,
    LayoutLike,
    WeightsLike,
    evaluate_candidates,
    layout_at,
    total_cost_single,
    weights_at,
)
from .errors import StepCapExceeded
from .horizon import (
    EXHAUSTIVE,
    ActionSequence,
    Candidate,
    CandidateSet,
    PrunePolicy,
    generate_candidates,
)
from .policy import PolicyPMF, build_pmf, sample
from .world import Cell, GridWorld, apply

# Optional per-agent cost override used by team scenarios. Receives the
# world, replan time, current cell, one candidate, and the shared replan
# context; returns a scalar cost.
CostOverride = Callable[[GridWorld, int, Cell, Candidate, dict], float]


@dataclass
class SingleAgentConfig:
    """Planning parameters for one agent."""

    start: Cell
    layout: LayoutLike
    horizon: int = 3
    execute_steps: int = 1
    rationality: float = 1.0
    weights: WeightsLike = CostWeights(w1=1.0, w2=0.0)
    prune: PrunePolicy = EXHAUSTIVE
    max_steps: int | None = None
    deception: str = "exaggeration"
    aggregation: str = "per_step"
    strict_obstacles: bool = False
    cost_override: CostOverride | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not 1 <= self.execute_steps <= self.horizon:
            raise ValueError("execute_steps must lie in [1, horizon]")
        if self.rationality <= 0:
            raise ValueError("rationality must be positive")


@dataclass
class ReplanRecord:
    """Diagnostics for one replanning event."""

    t: int
    chosen_index: int
    u: float | None
    w1: float
    w2: float
    cost: float


@dataclass
class TrajectoryLog:
    """Visited states (including the start) plus per-replan diagnostics."""

    states: list[Cell] = field(default_factory=list)
    per_step: list[ReplanRecord] = field(default_factory=list)
    reached_goal: bool = False


def default_step_cap(world: GridWorld) -> int:
    return 10 * (world.width + world.height)


def _candidates_for(
    cfg: SingleAgentConfig,
    world: GridWorld,
    t: int,
    s: Cell,
    weights: CostWeights,
    layout,
    cache: dict | None,
) -> CandidateSet:
    if cfg.prune.mode == "beam" and cfg.prune.score is None:
        # Rank prefixes by the active cost spec evaluated at each prefix.
        def prefix_cost(actions: ActionSequence, path: tuple[Cell, ...]) -> float:
            return total_cost_single(
                weights,
                layout,
                t,
                s,
                actions,
                path[-1],
                world,
                path=path,
                deception=cfg.deception,
                aggregation=cfg.aggregation,
            )

        prune = PrunePolicy(mode="beam", beam_width=cfg.prune.beam_width, score=prefix_cost)
        return generate_candidates(world, s, cfg.horizon, prune, strict_obstacles=cfg.strict_obstacles)

    if cfg.prune.mode == "exhaustive" and cache is not None:
        hit = cache.get(s)
        if hit is None:
            hit = generate_candidates(
                world, s, cfg.horizon, cfg.prune, strict_obstacles=cfg.strict_obstacles
            )
            cache[s] = hit
        return hit
    return generate_candidates(world, s, cfg.horizon, cfg.prune, strict_obstacles=cfg.strict_obstacles)


def replan_once(
    cfg: SingleAgentConfig,
    world: GridWorld,
    t: int,
    s: Cell,
    rng: np.random.Generator,
    *,
    _cache: dict | None = None,
) -> tuple[ActionSequence, PolicyPMF, CandidateSet, int]:
    """One planning event: enumerate, score, sample.

    Returns the chosen sequence, the PMF, the candidate set, and the chosen
    index, in that order.
    """
    weights = weights_at(cfg.weights, t)
    layout = layout_at(cfg.layout, t)
    cands = _candidates_for(cfg, world, t, s, weights, layout, _cache)
    costs = evaluate_candidates(
        weights,
        layout,
        t,
        s,
        cands,
        world,
        deception=cfg.deception,
        aggregation=cfg.aggregation,
    )
    pmf = build_pmf(costs, cfg.rationality)
    idx = sample(pmf, rng)
    return cands[idx].actions, pmf, cands, idx


def plan_episode(cfg: SingleAgentConfig, world: GridWorld, rng: np.random.Generator) -> TrajectoryLog:
    """Run one full episode until the true goal or the step cap.

    The clock advances only on executed actions. Raises StepCapExceeded with
    the partial log attached when the cap is hit first.
    """
    cap = cfg.max_steps if cfg.max_steps is not None else default_step_cap(world)
    log = TrajectoryLog(states=[Cell(*cfg.start)])
    s = Cell(*cfg.start)
    t = 0
    cache: dict = {}

    if s == layout_at(cfg.layout, t).true_goal:
        log.reached_goal = True
        return log

    while True:
        if t >= cap:
            raise StepCapExceeded(f"step cap {cap} reached at {tuple(s)}", log=log)
        weights = weights_at(cfg.weights, t)
        layout = layout_at(cfg.layout, t)
        cands = _candidates_for(cfg, world, t, s, weights, layout, cache)
        costs = evaluate_candidates(
            weights, layout, t, s, cands, world,
            deception=cfg.deception, aggregation=cfg.aggregation,
        )
        pmf = build_pmf(costs, cfg.rationality)
        idx = sample(pmf, rng)
        chosen = cands[idx]
        u_val = cfg.weights.u(t) if hasattr(cfg.weights, "u") else None
        log.per_step.append(
            ReplanRecord(t=t, chosen_index=idx, u=u_val, w1=weights.w1, w2=weights.w2,
                         cost=float(costs[idx]))
        )
        for m in range(cfg.execute_steps):
            s = apply(world, s, chosen.actions[m], strict_obstacles=cfg.strict_obstacles)
            log.states.append(s)
            t += 1
            if s == layout_at(cfg.layout, t).true_goal:
                log.reached_goal = True
                return log
            if t >= cap:
                raise StepCapExceeded(f"step cap {cap} reached at {tuple(s)}", log=log)
