"""Named scenario presets reconstructing the six experiment families.

Every preset is a pure builder: the same name and scale always yield the
same world, config, and metric plan. Grid dimensions and temporal constants
divide by ``scale`` (floor, clamped to stay valid); rationality, gains,
speeds, and lookahead depth are scale-free. Cell placements are proportional
(fractions of the grid) because the source layouts are figures, not
coordinate tables; the fractions used are recorded in the metric context.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .cost import (
    CostWeights,
    GoalLayout,
    PiecewiseSchedule,
    ScheduledWeights,
    TriangularRamp,
)
from .errors import UnknownPreset
from .horizon import Candidate
from .planner_multi import CouplingSpec, TeamBudget, TeamConfig, TeamState
from .planner_single import SingleAgentConfig
from .world import Cell, GridWorld, euclidean

PRESET_NAMES = (
    "ExaggerationHardSwitch",
    "ExaggerationRampUp",
    "ExaggerationRampDown",
    "AmbiguityHardSwitch",
    "AmbiguityRampUp",
    "AmbiguityRampDown",
    "ObstacleExaggeration",
    "MovingFalseGoalSlow",
    "MovingFalseGoalFast",
    "BudgetTeamA",
    "BudgetTeamB",
    "BudgetTeamC",
    "BudgetTeamD",
    "VolleyballUp",
    "VolleyballDown",
)


@dataclass(frozen=True)
class MovingGoalTrack:
    """Linearly moving reference point, clamped to the grid rectangle."""

    origin: Cell
    velocity: tuple[float, float]
    width: int
    height: int


def goal_position(track: MovingGoalTrack, t: int) -> Cell:
    """Rounded, clamped position of the track at step t."""
    x = track.origin[0] + t * track.velocity[0]
    y = track.origin[1] + t * track.velocity[1]
    xi = min(max(int(round(x)), 0), track.width - 1)
    yi = min(max(int(round(y)), 0), track.height - 1)
    return Cell(xi, yi)


@dataclass(frozen=True)
class MovingFalseGoalLayout:
    """Goal layout whose single false goal follows a moving track."""

    true_goal: Cell
    track: MovingGoalTrack

    def __call__(self, t: int) -> GoalLayout:
        return GoalLayout(
            true_goal=self.true_goal, false_goals=(goal_position(self.track, t),)
        )


@dataclass(frozen=True)
class ReferenceDistanceCost:
    """Candidate cost: distance from the predicted terminal to this agent's
    per-replan reference cell, published by the pre-replan hook."""

    agent_index: int

    def __call__(self, world, t, origin, cand: Candidate, ctx) -> float:
        if any(world.is_obstacle(c) for c in cand.path):
            return math.inf
        ref = ctx["refs"][self.agent_index]
        return euclidean(cand.terminal, ref)


@dataclass(frozen=True)
class VolleyballReferences:
    """Pre-replan hook assigning runners to attack slots, nearest first.

    All (runner, slot) pairs are ranked by Euclidean distance, ties broken
    by agent index then slot index, and assigned greedily. The setter keeps
    a fixed reference at the net center.
    """

    setter_index: int
    setter_ref: Cell
    runner_indices: tuple[int, ...]
    slots: tuple[Cell, ...]

    def __call__(self, state: TeamState) -> dict:
        refs = {self.setter_index: self.setter_ref}
        pairs = []
        for ri, agent in enumerate(self.runner_indices):
            for si, slot in enumerate(self.slots):
                pairs.append((euclidean(state.positions[agent], slot), ri, si))
        pairs.sort()
        taken_runner: set[int] = set()
        taken_slot: set[int] = set()
        for _, ri, si in pairs:
            if ri in taken_runner or si in taken_slot:
                continue
            refs[self.runner_indices[ri]] = self.slots[si]
            taken_runner.add(ri)
            taken_slot.add(si)
        return {"refs": refs}


@dataclass(frozen=True)
class Scenario:
    """A fully built experiment: world, config, and what to measure."""

    name: str
    world: GridWorld
    config: SingleAgentConfig | TeamConfig
    metric_plan: tuple[str, ...]
    metric_context: dict
    scale: int = 1
    notes: str = ""


def _div(value: int, scale: int, floor: int = 1) -> int:
    return max(floor, value // scale)


def _margin(side: int, nominal: int) -> int:
    # Margins shrink on heavily scaled-down grids so 2*margin < side holds.
    return min(nominal, max(0, (side - 1) // 2))


def _cell(world: GridWorld, fx: float, fy: float) -> Cell:
    m = world.boundary_margin
    x = int(math.floor(fx * (world.width - 1) + 0.5))
    y = int(math.floor(fy * (world.height - 1) + 0.5))
    x = min(max(x, m), world.width - 1 - m)
    y = min(max(y, m), world.height - 1 - m)
    return Cell(x, y)


def _raw_cell(world: GridWorld, fx: float, fy: float) -> Cell:
    x = int(math.floor(fx * (world.width - 1) + 0.5))
    y = int(math.floor(fy * (world.height - 1) + 0.5))
    return Cell(min(max(x, 0), world.width - 1), min(max(y, 0), world.height - 1))


_SCHEDULE_RAMPS = {"HardSwitch": (0, 0), "RampUp": (100, 0), "RampDown": (0, 100)}

_PLACEMENT = {
    "start": (0.50, 0.05),
    "true_goal": (0.85, 0.90),
    "false_goal": (0.15, 0.90),
}


def _deception_single(
    name: str,
    scale: int,
    *,
    deception: str,
    kappa0: float,
    alpha0: float,
    window: int,
    ramps: tuple[int, int],
    obstacles: frozenset[Cell] = frozenset(),
    world: GridWorld | None = None,
) -> Scenario:
    if world is None:
        side = _div(375, scale)
        world = GridWorld(side, side, obstacles=obstacles, boundary_margin=_margin(side, 5))
    start = _cell(world, *_PLACEMENT["start"])
    goal = _cell(world, *_PLACEMENT["true_goal"])
    false_goal = _cell(world, *_PLACEMENT["false_goal"])
    switch_on = _div(40, scale)
    window_s = _div(window, scale)
    ramp_up = ramps[0] // scale
    ramp_down = ramps[1] // scale
    schedule = PiecewiseSchedule(
        switch_on=switch_on, window=window_s, ramp_up=ramp_up, ramp_down=ramp_down
    )
    layout = GoalLayout(true_goal=goal, false_goals=(false_goal,))
    config = SingleAgentConfig(
        start=start,
        layout=layout,
        horizon=3,
        execute_steps=1,
        rationality=0.8,
        weights=ScheduledWeights(schedule=schedule, kappa0=kappa0, alpha0=alpha0),
        deception=deception,
    )
    plan = ("cal", "heatmap") if deception == "exaggeration" else ("ambiguity", "cal", "heatmap")
    context = {
        "true_goal": tuple(goal),
        "false_goals": [tuple(false_goal)],
        "start": tuple(start),
        "window": (switch_on, switch_on + window_s),
        "placement_fractions": dict(_PLACEMENT),
    }
    notes = (
        f"scale={scale}: grid {world.width}x{world.height}, "
        f"switch_on={switch_on}, window={window_s}, ramps=({ramp_up},{ramp_down})"
    )
    return Scenario(name, world, config, plan, context, scale, notes)


def _obstacle_block(world: GridWorld) -> frozenset[Cell]:
    cx = int(math.floor(0.32 * (world.width - 1) + 0.5))
    cy = int(math.floor(0.40 * (world.height - 1) + 0.5))
    half = max(1, int(0.07 * world.width))
    cells = {
        Cell(x, y)
        for x in range(max(0, cx - half), min(world.width, cx + half + 1))
        for y in range(max(0, cy - half), min(world.height, cy + half + 1))
    }
    return frozenset(cells)


def _build_obstacle(name: str, scale: int) -> Scenario:
    side = _div(375, scale)
    bare = GridWorld(side, side, boundary_margin=_margin(side, 5))
    world = GridWorld(side, side, obstacles=_obstacle_block(bare), boundary_margin=_margin(side, 5))
    scenario = _deception_single(
        name, scale,
        deception="exaggeration", kappa0=10.0, alpha0=4.0,
        window=300, ramps=(0, 0), world=world,
    )
    return scenario


def _build_moving(name: str, scale: int, speed: float) -> Scenario:
    side = _div(375, scale)
    world = GridWorld(side, side, boundary_margin=_margin(side, 5))
    start = _cell(world, 0.85, 0.05)
    goal = _cell(world, 0.85, 0.90)
    track = MovingGoalTrack(
        origin=_raw_cell(world, 0.10, 0.95),
        velocity=(0.0, -speed),
        width=world.width,
        height=world.height,
    )
    switch_on = _div(40, scale)
    window_s = _div(300, scale)
    schedule = PiecewiseSchedule(switch_on=switch_on, window=window_s)
    config = SingleAgentConfig(
        start=start,
        layout=MovingFalseGoalLayout(true_goal=goal, track=track),
        horizon=3,
        execute_steps=1,
        rationality=0.8,
        weights=ScheduledWeights(schedule=schedule, kappa0=10.0, alpha0=4.0),
        deception="exaggeration",
    )
    context = {
        "true_goal": tuple(goal),
        "start": tuple(start),
        "track_origin": tuple(track.origin),
        "track_velocity": track.velocity,
        "window": (switch_on, switch_on + window_s),
    }
    notes = f"scale={scale}: grid {side}x{side}, false-goal speed {speed} cells/step"
    return Scenario(name, world, config, ("heatmap",), context, scale, notes)


_BUDGET_CASES = {
    # (energy rates, shared start?)
    "A": ((1.0, 4.0), True),
    "B": ((1.0, 1.0), True),
    "C": ((1.0, 1.0), False),
    "D": ((1.0, 4.0), False),
}


def _build_budget(name: str, scale: int, case: str) -> Scenario:
    rates, shared = _BUDGET_CASES[case]
    side = _div(150, scale)
    world = GridWorld(side, side, boundary_margin=_margin(side, 5))
    if shared:
        starts = [_cell(world, 0.50, 0.15)] * 2
        goals = [_cell(world, 0.50, 0.55)] * 2
    else:
        starts = [_cell(world, 0.35, 0.15), _cell(world, 0.65, 0.15)]
        goals = [_cell(world, 0.35, 0.55), _cell(world, 0.65, 0.55)]
    false_goal = _cell(world, 0.15, 0.45)
    total = 1500.0 / scale
    ramp = TriangularRamp(w_min=0.5, w_max=15.0)
    agents = [
        SingleAgentConfig(
            start=starts[i],
            layout=GoalLayout(true_goal=goals[i], false_goals=(false_goal,)),
            horizon=1,
            execute_steps=1,
            rationality=0.6,
            weights=CostWeights(w1=1.0, w2=0.0),
            deception="exaggeration",
        )
        for i in range(2)
    ]
    coupling = CouplingSpec(
        members=(0, 1),
        kind="EnergyPenalty",
        params={"alpha": 0.45, "rates": rates, "goals": tuple(goals)},
    )
    config = TeamConfig(
        agents=agents,
        couplings=[coupling],
        lambda_vec=(0.6, 0.6, 0.6),
        budget=TeamBudget(total=total, slack_fraction=0.3, rates=rates, ramp=ramp),
        max_steps=_div(600, scale),
    )
    context = {
        "true_goals": [tuple(g) for g in goals],
        "false_goals": [tuple(false_goal)],
        "starts": [tuple(s) for s in starts],
        "rates": rates,
        "budget_total": total,
        "slack_cap": 0.3 * total,
    }
    notes = f"scale={scale}: grid {side}x{side}, team budget {total}, slack cap {0.3 * total}"
    return Scenario(name, world, config, ("budget", "deviation", "heatmap"), context, scale, notes)


def _build_volleyball(name: str, scale: int, side_up: bool) -> Scenario:
    # The court is a fixed role formation; shrinking it would merge the
    # attack slots, so the scale knob leaves its geometry untouched.
    width, height = 20, 14
    world = GridWorld(width, height, boundary_margin=1)

    def place(fx: float, fy: float) -> Cell:
        c = _cell(world, fx, fy)
        if side_up:
            return c
        return Cell(world.width - 1 - c.x, c.y)

    slot_row_f = 11.0 / 13.0
    false_slots = tuple(place(fx, slot_row_f) for fx in (13 / 19, 14 / 19, 15 / 19))
    true_slot = place(5 / 19, slot_row_f)
    setter_ref = place(10 / 19, slot_row_f)
    setter_start = place(10 / 19, 2 / 13)
    runner_starts = tuple(place(fx, 2 / 13) for fx in (4 / 19, 7 / 19, 12 / 19, 15 / 19))

    x_mid = world.width / 2.0
    sigma_false = 1 if false_slots[0].x >= x_mid else -1
    sigma_true = -sigma_false

    starts = (setter_start,) + runner_starts
    refs_nominal = (setter_ref,) + false_slots + (true_slot,)
    agents = []
    for i, start in enumerate(starts):
        agents.append(
            SingleAgentConfig(
                start=start,
                layout=GoalLayout(true_goal=refs_nominal[min(i, len(refs_nominal) - 1)]),
                horizon=1,
                execute_steps=1,
                rationality=6.5,
                weights=CostWeights(w1=1.0, w2=0.0),
                cost_override=ReferenceDistanceCost(agent_index=i),
            )
        )
    runners = (1, 2, 3, 4)
    coupling = CouplingSpec(
        members=runners,
        kind="VolleyballSplit",
        params={
            "gamma_false": 12.0,
            "gamma_true": 12.0,
            "x_mid": x_mid,
            "side_false": sigma_false,
            "side_true": sigma_true,
            "target_false": 3,
            "target_true": 1,
            "gamma_sep": 0.5,
            "epsilon": 0.1,
        },
    )
    hook = VolleyballReferences(
        setter_index=0,
        setter_ref=setter_ref,
        runner_indices=runners,
        slots=false_slots + (true_slot,),
    )
    config = TeamConfig(
        agents=agents,
        couplings=[coupling],
        lambda_vec=(6.5,) * 6,
        fixed_steps=22,
        pre_replan=hook,
    )
    context = {
        "x_mid": x_mid,
        "side_false": sigma_false,
        "side_true": sigma_true,
        "runners": list(runners),
        "targets": (3, 1),
        "false_slots": [tuple(c) for c in false_slots],
        "true_slot": tuple(true_slot),
        "fixed_steps": 22,
    }
    notes = (
        f"scale={scale}: court {width}x{height}, 1 setter + 4 runners, "
        f"false corridor on the {'right' if sigma_false > 0 else 'left'} half"
    )
    return Scenario(name, world, config, ("splits", "heatmap"), context, scale, notes)


def _canonical(name: str) -> str:
    key = name.replace("-", "").replace("_", "").lower()
    for canon in PRESET_NAMES:
        if canon.lower() == key:
            return canon
    raise UnknownPreset(f"unknown preset {name!r}; see list_presets()")


def list_presets() -> tuple[str, ...]:
    return PRESET_NAMES


def build(name: str, scale: int = 1) -> Scenario:
    """Build a named preset at the given scale divisor.

    Raises UnknownPreset for unrecognized names (matching is case- and
    separator-insensitive) and ValueError for invalid scales.
    """
    if scale < 1:
        raise ValueError("scale must be >= 1")
    canon = _canonical(name)
    if canon.startswith("Exaggeration") or canon.startswith("Ambiguity"):
        variant = canon.removeprefix("Exaggeration").removeprefix("Ambiguity")
        ramps = _SCHEDULE_RAMPS[variant]
        if canon.startswith("Exaggeration"):
            return _deception_single(
                canon, scale,
                deception="exaggeration", kappa0=10.0, alpha0=4.0,
                window=300, ramps=ramps,
            )
        return _deception_single(
            canon, scale,
            deception="ambiguity", kappa0=4.0, alpha0=4.0,
            window=250, ramps=ramps,
        )
    if canon == "ObstacleExaggeration":
        return _build_obstacle(canon, scale)
    if canon == "MovingFalseGoalSlow":
        return _build_moving(canon, scale, speed=0.4)
    if canon == "MovingFalseGoalFast":
        return _build_moving(canon, scale, speed=2.0)
    if canon.startswith("BudgetTeam"):
        return _build_budget(canon, scale, canon[-1])
    if canon.startswith("Volleyball"):
        return _build_volleyball(canon, scale, side_up=canon.endswith("Up"))
    raise UnknownPreset(name)
