"""Cost terms, schedules, and the vectorized scorer against the scalar one."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from decoyplan.cost import (
    CostWeights,
    GoalLayout,
    PiecewiseSchedule,
    ScheduledWeights,
    TriangularRamp,
    c_amb,
    c_decep,
    c_goal,
    c_smooth,
    c_time,
    energy_increment,
    evaluate_candidates,
    exaggeration_weights,
    progress_drop,
    schedule_u,
    total_cost_single,
    triangular_ramp,
)
from decoyplan.errors import OutOfRange
from decoyplan.horizon import generate_candidates
from decoyplan.world import Action, Cell, GridWorld

N, E, S, W = Action.NORTH, Action.EAST, Action.SOUTH, Action.WEST

OPEN11 = GridWorld(11, 11, boundary_margin=0)


def test_progress_drop():
    assert progress_drop(5.0, 4.0) == 1.0
    assert progress_drop(4.0, 5.0) == 0.0
    assert progress_drop(3.0, 3.0) == 0.0


def test_c_goal():
    assert c_goal(Cell(10, 0), Cell(5, 0), Cell(6, 0)) == -1.0
    assert c_goal(Cell(10, 0), Cell(5, 0), Cell(4, 0)) == 0.0
    assert c_goal(Cell(0, 0), Cell(3, 4), Cell(3, 3)) == pytest.approx(
        -(5.0 - math.sqrt(18.0))
    )


def test_c_decep():
    assert c_decep(Cell(0, 10), Cell(0, 5), Cell(0, 6)) == -1.0
    assert c_decep(Cell(0, 10), Cell(0, 5), Cell(1, 5)) == 0.0
    assert c_decep(Cell(0, 0), Cell(3, 4), Cell(2, 4)) == pytest.approx(
        -(5.0 - math.sqrt(20.0))
    )


def test_c_amb():
    assert c_amb(Cell(0, 10), Cell(10, 10), Cell(5, 0)) == 0.0
    assert c_amb(Cell(0, 0), Cell(10, 0), Cell(0, 0)) == 10.0
    assert c_amb(Cell(0, 0), Cell(6, 8), Cell(3, 0)) == pytest.approx(
        math.sqrt(73.0) - 3.0
    )


def test_c_time():
    assert c_time(0, 3, 100.0, Cell(10, 0), Cell(0, 0)) == 0.0
    assert c_time(95, 3, 100.0, Cell(10, 0), Cell(0, 0)) == 8.0
    # Projected arrival exactly on the deadline is free.
    assert c_time(87, 3, 100.0, Cell(10, 0), Cell(0, 0)) == 0.0


def test_c_smooth():
    assert c_smooth((E, E, E)) == 0.0
    assert c_smooth((E, N, E)) == 2.0
    assert c_smooth((N,)) == 0.0


def test_schedule_hard_switch():
    sched = PiecewiseSchedule(switch_on=40, window=300)
    assert schedule_u(sched, 39) == 0.0
    assert schedule_u(sched, 40) == 1.0
    assert schedule_u(sched, 339) == 1.0
    assert schedule_u(sched, 340) == 0.0


def test_schedule_ramps():
    up = PiecewiseSchedule(switch_on=40, window=300, ramp_up=100)
    assert schedule_u(up, 90) == pytest.approx(0.5)
    down = PiecewiseSchedule(switch_on=40, window=300, ramp_down=100)
    assert schedule_u(down, 290) == pytest.approx(0.5)


def test_schedule_validation():
    with pytest.raises(ValueError):
        PiecewiseSchedule(switch_on=0, window=10, ramp_up=6, ramp_down=6)
    with pytest.raises(ValueError):
        PiecewiseSchedule(switch_on=0, window=-1)


@given(st.floats(min_value=-50.0, max_value=500.0))
def test_schedule_output_in_unit_interval(t):
    sched = PiecewiseSchedule(switch_on=40, window=300, ramp_up=100, ramp_down=50)
    assert 0.0 <= schedule_u(sched, t) <= 1.0


def test_exaggeration_weights():
    assert exaggeration_weights(0.0, 10.0, 4.0) == (10.0, 0.0)
    assert exaggeration_weights(1.0, 10.0, 4.0) == (0.0, 4.0)
    assert exaggeration_weights(0.5, 10.0, 4.0) == (5.0, 2.0)


@given(st.floats(min_value=0.0, max_value=1.0))
def test_weight_tradeoff_is_exact(u):
    w1, w2 = exaggeration_weights(u, 10.0, 4.0)
    assert w1 / 10.0 + w2 / 4.0 == pytest.approx(1.0, abs=1e-12)


def test_triangular_ramp():
    ramp = TriangularRamp(w_min=0.5, w_max=15.0)
    assert triangular_ramp(ramp, 0.0) == 0.5
    assert triangular_ramp(ramp, 0.5) == 15.0
    assert triangular_ramp(ramp, 1.0) == 0.5
    with pytest.raises(OutOfRange):
        triangular_ramp(ramp, 1.5)


@given(st.floats(min_value=0.0, max_value=1.0))
def test_triangular_ramp_symmetry(f):
    ramp = TriangularRamp(w_min=0.5, w_max=15.0)
    assert triangular_ramp(ramp, f) == pytest.approx(
        triangular_ramp(ramp, 1.0 - f), abs=1e-12
    )


def test_energy_increment():
    goal = Cell(0, 0)
    # Unit approach on the grid geodesic costs max(0, rate - 1).
    assert energy_increment(1.0, Cell(5, 0), Cell(4, 0), goal) == 0.0
    assert energy_increment(4.0, Cell(5, 0), Cell(4, 0), goal) == 3.0
    # A retreat costs rate + 1.
    assert energy_increment(1.0, Cell(5, 0), Cell(6, 0), goal) == 2.0
    assert energy_increment(4.0, Cell(5, 0), Cell(5, 1), goal) == 5.0


def test_goal_layout_validation():
    with pytest.raises(ValueError):
        GoalLayout(true_goal=Cell(1, 1), false_goals=(Cell(1, 1),))
    with pytest.raises(ValueError):
        GoalLayout(true_goal=Cell(1, 1), false_goals=(Cell(2, 2),), false_goal_weights=(1.0, 2.0))


def test_cost_weights_validation():
    with pytest.raises(ValueError):
        CostWeights(w1=-1.0, w2=0.0)
    with pytest.raises(ValueError):
        CostWeights(w1=1.0, w2=0.0, delta3=2)


def test_total_cost_pure_approach():
    layout = GoalLayout(true_goal=Cell(10, 5))
    w = CostWeights(w1=1.0, w2=0.0)
    cost = total_cost_single(w, layout, 0, Cell(5, 5), (E,), Cell(6, 5), OPEN11)
    assert cost == -1.0


def test_total_cost_obstacle_is_infinite():
    world = GridWorld(11, 11, obstacles={Cell(6, 5)}, boundary_margin=0)
    layout = GoalLayout(true_goal=Cell(10, 5))
    w = CostWeights(w1=1.0, w2=0.0)
    assert total_cost_single(w, layout, 0, Cell(5, 5), (E,), Cell(6, 5), world) == math.inf
    # Passing through counts, not just ending there.
    assert total_cost_single(w, layout, 0, Cell(5, 5), (E, E), Cell(7, 5), world) == math.inf


def test_total_cost_all_terms_disabled():
    layout = GoalLayout(true_goal=Cell(10, 5), false_goals=(Cell(0, 5),))
    w = CostWeights(w1=0.0, w2=0.0)
    assert total_cost_single(w, layout, 0, Cell(5, 5), (N, E), Cell(6, 6), OPEN11) == 0.0


def test_aggregation_modes_differ_on_backtracking():
    # A there-and-back path has per-step progress but zero net progress.
    layout = GoalLayout(true_goal=Cell(10, 5))
    w = CostWeights(w1=1.0, w2=0.0)
    per_step = total_cost_single(
        w, layout, 0, Cell(5, 5), (E, W), Cell(5, 5), OPEN11, aggregation="per_step"
    )
    terminal = total_cost_single(
        w, layout, 0, Cell(5, 5), (E, W), Cell(5, 5), OPEN11, aggregation="terminal"
    )
    assert per_step == -1.0
    assert terminal == 0.0


def test_time_and_smooth_terms_gated_by_flags():
    layout = GoalLayout(true_goal=Cell(10, 5), time_budget=10.0)
    gated = CostWeights(w1=0.0, w2=0.0, w3=2.0, w4=3.0)
    active = CostWeights(w1=0.0, w2=0.0, w3=2.0, w4=3.0, delta3=1, delta4=1)
    seq = (E, N, E)
    cost_off = total_cost_single(gated, layout, 8, Cell(5, 5), seq, None, OPEN11)
    cost_on = total_cost_single(active, layout, 8, Cell(5, 5), seq, None, OPEN11)
    assert cost_off == 0.0
    # Overrun: 8 + 3 + ceil(d((7,6),(10,5))) - 10 = 5; smoothness: 2 turns.
    assert cost_on == pytest.approx(2.0 * 5.0 + 3.0 * 2.0)


def test_multiple_false_goals_sum():
    layout = GoalLayout(true_goal=Cell(10, 5), false_goals=(Cell(0, 5), Cell(5, 0)))
    w = CostWeights(w1=0.0, w2=1.0)
    cost = total_cost_single(w, layout, 0, Cell(5, 5), (W,), Cell(4, 5), OPEN11)
    # One unit toward the first false goal; the second clamps to zero.
    assert cost == pytest.approx(-1.0)
    weighted = GoalLayout(
        true_goal=Cell(10, 5),
        false_goals=(Cell(0, 5), Cell(5, 0)),
        false_goal_weights=(3.0, 1.0),
    )
    cost_w = total_cost_single(w, weighted, 0, Cell(5, 5), (W,), Cell(4, 5), OPEN11)
    assert cost_w == pytest.approx(-3.0)


def test_scheduled_weights_provider():
    sched = PiecewiseSchedule(switch_on=40, window=300)
    provider = ScheduledWeights(schedule=sched, kappa0=10.0, alpha0=4.0)
    assert provider.u(10) == 0.0
    assert provider(10) == CostWeights(w1=10.0, w2=0.0)
    assert provider(100) == CostWeights(w1=0.0, w2=4.0)


@pytest.mark.parametrize("deception", ["exaggeration", "ambiguity"])
@pytest.mark.parametrize("aggregation", ["per_step", "terminal"])
def test_vectorized_scorer_matches_scalar(deception, aggregation):
    world = GridWorld(11, 11, obstacles={Cell(5, 6), Cell(7, 4)}, boundary_margin=0)
    layout = GoalLayout(
        true_goal=Cell(9, 9), false_goals=(Cell(1, 9),), time_budget=12.0
    )
    w = CostWeights(w1=1.3, w2=0.7, w3=0.2, w4=0.1, delta3=1, delta4=1)
    origin = Cell(5, 5)
    cands = generate_candidates(world, origin, 3)
    batched = evaluate_candidates(
        w, layout, 4, origin, cands, world, deception=deception, aggregation=aggregation
    )
    for i, cand in enumerate(cands):
        scalar = total_cost_single(
            w, layout, 4, origin, cand.actions, cand.terminal, world,
            path=cand.path, deception=deception, aggregation=aggregation,
        )
        if math.isinf(scalar):
            assert math.isinf(batched[i])
        else:
            assert batched[i] == pytest.approx(scalar, abs=1e-12)


def test_unknown_modes_rejected():
    layout = GoalLayout(true_goal=Cell(9, 9))
    w = CostWeights(w1=1.0, w2=0.0)
    with pytest.raises(ValueError):
        total_cost_single(w, layout, 0, Cell(5, 5), (E,), Cell(6, 5), OPEN11, deception="bluff")
    cands = generate_candidates(OPEN11, Cell(5, 5), 1)
    with pytest.raises(ValueError):
        evaluate_candidates(w, layout, 0, Cell(5, 5), cands, OPEN11, aggregation="mean")
