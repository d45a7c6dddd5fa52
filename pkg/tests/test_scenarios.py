"""Preset catalog: construction, geometry, and parameter freezing."""

import pytest

from decoyplan.cost import CostWeights, ScheduledWeights
from decoyplan.errors import UnknownPreset
from decoyplan.planner_multi import TeamConfig
from decoyplan.planner_single import SingleAgentConfig
from decoyplan.scenarios import (
    PRESET_NAMES,
    MovingFalseGoalLayout,
    MovingGoalTrack,
    build,
    goal_position,
    list_presets,
)
from decoyplan.world import Cell


def test_preset_catalog():
    names = list_presets()
    assert len(names) == 15
    assert set(names) == set(PRESET_NAMES)
    for name in names:
        scenario = build(name, scale=15)
        assert scenario.name == name
        assert scenario.notes


def test_name_canonicalization():
    for alias in ("exaggeration-hard-switch", "EXAGGERATION_HARD_SWITCH",
                  "exaggerationhardswitch", "Exaggeration-Hard_Switch"):
        assert build(alias, scale=15).name == "ExaggerationHardSwitch"
    with pytest.raises(UnknownPreset):
        build("ExaggerationSoftSwitch")
    with pytest.raises(ValueError):
        build("VolleyballUp", scale=0)


def test_exaggeration_hard_switch_full_scale():
    s = build("ExaggerationHardSwitch", scale=1)
    assert (s.world.width, s.world.height) == (375, 375)
    cfg = s.config
    assert isinstance(cfg, SingleAgentConfig)
    assert cfg.horizon == 3 and cfg.execute_steps == 1
    assert cfg.rationality == pytest.approx(0.8)
    assert cfg.deception == "exaggeration"
    w = cfg.weights
    assert isinstance(w, ScheduledWeights)
    assert (w.kappa0, w.alpha0) == (10.0, 4.0)
    sched = w.schedule
    assert (sched.switch_on, sched.window) == (40, 300)
    assert (sched.ramp_up, sched.ramp_down) == (0, 0)
    assert cfg.start == Cell(187, 19)
    assert cfg.layout.true_goal == Cell(318, 337)
    assert cfg.layout.false_goals == (Cell(56, 337),)
    assert s.metric_plan == ("cal", "heatmap")


def test_schedule_ramp_variants():
    up = build("ExaggerationRampUp", scale=1).config.weights.schedule
    assert (up.ramp_up, up.ramp_down) == (100, 0)
    down = build("ExaggerationRampDown", scale=1).config.weights.schedule
    assert (down.ramp_up, down.ramp_down) == (0, 100)
    # Temporal constants shrink with the grid.
    small = build("ExaggerationRampUp", scale=15).config.weights.schedule
    assert small.ramp_up == 6


def test_ambiguity_presets():
    s = build("AmbiguityRampUp", scale=1)
    cfg = s.config
    assert cfg.deception == "ambiguity"
    assert (cfg.weights.kappa0, cfg.weights.alpha0) == (4.0, 4.0)
    assert cfg.weights.schedule.window == 250
    assert cfg.weights.schedule.ramp_up == 100
    assert "ambiguity" in s.metric_plan


def test_obstacle_preset_geometry():
    s = build("ObstacleExaggeration", scale=1)
    assert s.world.obstacles
    mask = s.world.obstacle_mask
    cfg = s.config
    for cell in (cfg.start, cfg.layout.true_goal, *cfg.layout.false_goals):
        assert not mask[cell.y, cell.x]
    # The block sits between start and the goals, not at the border.
    xs = [c.x for c in s.world.obstacles]
    ys = [c.y for c in s.world.obstacles]
    assert 0 < min(xs) and max(xs) < s.world.width - 1
    assert 0 < min(ys) and max(ys) < s.world.height - 1


def test_moving_goal_track():
    track = MovingGoalTrack(origin=Cell(10, 100), velocity=(0.0, -2.0),
                            width=120, height=120)
    assert goal_position(track, 0) == Cell(10, 100)
    assert goal_position(track, 5) == Cell(10, 90)
    assert goal_position(track, 60) == Cell(10, 0)
    # Clamped at the grid edge once the ray leaves it.
    assert goal_position(track, 600) == Cell(10, 0)


def test_moving_layout_tracks_decoy():
    s = build("MovingFalseGoalSlow", scale=1)
    layout = s.config.layout
    assert isinstance(layout, MovingFalseGoalLayout)
    assert layout.track.velocity == (0.0, -0.4)
    for t in (0, 7, 31):
        assert layout(t).false_goals == (goal_position(layout.track, t),)
        assert layout(t).true_goal == Cell(318, 337)
    fast = build("MovingFalseGoalFast", scale=1).config.layout
    assert fast.track.velocity == (0.0, -2.0)
    assert fast(5).false_goals == (Cell(37, 345),)


def test_budget_presets():
    a = build("BudgetTeamA", scale=1)
    cfg = a.config
    assert isinstance(cfg, TeamConfig)
    assert cfg.budget.rates == (1.0, 4.0)
    assert cfg.budget.total == pytest.approx(1500.0)
    assert cfg.budget.slack_cap == pytest.approx(450.0)
    assert cfg.budget.ramp.w_min == 0.5 and cfg.budget.ramp.w_max == 15.0
    assert cfg.lambda_vec == (0.6, 0.6, 0.6)
    assert cfg.couplings[0].kind == "energy_penalty"
    assert cfg.couplings[0].params["alpha"] == pytest.approx(0.45)
    assert a.world.width == 150
    # Shared start and goal in case A.
    assert cfg.agents[0].start == cfg.agents[1].start
    assert cfg.agents[0].layout.true_goal == cfg.agents[1].layout.true_goal

    b = build("BudgetTeamB", scale=1)
    assert b.config.budget.rates == (1.0, 1.0)

    c = build("BudgetTeamC", scale=1)
    assert c.config.budget.rates == (1.0, 1.0)
    assert c.config.agents[0].start != c.config.agents[1].start

    d = build("BudgetTeamD", scale=1)
    assert d.config.budget.rates == (1.0, 4.0)
    assert d.config.agents[0].start != d.config.agents[1].start
    assert set(d.metric_plan) == {"budget", "deviation", "heatmap"}


def test_budget_scaling():
    s = build("BudgetTeamA", scale=5)
    assert s.world.width == 30
    assert s.config.budget.total == pytest.approx(300.0)
    assert s.config.max_steps == 120


def test_margin_shrinks_on_small_grids():
    # Downscaled worlds must still satisfy 2 * margin < side.
    for scale in (5, 10, 15):
        s = build("BudgetTeamA", scale=scale)
        assert 2 * s.world.boundary_margin < min(s.world.width, s.world.height)
    # Past the point where landmarks collide the builder refuses.
    with pytest.raises(ValueError):
        build("BudgetTeamA", scale=30)


def test_volleyball_presets():
    up = build("VolleyballUp", scale=1)
    cfg = up.config
    assert cfg.lambda_vec == (6.5,) * 6
    assert cfg.fixed_steps == 22
    assert len(cfg.agents) == 5
    coup = cfg.couplings[0]
    assert coup.kind == "volleyball_split"
    assert coup.params["x_mid"] == pytest.approx(10.0)
    assert coup.params["gamma_false"] == 12.0
    assert (coup.params["target_false"], coup.params["target_true"]) == (3, 1)
    assert (up.world.width, up.world.height) == (20, 14)
    assert up.metric_context["runners"] == [1, 2, 3, 4]
    assert up.metric_context["targets"] == (3, 1)

    down = build("VolleyballDown", scale=1)
    w = down.world.width
    up_starts = [ag.start for ag in cfg.agents]
    down_starts = [ag.start for ag in down.config.agents]
    assert down_starts == [Cell(w - 1 - c.x, c.y) for c in up_starts]
    assert down.config.couplings[0].params["side_false"] == -coup.params["side_false"]


def test_build_is_deterministic():
    for name in ("ExaggerationHardSwitch", "BudgetTeamA", "VolleyballUp"):
        one = build(name, scale=15)
        two = build(name, scale=15)
        assert one.world == two.world
        assert one.metric_context == two.metric_context
        assert type(one.config) is type(two.config)
