"""Grid-world engine and Monte-Carlo harness for deceptive path planning.

Agents plan by sampling K-step action sequences from Boltzmann
distributions over candidate costs, replan on a receding horizon, and can
be coupled into teams through shared interaction costs and budgets.
"""

from .cost import (
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
    schedule_u,
    total_cost_single,
    triangular_ramp,
)
from .errors import (
    AllInfinite,
    DecoyPlanError,
    DimensionMismatch,
    EmptyCandidateSet,
    NoFeasibleJoint,
    ObstacleHit,
    OutOfBounds,
    OutOfRange,
    ParseError,
    SizeLimitExceeded,
    StepCapExceeded,
    TooShort,
    UnknownKind,
    UnknownPreset,
)
from .harness import RunSpec, load_config, run, run_trial
from .horizon import Candidate, CandidateSet, PrunePolicy, generate_candidates, rollout
from .metrics import (
    CalReport,
    Heatmap,
    accumulate_heatmap,
    ambiguity_trace,
    cal,
    cal_report,
    deviation_area,
    split_counts,
)
from .planner_multi import (
    CouplingSpec,
    JointCandidate,
    TeamBudget,
    TeamConfig,
    TeamRun,
    assemble_cost_matrix,
    budget_prune,
    enumerate_joint,
    interaction_cost,
    plan_team,
    register_coupling,
)
from .planner_single import (
    ReplanRecord,
    SingleAgentConfig,
    TrajectoryLog,
    plan_episode,
    replan_once,
)
from .policy import PolicyPMF, build_joint_pmf, build_pmf, sample
from .scenarios import (
    MovingGoalTrack,
    Scenario,
    build,
    goal_position,
    list_presets,
)
from .world import Action, Cell, GridWorld, apply, euclidean, manhattan, neighbors

__version__ = "0.1.0"
