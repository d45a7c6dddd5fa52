"""Coupled multi-agent planning over joint action-sequence candidates.

Joint candidates are the Cartesian product of the per-agent candidate sets
in agent-major, lexicographic order. Each joint candidate's cost vector
holds one scalar per active agent followed by the interaction terms of each
coupling; the joint Boltzmann distribution contracts that vector with the
rationality vector. Execution is synchronized: all agents advance together,
finished agents hold position and log the held state.

A shared team budget, when present, prunes joint candidates so cumulative
consumption can never exceed the team total and the non-optimal expenditure
meter can never exceed its cap, while always leaving each agent enough of
both to still reach its true goal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .cost import (
    CostWeights,
    energy_increment,
    evaluate_candidates,
    layout_at,
    total_cost_single,
    triangular_ramp,
    weights_at,
    TriangularRamp,
)
from .errors import (
    NoFeasibleJoint,
    SizeLimitExceeded,
    StepCapExceeded,
    UnknownKind,
)
from .horizon import Candidate, CandidateSet, generate_candidates
from .planner_single import SingleAgentConfig, TrajectoryLog, default_step_cap
from .policy import build_joint_pmf, build_pmf, sample
from .world import Cell, GridWorld, apply, euclidean, manhattan

DEFAULT_JOINT_CAP = 1_000_000

_BUILTIN_KINDS = {
    "energypenalty": "energy_penalty",
    "energy_penalty": "energy_penalty",
    "volleyballsplit": "volleyball_split",
    "volleyball_split": "volleyball_split",
    "spatialrepulsion": "spatial_repulsion",
    "spatial_repulsion": "spatial_repulsion",
    "custom": "custom",
}

# name -> (handler, term count); handlers receive
# (members, states_now, states_next, params, scenario_state).
_CUSTOM_HANDLERS: dict[str, tuple[Callable, int]] = {}


def register_coupling(name: str, handler: Callable, terms: int = 1) -> None:
    """Register a custom interaction handler addressable from CouplingSpec."""
    if terms < 1:
        raise ValueError("a coupling must contribute at least one term")
    _CUSTOM_HANDLERS[name] = (handler, terms)


@dataclass(frozen=True)
class CouplingSpec:
    """Interaction term over a subset of at least two agents."""

    members: tuple[int, ...]
    kind: str
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        members = tuple(sorted(int(i) for i in self.members))
        if len(members) < 2 or len(set(members)) != len(members):
            raise ValueError("a coupling needs at least two distinct members")
        object.__setattr__(self, "members", members)
        key = self.kind.replace("_", "").lower()
        if key not in _BUILTIN_KINDS:
            raise UnknownKind(f"unknown coupling kind {self.kind!r}")
        object.__setattr__(self, "kind", _BUILTIN_KINDS[key])


def coupling_terms(spec: CouplingSpec) -> int:
    """Number of cost-vector entries this coupling contributes."""
    if spec.kind == "custom":
        name = spec.params.get("handler")
        if name not in _CUSTOM_HANDLERS:
            raise UnknownKind(f"no registered handler named {name!r}")
        return _CUSTOM_HANDLERS[name][1]
    return 1


@dataclass(frozen=True)
class TeamBudget:
    """Shared resource pool with a capped non-optimal expenditure meter.

    ``rates`` holds each agent's per-step drain on the shared total. The
    slack cap for the expenditure meter is ``slack_fraction * total``.
    ``ramp``, when set, modulates each agent's deception gain by its rate
    times the triangular weight of the meter's depletion fraction.
    """

    total: float
    slack_fraction: float
    rates: tuple[float, ...]
    ramp: TriangularRamp | None = None

    def __post_init__(self):
        if self.total <= 0 or not 0.0 <= self.slack_fraction <= 1.0:
            raise ValueError("budget total must be positive, slack fraction in [0, 1]")
        if any(r <= 0 for r in self.rates):
            raise ValueError("per-agent rates must be positive")

    @property
    def slack_cap(self) -> float:
        return self.slack_fraction * self.total


@dataclass
class TeamState:
    """Snapshot handed to the pre-replan hook."""

    t: int
    positions: tuple[Cell, ...]
    finished: tuple[bool, ...]
    expended: float
    consumed: float


# Hook computing shared per-replan context (reference cells, role
# assignments, ...) visible to cost overrides and interaction handlers.
PreReplanHook = Callable[[TeamState], dict]


@dataclass
class TeamConfig:
    """Team of agents, their couplings, and the joint sampling parameters.

    ``lambda_vec`` lists one rationality entry per agent followed by one per
    coupling term, in declaration order. ``fixed_steps`` switches to a fixed
    episode length during which goal arrival does not retire agents.
    """

    agents: list[SingleAgentConfig]
    couplings: list[CouplingSpec] = field(default_factory=list)
    lambda_vec: tuple[float, ...] | None = None
    mode: str = "joint"
    budget: TeamBudget | None = None
    max_steps: int | None = None
    fixed_steps: int | None = None
    joint_cap: int = DEFAULT_JOINT_CAP
    pre_replan: PreReplanHook | None = None

    def __post_init__(self):
        if not self.agents:
            raise ValueError("a team needs at least one agent")
        if self.mode not in ("joint", "separable"):
            raise ValueError(f"unknown team mode {self.mode!r}")
        if self.mode == "separable" and (self.couplings or self.budget is not None):
            raise ValueError("separable mode requires no couplings and no budget")
        n = len(self.agents)
        seen: set[int] = set()
        for c in self.couplings:
            if any(i >= n or i < 0 for i in c.members):
                raise ValueError(f"coupling members {c.members} outside the team")
            if seen & set(c.members):
                raise ValueError("coupling subsets must be disjoint")
            seen |= set(c.members)
        if self.budget is not None and len(self.budget.rates) != n:
            raise ValueError("budget rates must cover every agent")

    def resolved_lambda(self) -> tuple[float, ...]:
        width = len(self.agents) + sum(coupling_terms(c) for c in self.couplings)
        if self.lambda_vec is None:
            base = [a.rationality for a in self.agents]
            base += [1.0] * (width - len(self.agents))
            return tuple(base)
        if len(self.lambda_vec) != width:
            raise ValueError(
                f"lambda_vec has {len(self.lambda_vec)} entries, expected {width}"
            )
        return tuple(self.lambda_vec)


@dataclass(frozen=True)
class JointCandidate:
    """One joint action choice: (agent index, candidate) per active agent."""

    per_agent: tuple[tuple[int, Candidate], ...]

    def terminal(self, agent_index: int) -> Cell:
        for i, cand in self.per_agent:
            if i == agent_index:
                return cand.terminal
        raise KeyError(agent_index)


@dataclass
class TeamReplanRecord:
    t: int
    n_joints: int
    n_feasible: int
    chosen: int
    depletion_fraction: float | None
    deception_weight: float | None


@dataclass
class TeamRun:
    """Per-agent trajectories plus team-level diagnostics."""

    trajectories: list[TrajectoryLog]
    replans: list[TeamReplanRecord] = field(default_factory=list)
    budget_trace: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def all_reached(self) -> bool:
        return all(log.reached_goal for log in self.trajectories)


def enumerate_joint(
    candidate_sets: Sequence[CandidateSet],
    agent_indices: Sequence[int] | None = None,
    cap: int = DEFAULT_JOINT_CAP,
) -> list[JointCandidate]:
    """Cartesian product of per-agent candidate sets in agent-major order.

    Raises SizeLimitExceeded when the product would exceed ``cap``.
    """
    if agent_indices is None:
        agent_indices = list(range(len(candidate_sets)))
    sizes = [len(cs) for cs in candidate_sets]
    total = math.prod(sizes) if sizes else 0
    if total > cap:
        raise SizeLimitExceeded(f"{total} joint candidates exceed the cap of {cap}")
    if total == 0:
        return []
    grid = np.indices(sizes).reshape(len(sizes), -1)
    joints = []
    for col in range(total):
        per_agent = tuple(
            (agent_indices[a], candidate_sets[a][int(grid[a, col])])
            for a in range(len(candidate_sets))
        )
        joints.append(JointCandidate(per_agent=per_agent))
    return joints


def _pairwise_repulsion(points: Sequence[Cell], gamma_sep: float, epsilon: float) -> float:
    total = 0.0
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            total += gamma_sep / (epsilon + euclidean(points[i], points[j]))
    return total


def _split_counts_from(points: Sequence[Cell], x_mid: float, side_false: int, side_true: int):
    sf = st = 0.0
    for p in points:
        sigma = 1 if p[0] >= x_mid else -1
        sf += 0.5 * (1 + sigma * side_false)
        st += 0.5 * (1 + sigma * side_true)
    return sf, st


def interaction_cost(
    spec: CouplingSpec,
    states_now: Sequence[Cell],
    states_next: Sequence[Cell],
    scenario_state: dict | None = None,
) -> np.ndarray:
    """Interaction cost vector for one joint outcome of a coupling.

    ``states_now``/``states_next`` are aligned with ``spec.members``. Side
    and spacing terms evaluate the predicted next states; the energy term
    charges the net non-optimal expenditure of the move.
    """
    p = spec.params
    if spec.kind == "energy_penalty":
        alpha = p["alpha"]
        rates = p["rates"]
        goals = p["goals"]
        total = sum(
            energy_increment(r, now, nxt, g)
            for r, now, nxt, g in zip(rates, states_now, states_next, goals)
        )
        return np.array([alpha * total], dtype=np.float64)
    if spec.kind == "volleyball_split":
        sf, st = _split_counts_from(
            states_next, p["x_mid"], p["side_false"], p["side_true"]
        )
        phi = p["gamma_false"] * (sf - p.get("target_false", 3)) ** 2
        phi += p["gamma_true"] * (st - p.get("target_true", 1)) ** 2
        gamma_sep = p.get("gamma_sep", 0.0)
        if gamma_sep:
            phi += _pairwise_repulsion(states_next, gamma_sep, p.get("epsilon", 0.1))
        return np.array([phi], dtype=np.float64)
    if spec.kind == "spatial_repulsion":
        return np.array(
            [_pairwise_repulsion(states_next, p["gamma_sep"], p.get("epsilon", 0.1))],
            dtype=np.float64,
        )
    if spec.kind == "custom":
        name = p.get("handler")
        if name not in _CUSTOM_HANDLERS:
            raise UnknownKind(f"no registered handler named {name!r}")
        handler, terms = _CUSTOM_HANDLERS[name]
        out = np.asarray(
            handler(spec.members, states_now, states_next, p, scenario_state or {}),
            dtype=np.float64,
        ).reshape(-1)
        if out.size != terms:
            raise ValueError(f"handler {name!r} returned {out.size} terms, declared {terms}")
        return out
    raise UnknownKind(spec.kind)


def assemble_cost_matrix(
    team: TeamConfig,
    world: GridWorld,
    t: int,
    positions: Sequence[Cell],
    joints: Sequence[JointCandidate],
    *,
    scenario_state: dict | None = None,
    weights_override: Mapping[int, CostWeights] | None = None,
) -> np.ndarray:
    """Reference cost matrix: per-agent scalars then coupling terms, by row.

    Active agents are those appearing in the joints, ordered by index; the
    coupling columns follow in declaration order. Members absent from a
    joint (already finished) contribute their frozen current position.
    """
    if not joints:
        return np.zeros((0, 0), dtype=np.float64)
    active = sorted({i for i, _ in joints[0].per_agent})
    width = len(active) + sum(coupling_terms(c) for c in team.couplings)
    matrix = np.zeros((len(joints), width), dtype=np.float64)
    ctx = scenario_state or {}
    for r, joint in enumerate(joints):
        by_agent = dict(joint.per_agent)
        col = 0
        for i in active:
            cfg = team.agents[i]
            cand = by_agent[i]
            if cfg.cost_override is not None:
                matrix[r, col] = cfg.cost_override(world, t, positions[i], cand, ctx)
            else:
                w = (
                    weights_override[i]
                    if weights_override is not None and i in weights_override
                    else weights_at(cfg.weights, t)
                )
                matrix[r, col] = total_cost_single(
                    w,
                    layout_at(cfg.layout, t),
                    t,
                    positions[i],
                    cand.actions,
                    cand.terminal,
                    world,
                    path=cand.path,
                    deception=cfg.deception,
                    aggregation=cfg.aggregation,
                )
            col += 1
        for coup in team.couplings:
            now = [positions[m] for m in coup.members]
            nxt = [
                by_agent[m].terminal if m in by_agent else positions[m]
                for m in coup.members
            ]
            vec = interaction_cost(coup, now, nxt, ctx)
            matrix[r, col : col + len(vec)] = vec
            col += len(vec)
    return matrix


def _prefix_steps(cfg: SingleAgentConfig) -> int:
    return min(cfg.execute_steps, cfg.horizon)


def _joint_budget_terms(
    budget: TeamBudget,
    members: Sequence[tuple[int, Candidate]],
    positions: Sequence[Cell],
    goals: Mapping[int, Cell],
    exec_steps: Mapping[int, int],
):
    """Incremental expenditure, drain, and post-move reserves for one joint."""
    inc = drain = reserve = slack_reserve = 0.0
    after: dict[int, Cell] = {}
    for i, cand in members:
        rate = budget.rates[i]
        steps = exec_steps[i]
        chain = (positions[i], *cand.path[:steps])
        for k in range(steps):
            inc += energy_increment(rate, chain[k], chain[k + 1], goals[i])
        drain += rate * steps
        after[i] = chain[steps]
    for i, cand in members:
        rate = budget.rates[i]
        dist = manhattan(after[i], goals[i])
        reserve += rate * dist
        slack_reserve += max(0.0, rate - 1.0) * dist
    return inc, drain, reserve, slack_reserve


_EPS = 1e-9


def budget_prune(
    joints: Sequence[JointCandidate],
    budget: TeamBudget,
    used: float,
    positions: Sequence[Cell],
    goals: Mapping[int, Cell],
    *,
    consumed: float = 0.0,
    exec_steps: Mapping[int, int] | None = None,
) -> list[JointCandidate]:
    """Keep only joints that respect both budget meters, now and in reserve.

    A joint survives when (1) adding its non-optimal expenditure keeps the
    meter at or below the slack cap, (2) the shared total still covers the
    drain of the move plus the geodesic reserve each agent needs to reach
    its goal, and (3) enough slack remains for agents whose every approach
    step is itself charged. Raises NoFeasibleJoint when nothing survives.
    """
    kept = []
    for joint in joints:
        steps = exec_steps or {i: len(cand.actions) for i, cand in joint.per_agent}
        inc, drain, reserve, slack_reserve = _joint_budget_terms(
            budget, joint.per_agent, positions, goals, steps
        )
        if used + inc > budget.slack_cap + _EPS:
            continue
        if consumed + drain + reserve > budget.total + _EPS:
            continue
        if used + inc + slack_reserve > budget.slack_cap + _EPS:
            continue
        kept.append(joint)
    if not kept:
        raise NoFeasibleJoint(
            f"no joint candidate fits the budget (used={used:.3f}, consumed={consumed:.3f})"
        )
    return kept


# ---------------------------------------------------------------------------
# Vectorized internals used by plan_team. These mirror the reference
# functions above; tests assert the two stay in agreement.
# ---------------------------------------------------------------------------


def _member_terminal_arrays(
    coup: CouplingSpec,
    active: Sequence[int],
    sets: Mapping[int, CandidateSet],
    idx: np.ndarray,
    positions: Sequence[Cell],
    n_joints: int,
):
    """Per-member (x, y) arrays of predicted next cells, one row per joint."""
    pos_in_active = {i: a for a, i in enumerate(active)}
    arrays = []
    for m in coup.members:
        if m in pos_in_active:
            terms = sets[m].terminals_array
            arrays.append(terms[idx[pos_in_active[m]]])
        else:
            arrays.append(
                np.broadcast_to(np.asarray(positions[m], dtype=np.int64), (n_joints, 2))
            )
    return arrays


def _batched_coupling_columns(
    coup: CouplingSpec,
    active: Sequence[int],
    sets: Mapping[int, CandidateSet],
    idx: np.ndarray,
    positions: Sequence[Cell],
    n_joints: int,
    scenario_state: dict,
) -> np.ndarray:
    p = coup.params
    if coup.kind == "energy_penalty":
        pos_in_active = {i: a for a, i in enumerate(active)}
        col = np.zeros(n_joints, dtype=np.float64)
        for m, rate, goal in zip(coup.members, p["rates"], p["goals"]):
            if m in pos_in_active:
                terms = sets[m].terminals_array
                mh_term = np.abs(terms[:, 0] - goal[0]) + np.abs(terms[:, 1] - goal[1])
                mh_now = manhattan(positions[m], goal)
                inc = np.clip(rate + (mh_term - mh_now), 0.0, None)
                col += inc[idx[pos_in_active[m]]]
            else:
                col += max(0.0, rate)
        return (p["alpha"] * col).reshape(n_joints, 1)
    if coup.kind in ("volleyball_split", "spatial_repulsion"):
        pts = _member_terminal_arrays(coup, active, sets, idx, positions, n_joints)
        col = np.zeros(n_joints, dtype=np.float64)
        if coup.kind == "volleyball_split":
            sf = np.zeros(n_joints)
            st = np.zeros(n_joints)
            for arr in pts:
                sigma = np.where(arr[:, 0] >= p["x_mid"], 1.0, -1.0)
                sf += 0.5 * (1 + sigma * p["side_false"])
                st += 0.5 * (1 + sigma * p["side_true"])
            col += p["gamma_false"] * (sf - p.get("target_false", 3)) ** 2
            col += p["gamma_true"] * (st - p.get("target_true", 1)) ** 2
            gamma_sep = p.get("gamma_sep", 0.0)
        else:
            gamma_sep = p["gamma_sep"]
        if gamma_sep:
            eps = p.get("epsilon", 0.1)
            for i in range(len(pts)):
                for j in range(i + 1, len(pts)):
                    d = np.hypot(
                        pts[i][:, 0] - pts[j][:, 0], pts[i][:, 1] - pts[j][:, 1]
                    )
                    col += gamma_sep / (eps + d)
        return col.reshape(n_joints, 1)
    # Custom handlers run joint by joint.
    terms = coupling_terms(coup)
    out = np.zeros((n_joints, terms), dtype=np.float64)
    pos_in_active = {i: a for a, i in enumerate(active)}
    for r in range(n_joints):
        nxt = []
        for m in coup.members:
            if m in pos_in_active:
                cand = sets[m][int(idx[pos_in_active[m], r])]
                nxt.append(cand.terminal)
            else:
                nxt.append(positions[m])
        now = [positions[m] for m in coup.members]
        out[r] = interaction_cost(coup, now, nxt, scenario_state)
    return out


def _batched_budget_mask(
    budget: TeamBudget,
    active: Sequence[int],
    sets: Mapping[int, CandidateSet],
    idx: np.ndarray,
    positions: Sequence[Cell],
    goals: Mapping[int, Cell],
    exec_steps: Mapping[int, int],
    used: float,
    consumed: float,
    n_joints: int,
) -> np.ndarray:
    inc = np.zeros(n_joints, dtype=np.float64)
    reserve = np.zeros(n_joints, dtype=np.float64)
    slack_reserve = np.zeros(n_joints, dtype=np.float64)
    drain = 0.0
    for a, i in enumerate(active):
        rate = budget.rates[i]
        steps = exec_steps[i]
        goal = goals[i]
        paths = sets[i].paths_array[:, :steps, :]
        origin = np.asarray(positions[i], dtype=np.int64)
        chain = np.concatenate(
            [np.broadcast_to(origin, (paths.shape[0], 1, 2)), paths], axis=1
        )
        mh = np.abs(chain[:, :, 0] - goal[0]) + np.abs(chain[:, :, 1] - goal[1])
        inc_i = np.clip(rate + (mh[:, 1:] - mh[:, :-1]), 0.0, None).sum(axis=1)
        after = mh[:, -1].astype(np.float64)
        inc += inc_i[idx[a]]
        reserve += (rate * after)[idx[a]]
        slack_reserve += (max(0.0, rate - 1.0) * after)[idx[a]]
        drain += rate * steps
    ok = used + inc <= budget.slack_cap + _EPS
    ok &= consumed + drain + reserve <= budget.total + _EPS
    ok &= used + inc + slack_reserve <= budget.slack_cap + _EPS
    return ok


def plan_team(team: TeamConfig, world: GridWorld, rng: np.random.Generator) -> TeamRun:
    """Run one synchronized team episode.

    Terminates when every agent stands on its true goal, or after exactly
    ``fixed_steps`` global steps when that mode is set. Raises NoFeasibleJoint
    or StepCapExceeded with the partial run attached.
    """
    n = len(team.agents)
    lam_full = team.resolved_lambda()
    fixed_mode = team.fixed_steps is not None
    cap = team.max_steps if team.max_steps is not None else default_step_cap(world)
    budget = team.budget

    positions = [Cell(*a.start) for a in team.agents]
    logs = [TrajectoryLog(states=[positions[i]]) for i in range(n)]
    run = TeamRun(trajectories=logs)
    consumed = 0.0
    used = 0.0
    if budget is not None:
        run.budget_trace.append((0, 0.0, 0.0))
    t = 0

    goals = {i: layout_at(team.agents[i].layout, 0).true_goal for i in range(n)}
    finished = [
        (not fixed_mode) and positions[i] == goals[i] for i in range(n)
    ]
    for i in range(n):
        if finished[i]:
            logs[i].reached_goal = True

    caches: list[dict] = [{} for _ in range(n)]

    while True:
        if fixed_mode:
            if t >= team.fixed_steps:
                break
            active = list(range(n))
        else:
            if all(finished):
                break
            active = [i for i in range(n) if not finished[i]]

        state = TeamState(
            t=t,
            positions=tuple(positions),
            finished=tuple(finished),
            expended=used,
            consumed=consumed,
        )
        ctx = team.pre_replan(state) if team.pre_replan is not None else {}

        depletion = None
        ramp_weight = None
        weights_now: dict[int, CostWeights] = {}
        if budget is not None and budget.ramp is not None and budget.slack_cap > 0:
            depletion = min(1.0, used / budget.slack_cap)
            ramp_weight = triangular_ramp(budget.ramp, depletion)

        sets: dict[int, CandidateSet] = {}
        costvecs: dict[int, np.ndarray] = {}
        for i in active:
            cfg = team.agents[i]
            layout_i = layout_at(cfg.layout, t)
            goals[i] = layout_i.true_goal
            cands = caches[i].get(positions[i])
            if cands is None or cfg.prune.mode != "exhaustive":
                cands = generate_candidates(
                    world, positions[i], cfg.horizon, cfg.prune,
                    strict_obstacles=cfg.strict_obstacles,
                )
                if cfg.prune.mode == "exhaustive":
                    caches[i][positions[i]] = cands
            sets[i] = cands
            if cfg.cost_override is not None:
                costvecs[i] = np.array(
                    [cfg.cost_override(world, t, positions[i], c, ctx) for c in cands],
                    dtype=np.float64,
                )
            else:
                w = weights_at(cfg.weights, t)
                if ramp_weight is not None:
                    # Deception intensity scales with the agent's effective
                    # budget: a cheaper mover gets the larger share.
                    w = replace(w, w2=ramp_weight / budget.rates[i])
                weights_now[i] = w
                costvecs[i] = evaluate_candidates(
                    w, layout_i, t, positions[i], cands, world,
                    deception=cfg.deception, aggregation=cfg.aggregation,
                )

        sizes = [len(sets[i]) for i in active]
        n_joints = math.prod(sizes)
        if n_joints > team.joint_cap:
            raise SizeLimitExceeded(
                f"{n_joints} joint candidates exceed the cap of {team.joint_cap}"
            )

        choice: dict[int, int] = {}
        n_feasible = n_joints
        chosen_global = -1
        if team.mode == "separable":
            for i in active:
                pmf = build_pmf(costvecs[i], team.agents[i].rationality)
                choice[i] = sample(pmf, rng)
        else:
            idx = np.indices(sizes).reshape(len(active), -1)
            cols = [costvecs[i][idx[a]] for a, i in enumerate(active)]
            matrix_parts = [np.stack(cols, axis=1)] if cols else []
            for coup in team.couplings:
                matrix_parts.append(
                    _batched_coupling_columns(
                        coup, active, sets, idx, positions, n_joints, ctx
                    )
                )
            matrix = np.concatenate(matrix_parts, axis=1)
            lam = [lam_full[i] for i in active]
            pos_c = n
            for coup in team.couplings:
                terms = coupling_terms(coup)
                lam.extend(lam_full[pos_c : pos_c + terms])
                pos_c += terms

            if budget is not None:
                exec_steps = {i: _prefix_steps(team.agents[i]) for i in active}
                mask = _batched_budget_mask(
                    budget, active, sets, idx, positions, goals,
                    exec_steps, used, consumed, n_joints,
                )
                n_feasible = int(mask.sum())
                if n_feasible == 0:
                    raise NoFeasibleJoint(
                        f"no joint candidate fits the budget at t={t}", run=run
                    )
                feasible_rows = np.nonzero(mask)[0]
                pmf = build_joint_pmf(matrix[feasible_rows], lam)
                chosen_global = int(feasible_rows[sample(pmf, rng)])
            else:
                pmf = build_joint_pmf(matrix, lam)
                chosen_global = sample(pmf, rng)
            for a, i in enumerate(active):
                choice[i] = int(idx[a, chosen_global])

        run.replans.append(
            TeamReplanRecord(
                t=t,
                n_joints=n_joints,
                n_feasible=n_feasible,
                chosen=chosen_global,
                depletion_fraction=depletion,
                deception_weight=ramp_weight,
            )
        )

        m_max = max(_prefix_steps(team.agents[i]) for i in active)
        stop = False
        for mu in range(m_max):
            for i in range(n):
                moves = (
                    i in choice
                    and not finished[i]
                    and mu < _prefix_steps(team.agents[i])
                )
                if moves:
                    cand = sets[i][choice[i]]
                    nxt = apply(
                        world, positions[i], cand.actions[mu],
                        strict_obstacles=team.agents[i].strict_obstacles,
                    )
                    if budget is not None:
                        consumed += budget.rates[i]
                        used += energy_increment(
                            budget.rates[i], positions[i], nxt, goals[i]
                        )
                    positions[i] = nxt
                    logs[i].states.append(nxt)
                    if not fixed_mode and nxt == goals[i]:
                        finished[i] = True
                        logs[i].reached_goal = True
                else:
                    logs[i].states.append(positions[i])
            t += 1
            if budget is not None:
                run.budget_trace.append((t, consumed, used))
            if fixed_mode and t >= team.fixed_steps:
                stop = True
                break
            if not fixed_mode:
                if all(finished):
                    stop = True
                    break
                if t >= cap:
                    raise StepCapExceeded(f"team step cap {cap} reached", run=run)
        if stop and (fixed_mode or all(finished)):
            break

    if fixed_mode:
        for i in range(n):
            logs[i].reached_goal = positions[i] == goals[i]
    return run
