"""Candidate action-sequence generation and rollout over a fixed horizon.

A candidate is a K-step action sequence together with its simulated path.
Exhaustive generation enumerates every in-bounds sequence in lexicographic
action order; beam generation keeps a fixed-width subset ranked by a caller
supplied prefix score, so its output is always a subset of the exhaustive
set and keeps the same ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyCandidateSet
from .world import ACTION_ORDER, Action, Cell, GridWorld, _DELTAS

ActionSequence = tuple[Action, ...]

# Scores a partial sequence; lower is better. Receives the prefix actions
# and the prefix path (origin excluded).
PrefixScore = Callable[[ActionSequence, tuple[Cell, ...]], float]


@dataclass(frozen=True)
class Candidate:
    actions: ActionSequence
    terminal: Cell
    path: tuple[Cell, ...]


@dataclass(frozen=True)
class PrunePolicy:
    """Candidate pruning mode: exhaustive enumeration or beam search."""

    mode: str = "exhaustive"
    beam_width: int | None = None
    score: PrefixScore | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.mode not in ("exhaustive", "beam"):
            raise ValueError(f"unknown prune mode {self.mode!r}")
        if self.mode == "beam" and (self.beam_width is None or self.beam_width < 1):
            raise ValueError("beam mode requires a positive beam width")


EXHAUSTIVE = PrunePolicy()


@dataclass(frozen=True)
class CandidateSet:
    origin: Cell
    horizon: int
    items: tuple[Candidate, ...]

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i: int) -> Candidate:
        return self.items[i]

    @cached_property
    def paths_array(self) -> np.ndarray:
        """Integer array of shape (n, horizon, 2) with path cell coordinates."""
        return np.array(
            [[(c[0], c[1]) for c in cand.path] for cand in self.items],
            dtype=np.int64,
        ).reshape(len(self.items), self.horizon, 2)

    @cached_property
    def actions_array(self) -> np.ndarray:
        """Integer array of shape (n, horizon) with action values."""
        return np.array(
            [[int(a) for a in cand.actions] for cand in self.items],
            dtype=np.int64,
        ).reshape(len(self.items), self.horizon)

    @cached_property
    def terminals_array(self) -> np.ndarray:
        """Integer array of shape (n, 2) with terminal cell coordinates."""
        return np.array([(c.terminal[0], c.terminal[1]) for c in self.items], dtype=np.int64)


def rollout(world: GridWorld, state: Cell, seq: Sequence[Action]) -> tuple[Cell, tuple[Cell, ...]]:
    """Simulate ``seq`` from ``state`` and return (terminal, path).

    The path holds the visited cells after each action; its last entry is
    the terminal. Bound violations propagate from the world.
    """
    cur = state
    path = []
    for a in seq:
        dx, dy = _DELTAS[a]
        nxt = Cell(cur[0] + dx, cur[1] + dy)
        if not world.in_bounds(nxt):
            from .errors import OutOfBounds

            raise OutOfBounds(f"rollout leaves the walkable region at {tuple(nxt)}")
        path.append(nxt)
        cur = nxt
    return cur, tuple(path)


def generate_candidates(
    world: GridWorld,
    state: Cell,
    horizon: int,
    prune: PrunePolicy = EXHAUSTIVE,
    *,
    strict_obstacles: bool = False,
) -> CandidateSet:
    """Enumerate feasible K-step candidates from ``state``.

    Every intermediate cell must be in bounds; obstacle cells are excluded
    only under ``strict_obstacles``. Beam pruning keeps the configured width
    at every depth using (score, actions) ordering so ties resolve to the
    lexicographically smaller sequence.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if not world.in_bounds(state):
        raise EmptyCandidateSet(f"origin {tuple(state)} is outside the walkable region")

    m = world.boundary_margin
    xmax, ymax = world.width - m, world.height - m
    obstacles = world.obstacles if strict_obstacles else None
    beam = prune.mode == "beam"

    level: list[tuple[ActionSequence, tuple[Cell, ...], Cell]] = [((), (), state)]
    for _ in range(horizon):
        nxt_level = []
        for actions, path, cur in level:
            for a in ACTION_ORDER:
                dx, dy = _DELTAS[a]
                nx, ny = cur[0] + dx, cur[1] + dy
                if not (m <= nx < xmax and m <= ny < ymax):
                    continue
                cell = Cell(nx, ny)
                if obstacles is not None and cell in obstacles:
                    continue
                nxt_level.append((actions + (a,), path + (cell,), cell))
        if not nxt_level:
            raise EmptyCandidateSet(f"no feasible sequence of length {horizon} from {tuple(state)}")
        if beam and len(nxt_level) > prune.beam_width:
            if prune.score is None:
                raise ValueError("beam pruning requires a prefix score")
            scored = sorted(
                nxt_level, key=lambda item: (prune.score(item[0], item[1]), item[0])
            )[: prune.beam_width]
            # Restore lexicographic ordering among the survivors.
            nxt_level = sorted(scored, key=lambda item: item[0])
        level = nxt_level

    items = tuple(Candidate(actions, cur, path) for actions, path, cur in level)
    return CandidateSet(origin=state, horizon=horizon, items=items)
