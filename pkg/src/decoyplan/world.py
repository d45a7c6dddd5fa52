"""Four-connected grid world with obstacles and a boundary margin.

Cells are integer (x, y) pairs with y growing northward. Agents move one
cell per action and must stay inside the margin-shrunk rectangle; obstacle
cells are normally walkable (planners penalize them through costs) unless
strict exclusion is requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import ObstacleHit, OutOfBounds


class Cell(NamedTuple):
    x: int
    y: int


class Action(IntEnum):
    """Headings in the fixed tie-break order north < east < south < west."""

    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3


# Displacement per action, indexed by Action value.
_DELTAS = ((0, 1), (1, 0), (0, -1), (-1, 0))

ACTION_ORDER = (Action.NORTH, Action.EAST, Action.SOUTH, Action.WEST)


def action_delta(action: Action) -> tuple[int, int]:
    return _DELTAS[action]


@dataclass(frozen=True)
class GridWorld:
    """Rectangular grid with static obstacles.

    ``boundary_margin`` shrinks the walkable region on every side; motion
    that would leave the shrunk rectangle raises OutOfBounds. Obstacles may
    sit anywhere inside the full rectangle.
    """

    width: int
    height: int
    obstacles: frozenset[Cell] = frozenset()
    boundary_margin: int = 5

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if self.boundary_margin < 0:
            raise ValueError("boundary margin must be non-negative")
        if 2 * self.boundary_margin >= min(self.width, self.height):
            raise ValueError("boundary margin leaves no walkable cells")
        cells = frozenset(Cell(int(x), int(y)) for x, y in self.obstacles)
        for c in cells:
            if not (0 <= c.x < self.width and 0 <= c.y < self.height):
                raise ValueError(f"obstacle {c} outside the grid")
        object.__setattr__(self, "obstacles", cells)

    def in_bounds(self, cell: Cell) -> bool:
        """True when ``cell`` lies inside the margin-shrunk rectangle."""
        m = self.boundary_margin
        return m <= cell[0] < self.width - m and m <= cell[1] < self.height - m

    def is_obstacle(self, cell: Cell) -> bool:
        return cell in self.obstacles

    @cached_property
    def obstacle_mask(self) -> np.ndarray:
        """Boolean array of shape (height, width), indexed [y, x]."""
        mask = np.zeros((self.height, self.width), dtype=bool)
        for c in self.obstacles:
            mask[c.y, c.x] = True
        return mask


def apply(world: GridWorld, state: Cell, action: Action, *, strict_obstacles: bool = False) -> Cell:
    """Execute one action and return the successor cell.

    Raises OutOfBounds when the successor leaves the walkable rectangle and
    ObstacleHit when it enters an obstacle under strict exclusion.
    """
    dx, dy = _DELTAS[action]
    nxt = Cell(state[0] + dx, state[1] + dy)
    if not world.in_bounds(nxt):
        raise OutOfBounds(f"{tuple(state)} -> {tuple(nxt)} leaves the walkable region")
    if strict_obstacles and nxt in world.obstacles:
        raise ObstacleHit(f"{tuple(nxt)} is an obstacle")
    return nxt


def neighbors(world: GridWorld, state: Cell, *, include_obstacles: bool = True) -> list[tuple[Action, Cell]]:
    """In-bounds successors of ``state`` in fixed action order."""
    out = []
    for a in ACTION_ORDER:
        dx, dy = _DELTAS[a]
        nxt = Cell(state[0] + dx, state[1] + dy)
        if not world.in_bounds(nxt):
            continue
        if not include_obstacles and nxt in world.obstacles:
            continue
        out.append((a, nxt))
    return out


def euclidean(a: Cell, b: Cell) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])
