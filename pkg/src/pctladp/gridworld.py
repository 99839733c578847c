"""Stochastic gridworlds with slip dynamics, wall bounce-back and a goal reward.

Cells are ``(x, y)`` with ``0 <= x < width`` and ``0 <= y < height``; ``U``
increases ``y``.  From a cell with ``N`` members in its neighbourhood
(in-bounds 4-neighbours plus the cell itself) the intended cell receives
probability ``1 - 0.1 N``; the rest is shared equally by the other members.
Mass aimed at a wall or an obstacle stays in the current cell.

Obstacle cells are not states: no transition can enter them, so only the
free cells are indexed, in row-major order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import InputError
from .mdp import Mdp

ACTIONS = {"U": (0, 1), "D": (0, -1), "L": (-1, 0), "R": (1, 0)}


@dataclass(frozen=True)
class GridConfig:
    width: int
    height: int
    start: tuple
    goal: tuple
    obstacles: frozenset = frozenset()
    regions: dict = field(default_factory=dict)
    slip_base: float = 0.1
    goal_reward: float = 100.0
    gamma: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(self.start))
        object.__setattr__(self, "goal", tuple(self.goal))
        object.__setattr__(self, "obstacles", frozenset(tuple(c) for c in self.obstacles))
        object.__setattr__(self, "regions", {k: frozenset(tuple(c) for c in v) for k, v in self.regions.items()})

    def in_bounds(self, cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def problems(self) -> list[str]:
        out = []
        if self.width < 1 or self.height < 1:
            out.append("grid dimensions must be positive")
        for name, cell in (("start", self.start), ("goal", self.goal)):
            if not self.in_bounds(cell):
                out.append(f"{name} {cell} outside the grid")
            elif cell in self.obstacles:
                out.append(f"{name} {cell} is an obstacle")
        for c in self.obstacles:
            if not self.in_bounds(c):
                out.append(f"obstacle {c} outside the grid")
        for name, cells in self.regions.items():
            for c in cells:
                if not self.in_bounds(c):
                    out.append(f"region {name}: cell {c} outside the grid")
                elif c in self.obstacles:
                    out.append(f"region {name}: cell {c} is an obstacle")
        if 1.0 - self.slip_base * 5 < 0:
            out.append("slip_base too large: 1 - 5*slip_base must be nonnegative")
        if not 0 < self.gamma <= 1:
            out.append("gamma must lie in (0, 1]")
        return out

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "start": list(self.start),
            "goal": list(self.goal),
            "obstacles": sorted(list(c) for c in self.obstacles),
            "regions": {k: sorted(list(c) for c in v) for k, v in self.regions.items()},
            "slip_base": self.slip_base,
            "goal_reward": self.goal_reward,
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridConfig":
        try:
            return cls(
                width=int(data["width"]),
                height=int(data["height"]),
                start=tuple(data["start"]),
                goal=tuple(data["goal"]),
                obstacles=frozenset(tuple(c) for c in data.get("obstacles", [])),
                regions={k: frozenset(tuple(c) for c in v) for k, v in data.get("regions", {}).items()},
                slip_base=float(data.get("slip_base", 0.1)),
                goal_reward=float(data.get("goal_reward", 100.0)),
                gamma=float(data.get("gamma", 0.9)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad grid config: {exc}") from None


def cells(config: GridConfig) -> list:
    """Free cells in row-major order; position in this list is the state index."""
    return [(x, y) for y in range(config.height) for x in range(config.width) if (x, y) not in config.obstacles]


def cell_index(config: GridConfig, cell) -> int:
    cell = tuple(cell)
    try:
        return cells(config).index(cell)
    except ValueError:
        raise InputError(f"cell {cell} is an obstacle or outside the grid") from None


def build(config: GridConfig) -> Mdp:
    problems = config.problems()
    if problems:
        raise InputError("invalid grid: " + "; ".join(problems))
    grid = cells(config)
    n = len(grid)
    idx = {c: i for i, c in enumerate(grid)}
    P = np.zeros((n, len(ACTIONS), n))
    for c in grid:
        s = idx[c]
        x, y = c
        hood = [c] + [(x + dx, y + dy) for dx, dy in ACTIONS.values() if config.in_bounds((x + dx, y + dy))]
        N = len(hood)

        def land(cell):
            return idx.get(cell, s)

        for a, (dx, dy) in enumerate(ACTIONS.values()):
            target = (x + dx, y + dy)
            others = [h for h in hood if h != target]
            p_main = 1.0 - config.slip_base * N
            P[s, a, land(target)] += p_main
            share = (1.0 - p_main) / len(others) if others else 0.0
            for h in others:
                P[s, a, land(h)] += share
    goal = idx[config.goal]
    reward = np.where(P[:, :, goal] > 0.5, config.goal_reward, 0.0)
    mu = np.zeros(n)
    mu[idx[config.start]] = 1.0
    # obstacles are not states, so the obstacle label is always empty
    labels = {"goal": frozenset({goal}), "obstacle": frozenset()}
    labels.update({k: frozenset(idx[c] for c in v) for k, v in config.regions.items()})
    names = tuple(f"{x},{y}" for x, y in grid)
    return Mdp(P, reward, mu, config.gamma, None, labels, names, tuple(ACTIONS))


def free_states(config: GridConfig) -> np.ndarray:
    return np.arange(len(cells(config)))


def state_grid(config: GridConfig, values, fill=np.nan) -> np.ndarray:
    """Per-state values laid out as a ``(height, width)`` array; obstacles get ``fill``."""
    out = np.full((config.height, config.width), fill, dtype=float)
    for v, (x, y) in zip(np.asarray(values, dtype=float), cells(config)):
        out[y, x] = v
    return out


def _canned(name: str) -> GridConfig:
    text = resources.files("pctladp.data").joinpath("experiments.json").read_text()
    return GridConfig.from_dict(json.loads(text)[name])


def experiment1_config() -> GridConfig:
    """11x11 reach-avoid grid, start (0,0), goal (8,10); obstacle layout approximate."""
    return _canned("experiment1")


def experiment2_config() -> GridConfig:
    """Experiment-1 grid plus the labelled regions ``A`` and ``B``."""
    return _canned("experiment2")
