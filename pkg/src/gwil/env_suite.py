"""Gridworld mazes and a 1-D chain as concrete tabular metric MDPs.

Cells are (x, y) with y = 0 at the bottom; state features are the unit
cell centers, action features the four unit direction vectors, and both
metrics are Euclidean on those features. A maze therefore reflects into
a genuinely isometric MDP.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from .tabular_mdp import TabularMetricMDP

__all__ = [
    "MazeSpec",
    "DisconnectedMazeError",
    "build_maze",
    "reflect_maze",
    "reflection_feature_maps",
    "build_chain_env",
    "maze_spec_to_json",
    "maze_spec_from_json",
    "parse_ascii_maze",
]

# action order: up, down, left, right
ACTION_NAMES = ("up", "down", "left", "right")
ACTION_VECTORS = np.array([[0.0, 1.0], [0.0, -1.0], [-1.0, 0.0], [1.0, 0.0]])


class DisconnectedMazeError(ValueError):
    """No path from start to goal."""


@dataclass(frozen=True)
class MazeSpec:
    width: int
    height: int
    walls: frozenset
    start: tuple[int, int]
    goal: tuple[int, int]
    step_reward: float = 0.0
    goal_reward: float = 1.0
    sparse: bool = False
    slip_prob: float = 0.0

    def __post_init__(self):
        walls = frozenset((int(x), int(y)) for x, y in self.walls)
        start = (int(self.start[0]), int(self.start[1]))
        goal = (int(self.goal[0]), int(self.goal[1]))
        if self.width < 1 or self.height < 1:
            raise ValueError("maze must have positive dimensions")
        for cell in (start, goal, *walls):
            if not (0 <= cell[0] < self.width and 0 <= cell[1] < self.height):
                raise ValueError(f"cell {cell} outside {self.width}x{self.height} grid")
        if start == goal:
            raise ValueError("start and goal must differ")
        if start in walls or goal in walls:
            raise ValueError("start and goal must be free cells")
        if not 0.0 <= self.slip_prob < 1.0:
            raise ValueError("slip_prob must lie in [0, 1)")
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "goal", goal)
        if not self._connected():
            raise DisconnectedMazeError("no path from start to goal")

    def free_cells(self) -> list[tuple[int, int]]:
        return [
            (x, y)
            for y in range(self.height)
            for x in range(self.width)
            if (x, y) not in self.walls
        ]

    def _connected(self) -> bool:
        seen = {self.start}
        queue = deque([self.start])
        while queue:
            x, y = queue.popleft()
            if (x, y) == self.goal:
                return True
            for dx, dy in ((0, 1), (0, -1), (-1, 0), (1, 0)):
                nxt = (x + dx, y + dy)
                if (
                    0 <= nxt[0] < self.width
                    and 0 <= nxt[1] < self.height
                    and nxt not in self.walls
                    and nxt not in seen
                ):
                    seen.add(nxt)
                    queue.append(nxt)
        return False


def build_maze(spec: MazeSpec, gamma: float = 0.99) -> TabularMetricMDP:
    """Tabular MDP of a maze: free cells as states, moves as actions.

    Moves follow the chosen direction with probability 1 - slip_prob and
    a uniformly random other direction otherwise; bumping a wall or the
    boundary stays in place. The goal is absorbing. Rewards are expected
    immediate rewards: step_reward (zero in sparse mode) plus goal_reward
    times the probability of entering the goal.
    """
    cells = spec.free_cells()
    index = {c: i for i, c in enumerate(cells)}
    n = len(cells)
    nA = 4
    goal_idx = index[spec.goal]

    def move(cell, a):
        nxt = (cell[0] + int(ACTION_VECTORS[a][0]), cell[1] + int(ACTION_VECTORS[a][1]))
        if (
            0 <= nxt[0] < spec.width
            and 0 <= nxt[1] < spec.height
            and nxt not in spec.walls
        ):
            return nxt
        return cell

    P = np.zeros((n, nA, n))
    for c, s in index.items():
        for a in range(nA):
            if s == goal_idx:
                P[s, a, s] = 1.0
                continue
            P[s, a, index[move(c, a)]] += 1.0 - spec.slip_prob
            for other in range(nA):
                if other != a:
                    P[s, a, index[move(c, other)]] += spec.slip_prob / 3.0

    step = 0.0 if spec.sparse else spec.step_reward
    R = step + spec.goal_reward * P[:, :, goal_idx]
    R[goal_idx, :] = 0.0

    p0 = np.zeros(n)
    p0[index[spec.start]] = 1.0
    centers = np.array([[x + 0.5, y + 0.5] for x, y in cells])
    dS = cdist(centers, centers)
    dS = (dS + dS.T) / 2.0
    np.fill_diagonal(dS, 0.0)
    dA = cdist(ACTION_VECTORS, ACTION_VECTORS)
    dA = (dA + dA.T) / 2.0
    np.fill_diagonal(dA, 0.0)
    return TabularMetricMDP(
        P=P, R=R, p0=p0, gamma=gamma, dS=dS, dA=dA,
        state_features=centers, action_features=ACTION_VECTORS,
        absorbing=frozenset({goal_idx}),
    )


def reflect_maze(spec: MazeSpec) -> tuple[MazeSpec, np.ndarray, np.ndarray]:
    """Mirror a maze about its vertical center axis.

    Returns the reflected spec together with the state permutation phi
    and action permutation psi (left and right swap) under which
    ``build_maze(reflected)`` equals ``apply_isometry(build_maze(spec),
    phi, psi)`` entry for entry (features mapped by
    :func:`reflection_feature_maps`).
    """
    w = spec.width

    def mirror(cell):
        return (w - 1 - cell[0], cell[1])

    reflected = replace(
        spec,
        walls=frozenset(mirror(c) for c in spec.walls),
        start=mirror(spec.start),
        goal=mirror(spec.goal),
    )
    r_index = {c: i for i, c in enumerate(reflected.free_cells())}
    phi = np.array([r_index[mirror(c)] for c in spec.free_cells()], dtype=int)
    psi = np.array([0, 1, 3, 2], dtype=int)
    return reflected, phi, psi


def reflection_feature_maps(spec: MazeSpec):
    """Rigid feature maps matching :func:`reflect_maze`'s permutations."""
    w = float(spec.width)

    def state_map(f):
        return np.array([w - f[0], f[1]])

    def action_map(f):
        return np.array([-f[0], f[1]])

    return state_map, action_map


def build_chain_env(n: int, k: int, gamma: float = 0.99) -> TabularMetricMDP:
    """1-D chain with k push actions and scalar state features.

    Pushing right (positive force) moves one cell right, pushing left one
    cell left, saturating at the ends. The rightmost state is an
    absorbing goal worth 1 on entry. Paired with a maze this gives
    expert/agent feature spaces of different dimensionality.
    """
    if n < 2 or k < 2:
        raise ValueError("need at least 2 states and 2 actions")
    forces = np.linspace(-1.0, 1.0, k)
    P = np.zeros((n, k, n))
    goal = n - 1
    for s in range(n):
        for a in range(k):
            if s == goal:
                P[s, a, s] = 1.0
                continue
            if forces[a] > 0:
                t = min(s + 1, n - 1)
            elif forces[a] < 0:
                t = max(s - 1, 0)
            else:
                t = s
            P[s, a, t] = 1.0
    R = P[:, :, goal].copy()
    R[goal, :] = 0.0
    p0 = np.zeros(n)
    p0[0] = 1.0
    feats = np.arange(n, dtype=float)[:, None]
    dS = np.abs(feats - feats.T)
    dA = np.abs(forces[:, None] - forces[None, :])
    return TabularMetricMDP(
        P=P, R=R, p0=p0, gamma=gamma, dS=dS, dA=dA,
        state_features=feats, action_features=forces[:, None],
        absorbing=frozenset({goal}),
    )


# --- maze wire formats --------------------------------------------------

def maze_spec_to_json(spec: MazeSpec) -> str:
    return json.dumps(
        {
            "width": spec.width,
            "height": spec.height,
            "walls": sorted([list(c) for c in spec.walls]),
            "start": list(spec.start),
            "goal": list(spec.goal),
            "step_reward": spec.step_reward,
            "goal_reward": spec.goal_reward,
            "sparse": spec.sparse,
            "slip_prob": spec.slip_prob,
        }
    )


def maze_spec_from_json(text: str) -> MazeSpec:
    obj = json.loads(text)
    return MazeSpec(
        width=int(obj["width"]),
        height=int(obj["height"]),
        walls=frozenset(tuple(c) for c in obj.get("walls", ())),
        start=tuple(obj["start"]),
        goal=tuple(obj["goal"]),
        step_reward=float(obj.get("step_reward", 0.0)),
        goal_reward=float(obj.get("goal_reward", 1.0)),
        sparse=bool(obj.get("sparse", False)),
        slip_prob=float(obj.get("slip_prob", 0.0)),
    )


def parse_ascii_maze(text: str, **kwargs) -> MazeSpec:
    """Parse an ASCII maze: '#' wall, 'S' start, 'G' goal, '.'/' ' free.

    The first text line is the top row of the maze. Keyword arguments
    (step_reward, goal_reward, sparse, slip_prob) pass through to MazeSpec.
    """
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise ValueError("empty maze")
    width = max(len(r) for r in rows)
    height = len(rows)
    walls = set()
    start = None
    goal = None
    for r, line in enumerate(rows):
        y = height - 1 - r
        line = line.ljust(width)
        for x, ch in enumerate(line):
            if ch == "#":
                walls.add((x, y))
            elif ch == "S":
                start = (x, y)
            elif ch == "G":
                goal = (x, y)
            elif ch not in ". ":
                raise ValueError(f"unexpected maze character {ch!r}")
    if start is None or goal is None:
        raise ValueError("maze must contain exactly one 'S' and one 'G'")
    return MazeSpec(
        width=width, height=height, walls=frozenset(walls), start=start, goal=goal,
        **kwargs,
    )
