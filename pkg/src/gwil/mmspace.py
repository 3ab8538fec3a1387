"""Finite metric measure spaces and the trajectories that induce them.

A :class:`MetricMeasureSpace` is a finite point set given purely by its
pairwise distance matrix and a probability vector over the points. It is
the object the Gromov-Wasserstein solver compares; no coordinates are
kept, so spaces built from feature vectors of different dimensionality
are directly comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "MetricMeasureSpace",
    "Step",
    "Trajectory",
    "from_distance_matrix",
    "from_trajectory",
    "product_metric",
    "space_to_json",
    "space_from_json",
    "trajectory_to_json",
    "trajectory_from_json",
]

REPAIR_TOL = 1e-9  # inputs off by less than this are repaired, not rejected


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MetricMeasureSpace:
    """Finite metric measure space: symmetric distances plus a probability vector.

    The triangle inequality is deliberately not required; any symmetric
    nonnegative cost with a zero diagonal is admissible.
    """

    dist: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        dist = _readonly(self.dist)
        mass = _readonly(self.mass)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise ValueError(f"dist must be square, got shape {dist.shape}")
        n = dist.shape[0]
        if mass.shape != (n,):
            raise ValueError(f"mass shape {mass.shape} does not match {n} atoms")
        if not np.array_equal(dist, dist.T):
            raise ValueError("dist must be exactly symmetric (use from_distance_matrix)")
        if np.any(np.diagonal(dist) != 0.0):
            raise ValueError("dist diagonal must be exactly zero")
        if np.any(dist < 0):
            raise ValueError("distances must be nonnegative")
        if np.any(mass < 0):
            raise ValueError("masses must be nonnegative")
        if abs(mass.sum() - 1.0) > 1e-12:
            raise ValueError(f"mass must sum to 1, got {mass.sum()!r}")
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "mass", mass)

    @property
    def n(self) -> int:
        return self.dist.shape[0]


@dataclass(frozen=True)
class Step:
    """One state-action record of an episode."""

    state: np.ndarray
    action: np.ndarray
    t: int
    env_reward: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "state", _readonly(np.atleast_1d(self.state)))
        object.__setattr__(self, "action", _readonly(np.atleast_1d(self.action)))


@dataclass(frozen=True)
class Trajectory:
    """Ordered state-action feature records from one episode."""

    steps: tuple[Step, ...]

    def __init__(self, steps: Iterable[Step]):
        steps = tuple(steps)
        if not steps:
            raise ValueError("trajectory must contain at least one step")
        sd = steps[0].state.shape
        ad = steps[0].action.shape
        prev_t = -1
        for s in steps:
            if s.state.shape != sd:
                raise ValueError("all state vectors must share one dimensionality")
            if s.action.shape != ad:
                raise ValueError("all action vectors must share one dimensionality")
            if s.t <= prev_t:
                raise ValueError("step indices must be strictly increasing")
            prev_t = s.t
        if steps[0].t != 0:
            raise ValueError("step indices must start at 0")
        object.__setattr__(self, "steps", steps)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def state_dim(self) -> int:
        return self.steps[0].state.size

    @property
    def action_dim(self) -> int:
        return self.steps[0].action.size

    def features(self) -> np.ndarray:
        """(T, state_dim + action_dim) matrix of concatenated step features."""
        return np.array([np.concatenate([s.state, s.action]) for s in self.steps])

    def env_rewards(self) -> np.ndarray:
        return np.array(
            [0.0 if s.env_reward is None else float(s.env_reward) for s in self.steps]
        )


def from_distance_matrix(dist, mass) -> MetricMeasureSpace:
    """Build a space from an explicit distance matrix, repairing round-off.

    Asymmetry up to ``1e-9`` is symmetrized by averaging and a mass total
    within ``1e-9`` of 1 is renormalized; larger defects are errors.
    """
    dist = np.asarray(dist, dtype=float)
    mass = np.asarray(mass, dtype=float)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise ValueError(f"dist must be square, got shape {dist.shape}")
    n = dist.shape[0]
    if mass.shape != (n,):
        raise ValueError(f"mass length {mass.shape} does not match dist size {n}")
    if not np.all(np.isfinite(dist)):
        raise ValueError("dist entries must be finite")
    if np.any(dist < 0):
        raise ValueError("distances must be nonnegative")
    asym = np.max(np.abs(dist - dist.T)) if n else 0.0
    if asym > REPAIR_TOL:
        raise ValueError(f"dist asymmetry {asym:g} exceeds tolerance {REPAIR_TOL:g}")
    if np.max(np.abs(np.diagonal(dist)), initial=0.0) > REPAIR_TOL:
        raise ValueError("dist diagonal must be zero")
    dist = (dist + dist.T) / 2.0
    np.fill_diagonal(dist, 0.0)
    if np.any(mass < 0):
        raise ValueError("masses must be nonnegative")
    total = mass.sum()
    if total <= 0:
        raise ValueError("mass must carry positive total weight")
    if abs(total - 1.0) > REPAIR_TOL:
        raise ValueError(f"mass sums to {total!r}, not 1")
    return MetricMeasureSpace(dist, mass / total)


def from_trajectory(
    traj: Trajectory,
    metric: str = "euclidean",
    dedup: str = "none",
    timestep_weight: float = 0.0,
) -> MetricMeasureSpace:
    """Empirical occupancy space of an episode: one uniform atom per step.

    With ``dedup="append_timestep"`` the step index, scaled by
    ``timestep_weight``, is appended to the state features so repeated
    state-action pairs stay distinct atoms. The default weight of 0 keeps
    the geometry untouched.
    """
    if metric != "euclidean":
        raise ValueError(f"unsupported metric {metric!r}")
    if dedup not in ("none", "append_timestep"):
        raise ValueError(f"unsupported dedup mode {dedup!r}")
    feats = traj.features()
    if dedup == "append_timestep":
        ts = np.array([[s.t * timestep_weight] for s in traj.steps])
        feats = np.hstack([feats, ts])
    dist = cdist(feats, feats, metric="euclidean")
    dist = (dist + dist.T) / 2.0
    np.fill_diagonal(dist, 0.0)
    t = len(traj)
    return MetricMeasureSpace(dist, np.full(t, 1.0 / t))


def product_metric(dS: np.ndarray, dA: np.ndarray) -> np.ndarray:
    """Sum metric on state-action pairs, row-major in (state, action)."""
    dS = np.asarray(dS, dtype=float)
    dA = np.asarray(dA, dtype=float)
    for name, d in (("dS", dS), ("dA", dA)):
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"{name} must be square")
        if np.max(np.abs(d - d.T), initial=0.0) > REPAIR_TOL:
            raise ValueError(f"{name} must be symmetric")
        if np.any(d < 0):
            raise ValueError(f"{name} must be nonnegative")
    nS, nA = dS.shape[0], dA.shape[0]
    out = dS[:, None, :, None] + dA[None, :, None, :]
    return out.reshape(nS * nA, nS * nA)


# --- JSON wire formats -------------------------------------------------

def space_to_json(space: MetricMeasureSpace) -> str:
    return json.dumps({"dist": space.dist.tolist(), "mass": space.mass.tolist()})


def space_from_json(text: str) -> MetricMeasureSpace:
    obj = json.loads(text)
    if not isinstance(obj, dict) or "dist" not in obj or "mass" not in obj:
        raise ValueError("expected an object with 'dist' and 'mass' fields")
    return from_distance_matrix(obj["dist"], obj["mass"])


def trajectory_to_json(traj: Trajectory) -> str:
    steps = []
    for s in traj.steps:
        rec = {"state": s.state.tolist(), "action": s.action.tolist(), "t": s.t}
        if s.env_reward is not None:
            rec["env_reward"] = float(s.env_reward)
        steps.append(rec)
    return json.dumps({"steps": steps})


def trajectory_from_json(text: str) -> Trajectory:
    obj = json.loads(text)
    if not isinstance(obj, dict) or "steps" not in obj:
        raise ValueError("expected an object with a 'steps' field")
    steps = []
    for rec in obj["steps"]:
        steps.append(
            Step(
                state=np.asarray(rec["state"], dtype=float),
                action=np.asarray(rec.get("action", []), dtype=float),
                t=int(rec["t"]),
                env_reward=rec.get("env_reward"),
            )
        )
    return Trajectory(steps)
