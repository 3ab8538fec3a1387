import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from gwil.mmspace import MetricMeasureSpace, Step, Trajectory, from_distance_matrix
from gwil.tabular_mdp import Policy, TabularMetricMDP


def space_from_points(points, mass=None) -> MetricMeasureSpace:
    points = np.asarray(points, dtype=float)
    dist = squareform(pdist(points))
    n = len(points)
    if mass is None:
        mass = np.full(n, 1.0 / n)
    return from_distance_matrix(dist, mass)


def random_space(rng, n, dim=2, uniform=True) -> MetricMeasureSpace:
    pts = rng.random((n, dim)) * 3.0
    if uniform:
        mass = np.full(n, 1.0 / n)
    else:
        mass = rng.random(n) + 0.05
        mass /= mass.sum()
    dist = squareform(pdist(pts))
    return from_distance_matrix(dist, mass)


def planar_trajectory(rng, t) -> Trajectory:
    states = rng.random((t, 2)) * 4.0
    actions = rng.random((t, 2))
    return Trajectory(
        Step(state=states[k], action=actions[k], t=k) for k in range(t)
    )


def rigid_transform_trajectory(traj: Trajectory, kind: str, rng) -> Trajectory:
    """Apply one rigid map to both state and action features of every step."""
    theta = rng.uniform(0, 2 * np.pi)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    refl = np.array([[1.0, 0.0], [0.0, -1.0]])
    shift = rng.uniform(-5, 5, size=2)
    if kind == "rotation":
        f = lambda v: rot @ v
    elif kind == "reflection":
        f = lambda v: refl @ v
    elif kind == "translation":
        f = lambda v: v + shift
    else:
        raise ValueError(kind)
    return Trajectory(
        Step(state=f(s.state), action=f(s.action), t=s.t, env_reward=s.env_reward)
        for s in traj.steps
    )


def random_mdp(rng, ns=None, na=None, gamma=None) -> TabularMetricMDP:
    ns = ns or int(rng.integers(2, 7))
    na = na or int(rng.integers(1, 4))
    P = rng.random((ns, na, ns)) + 0.01
    P /= P.sum(axis=2, keepdims=True)
    p0 = rng.random(ns) + 0.01
    p0 /= p0.sum()
    pts_s = rng.random((ns, 2)) * 2
    pts_a = rng.random((na, 2))
    return TabularMetricMDP(
        P=P,
        R=rng.standard_normal((ns, na)),
        p0=p0,
        gamma=gamma if gamma is not None else float(rng.uniform(0.3, 0.97)),
        dS=squareform(pdist(pts_s)),
        dA=squareform(pdist(pts_a)),
        state_features=pts_s,
        action_features=pts_a,
    )


def random_policy(rng, mdp) -> Policy:
    pi = rng.random((mdp.nS, mdp.nA)) + 0.01
    return Policy(pi / pi.sum(axis=1, keepdims=True))


@pytest.fixture
def two_atom_pair():
    x = from_distance_matrix([[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5])
    y = from_distance_matrix([[0.0, 3.0], [3.0, 0.0]], [0.5, 0.5])
    return x, y
