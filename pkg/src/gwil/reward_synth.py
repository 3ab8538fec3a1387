"""Pseudo-rewards from an optimal coupling.

The squared-loss objective at a coupling splits into one nonnegative
term per agent atom,

    c_j = sum_{i,i',j'} |d_E(i,i') - d_A(j,j')|^2 u[i,j] u[i',j'],

so rewarding step j with -c_j (scaled by the appropriate normalization)
makes the agent's expected return the negated objective: maximizing
return minimizes the distance. All rewards here are therefore <= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gw_solver import Coupling
from .mmspace import MetricMeasureSpace

__all__ = [
    "PseudoRewardAssignment",
    "trajectory_rewards",
    "occupancy_rewards",
    "combine_rewards",
]


@dataclass(frozen=True)
class PseudoRewardAssignment:
    """Per-step rewards for one collected episode.

    With the T_A factor included the rewards average to -gw_sq; with the
    factor dropped (the practical default, since it is shared by every
    step) they sum to -gw_sq instead.
    """

    rewards: np.ndarray
    gw_sq: float
    includes_T_A_factor: bool

    def __post_init__(self):
        r = np.ascontiguousarray(self.rewards, dtype=float)
        r.setflags(write=False)
        object.__setattr__(self, "rewards", r)

    def to_csv(self) -> str:
        lines = ["step,reward"]
        lines += [f"{j},{float(r)!r}" for j, r in enumerate(self.rewards)]
        return "\n".join(lines) + "\n"


def _per_atom_costs(
    d_e: np.ndarray, d_a: np.ndarray, u: np.ndarray
) -> np.ndarray:
    """c_j as above, one entry per column (agent atom) of u."""
    r = u.sum(axis=1)
    s = u.sum(axis=0)
    cross = (u * (d_e @ u @ d_a)).sum(axis=0)
    return u.T @ ((d_e**2) @ r) + s * ((d_a**2) @ s) - 2.0 * cross


def _coupling_matrix(theta) -> np.ndarray:
    return theta.u if isinstance(theta, Coupling) else np.asarray(theta, dtype=float)


def trajectory_rewards(
    expert: MetricMeasureSpace,
    agent: MetricMeasureSpace,
    theta,
    include_T_A: bool = False,
) -> PseudoRewardAssignment:
    """Rewards for the steps of an episode, both spaces uniform.

    ``theta`` must be feasible for the two uniform measures. Each step j
    of the agent episode receives -T_A * c_j, with the common T_A factor
    dropped when ``include_T_A`` is false.
    """
    for name, space in (("expert", expert), ("agent", agent)):
        if np.max(np.abs(space.mass - 1.0 / space.n)) > 1e-12:
            raise ValueError(f"{name} space must carry a uniform measure")
    u = _coupling_matrix(theta)
    if u.shape != (expert.n, agent.n):
        raise ValueError(f"coupling shape {u.shape} does not match ({expert.n}, {agent.n})")
    row_gap = np.max(np.abs(u.sum(axis=1) - expert.mass))
    col_gap = np.max(np.abs(u.sum(axis=0) - agent.mass))
    if max(row_gap, col_gap) > 1e-8:
        raise ValueError("coupling is not feasible for the trajectory measures")
    costs = _per_atom_costs(expert.dist, agent.dist, u)
    costs = np.maximum(costs, 0.0)
    scale = float(agent.n) if include_T_A else 1.0
    return PseudoRewardAssignment(
        rewards=-scale * costs,
        gw_sq=float(costs.sum()),
        includes_T_A_factor=include_T_A,
    )


def occupancy_rewards(
    expert_space: MetricMeasureSpace,
    agent_space: MetricMeasureSpace,
    u,
    rho_agent: np.ndarray,
) -> np.ndarray:
    """Rewards over agent atoms for a general occupancy measure.

    r(z_A) = -c_j / rho(z_A); weighting by rho recovers the negated
    objective exactly, which is what makes return maximization equivalent
    to distance minimization. ``rho_agent`` must be strictly positive.
    """
    mat = _coupling_matrix(u)
    rho = np.asarray(rho_agent, dtype=float)
    if mat.shape != (expert_space.n, agent_space.n):
        raise ValueError(
            f"coupling shape {mat.shape} does not match ({expert_space.n}, {agent_space.n})"
        )
    if rho.shape != (agent_space.n,):
        raise ValueError("rho_agent must have one weight per agent atom")
    if np.any(rho <= 0):
        raise ValueError("rho_agent must be strictly positive on the support")
    costs = np.maximum(_per_atom_costs(expert_space.dist, agent_space.dist, mat), 0.0)
    return -costs / rho


def combine_rewards(proxy: np.ndarray, env: np.ndarray, beta: float) -> np.ndarray:
    """proxy + beta * env, elementwise."""
    proxy = np.asarray(proxy, dtype=float)
    env = np.asarray(env, dtype=float)
    if proxy.shape != env.shape:
        raise ValueError(f"length mismatch: {proxy.shape} vs {env.shape}")
    return proxy + beta * env
