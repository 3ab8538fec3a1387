"""Finite metric MDPs: occupancy measures, planning, and policy comparison.

States and actions are integer-indexed; each MDP carries a metric on
states and one on actions, so the state-action space becomes a metric
space under the sum metric and policies become metric measure spaces
through their (normalized) occupancy measures.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .gw_solver import GWOpts, GWSolveResult, solve_gw
from .mmspace import MetricMeasureSpace, Step, Trajectory, product_metric

__all__ = [
    "TabularMetricMDP",
    "Policy",
    "OccupancyMeasure",
    "IsometryCheck",
    "occupancy",
    "value_iteration",
    "apply_isometry",
    "occupancy_space",
    "gw_between_policies",
    "is_isometric",
    "rollout",
    "mdp_to_json",
    "mdp_from_json",
]


def _check_metric(name: str, d: np.ndarray, size: int):
    if d.shape != (size, size):
        raise ValueError(f"{name} must have shape ({size}, {size}), got {d.shape}")
    if np.max(np.abs(d - d.T), initial=0.0) > 1e-9:
        raise ValueError(f"{name} must be symmetric")
    if np.any(np.diagonal(d) != 0):
        raise ValueError(f"{name} must have a zero diagonal")
    if np.any(d < 0):
        raise ValueError(f"{name} must be nonnegative")


def _frozen_array(a, dtype=float) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TabularMetricMDP:
    """Finite MDP with metrics on its state and action sets.

    ``absorbing`` states must self-loop under every action; rollouts stop
    on entering one. Feature matrices, when present, give the real-valued
    observations emitted into trajectories (one-hot otherwise).
    """

    P: np.ndarray
    R: np.ndarray
    p0: np.ndarray
    gamma: float
    dS: np.ndarray
    dA: np.ndarray
    state_features: np.ndarray | None = None
    action_features: np.ndarray | None = None
    absorbing: frozenset = frozenset()

    def __post_init__(self):
        P = _frozen_array(self.P)
        R = _frozen_array(self.R)
        p0 = _frozen_array(self.p0)
        dS = _frozen_array(self.dS)
        dA = _frozen_array(self.dA)
        if P.ndim != 3:
            raise ValueError("P must be a (nS, nA, nS) tensor")
        nS, nA, nS2 = P.shape
        if nS2 != nS:
            raise ValueError(f"P next-state axis {nS2} does not match nS={nS}")
        if R.shape != (nS, nA):
            raise ValueError(f"R must have shape ({nS}, {nA}), got {R.shape}")
        if p0.shape != (nS,):
            raise ValueError(f"p0 must have length {nS}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > 1e-12:
            raise ValueError("each P[s][a] must be a probability distribution")
        if np.any(p0 < 0) or abs(p0.sum() - 1.0) > 1e-12:
            raise ValueError("p0 must be a probability distribution")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        _check_metric("dS", dS, nS)
        _check_metric("dA", dA, nA)
        absorbing = frozenset(int(s) for s in self.absorbing)
        for s in absorbing:
            if not (0 <= s < nS):
                raise ValueError(f"absorbing state {s} out of range")
            if np.any(P[s, :, s] != 1.0):
                raise ValueError(f"absorbing state {s} must self-loop under all actions")
        sf = self.state_features
        if sf is not None:
            sf = _frozen_array(np.atleast_2d(sf))
            if sf.shape[0] != nS:
                raise ValueError("state_features must have one row per state")
        af = self.action_features
        if af is not None:
            af = _frozen_array(np.atleast_2d(af))
            if af.shape[0] != nA:
                raise ValueError("action_features must have one row per action")
        for name, val in (
            ("P", P), ("R", R), ("p0", p0), ("dS", dS), ("dA", dA),
            ("state_features", sf), ("action_features", af),
            ("absorbing", absorbing),
        ):
            object.__setattr__(self, name, val)

    @property
    def nS(self) -> int:
        return self.P.shape[0]

    @property
    def nA(self) -> int:
        return self.P.shape[1]

    def state_feature(self, s: int) -> np.ndarray:
        if self.state_features is not None:
            return self.state_features[s]
        out = np.zeros(self.nS)
        out[s] = 1.0
        return out

    def action_feature(self, a: int) -> np.ndarray:
        if self.action_features is not None:
            return self.action_features[a]
        out = np.zeros(self.nA)
        out[a] = 1.0
        return out


@dataclass(frozen=True)
class Policy:
    """Stationary stochastic policy: one probability row per state."""

    pi: np.ndarray

    def __post_init__(self):
        pi = _frozen_array(self.pi)
        if pi.ndim != 2:
            raise ValueError("pi must be a (nS, nA) matrix")
        if np.any(pi < 0) or np.max(np.abs(pi.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("each policy row must be a probability distribution")
        object.__setattr__(self, "pi", pi)

    @staticmethod
    def deterministic(actions, n_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        pi = np.zeros((actions.size, n_actions))
        pi[np.arange(actions.size), actions] = 1.0
        return Policy(pi)

    def greedy_actions(self) -> np.ndarray:
        return np.argmax(self.pi, axis=1)


@dataclass(frozen=True)
class OccupancyMeasure:
    """Discounted state-action visitation table, total mass 1/(1-gamma)."""

    rho: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rho", _frozen_array(self.rho))

    def total_mass(self) -> float:
        return float(self.rho.sum())

    def flow_residual(self, mdp: TabularMetricMDP) -> float:
        """Sup-norm defect of the Bellman flow equations."""
        lhs = self.rho.sum(axis=1)
        inflow = np.einsum("sat,sa->t", mdp.P, self.rho)
        return float(np.max(np.abs(lhs - mdp.p0 - mdp.gamma * inflow)))


def occupancy(mdp: TabularMetricMDP, policy: Policy) -> OccupancyMeasure:
    """Exact occupancy measure via a direct solve of the flow equations."""
    if policy.pi.shape != (mdp.nS, mdp.nA):
        raise ValueError("policy shape does not match MDP")
    # state-to-state kernel under the policy, then (I - gamma K^T) x = p0
    K = np.einsum("sa,sat->st", policy.pi, mdp.P)
    A = np.eye(mdp.nS) - mdp.gamma * K.T
    x = np.linalg.solve(A, mdp.p0)
    return OccupancyMeasure(x[:, None] * policy.pi)


def value_iteration(
    mdp: TabularMetricMDP, tol: float = 1e-12, max_iters: int = 1_000_000
) -> tuple[Policy, float]:
    """Optimal deterministic policy (ties to the lowest action index).

    Runs value iteration until the Bellman residual drops below ``tol``,
    then evaluates the greedy policy exactly; the second return value is
    its expected discounted return from p0.
    """
    V = np.zeros(mdp.nS)
    for _ in range(max_iters):
        Q = mdp.R + mdp.gamma * np.einsum("sat,t->sa", mdp.P, V)
        V_next = Q.max(axis=1)
        if np.max(np.abs(V_next - V)) <= tol:
            V = V_next
            break
        V = V_next
    else:
        raise RuntimeError("value iteration failed to reach tolerance")
    Q = mdp.R + mdp.gamma * np.einsum("sat,t->sa", mdp.P, V)
    policy = Policy.deterministic(np.argmax(Q, axis=1), mdp.nA)
    # exact evaluation of the greedy policy
    acts = policy.greedy_actions()
    P_pi = mdp.P[np.arange(mdp.nS), acts]
    R_pi = mdp.R[np.arange(mdp.nS), acts]
    V_pi = np.linalg.solve(np.eye(mdp.nS) - mdp.gamma * P_pi, R_pi)
    return policy, float(mdp.p0 @ V_pi)


def apply_isometry(
    mdp: TabularMetricMDP,
    phi,
    psi,
    state_feature_map=None,
    action_feature_map=None,
) -> TabularMetricMDP:
    """Relabel an MDP through state/action permutations.

    phi and psi must be bijections of the index sets; rewards, dynamics,
    initial distribution and both metrics are carried along, so phi/psi
    are isometries of the result by construction. Feature rows follow
    their states/actions and may additionally be passed through rigid
    maps to keep exported trajectories geometrically faithful.
    """
    phi = np.asarray(phi, dtype=int)
    psi = np.asarray(psi, dtype=int)
    if sorted(phi.tolist()) != list(range(mdp.nS)):
        raise ValueError("phi must be a permutation of the state indices")
    if sorted(psi.tolist()) != list(range(mdp.nA)):
        raise ValueError("psi must be a permutation of the action indices")
    P2 = np.empty_like(mdp.P)
    P2[np.ix_(phi, psi, phi)] = mdp.P
    R2 = np.empty_like(mdp.R)
    R2[np.ix_(phi, psi)] = mdp.R
    p2 = np.empty_like(mdp.p0)
    p2[phi] = mdp.p0
    dS2 = np.empty_like(mdp.dS)
    dS2[np.ix_(phi, phi)] = mdp.dS
    dA2 = np.empty_like(mdp.dA)
    dA2[np.ix_(psi, psi)] = mdp.dA
    sf2 = None
    if mdp.state_features is not None:
        rows = mdp.state_features
        if state_feature_map is not None:
            rows = np.array([state_feature_map(r) for r in rows], dtype=float)
        sf2 = np.empty_like(rows)
        sf2[phi] = rows
    af2 = None
    if mdp.action_features is not None:
        rows = mdp.action_features
        if action_feature_map is not None:
            rows = np.array([action_feature_map(r) for r in rows], dtype=float)
        af2 = np.empty_like(rows)
        af2[psi] = rows
    return TabularMetricMDP(
        P=P2, R=R2, p0=p2, gamma=mdp.gamma, dS=dS2, dA=dA2,
        state_features=sf2, action_features=af2,
        absorbing=frozenset(int(phi[s]) for s in mdp.absorbing),
    )


def occupancy_space(
    mdp: TabularMetricMDP, occ: OccupancyMeasure, prune_tol: float = 1e-12
) -> tuple[MetricMeasureSpace, np.ndarray]:
    """Metric measure space of an occupancy measure.

    The occupancy is scaled by (1 - gamma) to a probability measure and
    atoms below ``prune_tol`` are dropped (couplings with zero-mass atoms
    are degenerate). Returns the space plus the flat (s * nA + a) indices
    of the surviving atoms.
    """
    w = occ.rho.ravel() * (1.0 - mdp.gamma)
    keep = np.flatnonzero(w > prune_tol)
    if keep.size == 0:
        raise ValueError("occupancy measure has no atoms above the pruning threshold")
    d = product_metric(mdp.dS, mdp.dA)[np.ix_(keep, keep)]
    mass = w[keep] / w[keep].sum()
    return MetricMeasureSpace(d, mass), keep


def gw_between_policies(
    mdp_e: TabularMetricMDP,
    pi_e: Policy,
    mdp_a: TabularMetricMDP,
    pi_a: Policy,
    opts: GWOpts | None = None,
) -> GWSolveResult:
    """GW distance between two policies via their occupancy spaces."""
    if opts is None:
        opts = GWOpts(include_identity=True)
    space_e, _ = occupancy_space(mdp_e, occupancy(mdp_e, pi_e))
    space_a, _ = occupancy_space(mdp_a, occupancy(mdp_a, pi_a))
    return solve_gw(space_e, space_a, opts)


@dataclass(frozen=True)
class IsometryCheck:
    """Result of an isometry search between two finite metric supports."""

    isometric: bool
    witness: tuple | None
    method: str

    def __bool__(self) -> bool:
        return self.isometric


class _Budget(Exception):
    pass


def is_isometric(
    space_x: MetricMeasureSpace,
    space_y: MetricMeasureSpace,
    tol: float = 1e-6,
    node_budget: int = math.factorial(9),
    gw_opts: GWOpts | None = None,
) -> IsometryCheck:
    """Search for a bijection of the supports preserving all pairwise distances.

    A depth-first search with distance pruning finds an exact witness; it
    gives up after ``node_budget`` candidate assignments (the default
    matches enumerating all bijections of 9 atoms) and falls back to
    testing GW ~ 0 between the uniformly-weighted supports, which by the
    metric property is an equivalent criterion.
    """
    if space_x.n != space_y.n:
        return IsometryCheck(False, None, "size_mismatch")
    n = space_x.n
    DX, DY = space_x.dist, space_y.dist
    mapping = np.full(n, -1, dtype=int)
    used = np.zeros(n, dtype=bool)
    nodes = 0

    def extend(k: int) -> bool:
        nonlocal nodes
        if k == n:
            return True
        for cand in range(n):
            if used[cand]:
                continue
            nodes += 1
            if nodes > node_budget:
                raise _Budget
            ok = True
            for i in range(k):
                if abs(DX[k, i] - DY[cand, mapping[i]]) > tol:
                    ok = False
                    break
            if ok:
                mapping[k] = cand
                used[cand] = True
                if extend(k + 1):
                    return True
                used[cand] = False
                mapping[k] = -1
        return False

    try:
        found = extend(0)
        return IsometryCheck(found, tuple(mapping.tolist()) if found else None, "exact")
    except _Budget:
        pass
    if gw_opts is None:
        gw_opts = GWOpts(
            exhaustive=n <= 7, restarts=16, include_identity=True, seed=0
        )
    uniform = np.full(n, 1.0 / n)
    res = solve_gw(
        MetricMeasureSpace(DX, uniform), MetricMeasureSpace(DY, uniform), gw_opts
    )
    return IsometryCheck(bool(res.gw_sq <= tol), None, "gw_proxy")


def _sample(rng: np.random.Generator, probs: np.ndarray) -> int:
    c = np.cumsum(probs)
    return int(min(np.searchsorted(c, rng.random(), side="right"), probs.size - 1))


def rollout(
    mdp: TabularMetricMDP,
    policy: Policy,
    horizon: int,
    seed: int | np.random.Generator = 0,
) -> Trajectory:
    """Sample one episode, stopping early on entering an absorbing state."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    s = _sample(rng, mdp.p0)
    steps = []
    for t in range(horizon):
        if s in mdp.absorbing:
            break
        a = _sample(rng, policy.pi[s])
        steps.append(
            Step(
                state=mdp.state_feature(s),
                action=mdp.action_feature(a),
                t=t,
                env_reward=float(mdp.R[s, a]),
            )
        )
        s = _sample(rng, mdp.P[s, a])
    if not steps:
        raise ValueError("initial state is absorbing; rollout would be empty")
    return Trajectory(steps)


# --- JSON wire format ---------------------------------------------------

def mdp_to_json(mdp: TabularMetricMDP) -> str:
    return json.dumps(
        {
            "nS": mdp.nS,
            "nA": mdp.nA,
            "P": mdp.P.tolist(),
            "R": mdp.R.tolist(),
            "p0": mdp.p0.tolist(),
            "gamma": mdp.gamma,
            "dS": mdp.dS.tolist(),
            "dA": mdp.dA.tolist(),
            "state_features": None
            if mdp.state_features is None
            else mdp.state_features.tolist(),
            "action_features": None
            if mdp.action_features is None
            else mdp.action_features.tolist(),
            "absorbing": sorted(mdp.absorbing),
        }
    )


def mdp_from_json(text: str) -> TabularMetricMDP:
    obj = json.loads(text)
    try:
        mdp = TabularMetricMDP(
            P=np.asarray(obj["P"], dtype=float),
            R=np.asarray(obj["R"], dtype=float),
            p0=np.asarray(obj["p0"], dtype=float),
            gamma=float(obj["gamma"]),
            dS=np.asarray(obj["dS"], dtype=float),
            dA=np.asarray(obj["dA"], dtype=float),
            state_features=None
            if obj.get("state_features") is None
            else np.asarray(obj["state_features"], dtype=float),
            action_features=None
            if obj.get("action_features") is None
            else np.asarray(obj["action_features"], dtype=float),
            absorbing=frozenset(obj.get("absorbing", ())),
        )
    except KeyError as e:
        raise ValueError(f"MDP JSON missing field {e}") from e
    if mdp.nS != int(obj["nS"]) or mdp.nA != int(obj["nA"]):
        raise ValueError("declared nS/nA do not match table shapes")
    return mdp
