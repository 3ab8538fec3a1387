"""Episodic imitation training on pseudo-rewards.

Each episode: collect a rollout with the current Boltzmann policy, couple
it against the (fixed) expert episode, turn the coupling into per-step
pseudo-rewards, and run soft-Q temporal-difference updates over the
episode's transitions. Pseudo-rewards are tied to the episode whose
coupling produced them, so they are consumed on-policy and never replayed.

The same loop drives the cross-domain GW trainer, the same-domain
Wasserstein baseline, and a plain soft-Q learner on environment reward.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .exact_ot import solve_transport
from .gw_solver import GWOpts, solve_gw
from .mmspace import Step, Trajectory, from_trajectory
from .reward_synth import combine_rewards, trajectory_rewards
from .tabular_mdp import Policy, TabularMetricMDP, _sample

logger = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "EpisodeRecord",
    "TrainLog",
    "EvalStats",
    "train_gwil",
    "train_wasserstein_baseline",
    "train_soft_q",
    "evaluate",
    "first_success_episode",
]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run; all randomness flows from seed."""

    episodes: int = 500
    horizon: int = 200
    learning_rate: float = 0.5
    entropy_temp: float = 0.3
    final_entropy_temp: float = 0.02
    gw_opts: GWOpts = GWOpts(restarts=2, max_iters=100, rel_tol=1e-7)
    seed: int = 0
    include_env_reward: bool = False
    beta: float = 0.0
    eval_every: int = 10
    eval_rollouts: int = 1
    td_sweeps: int = 1
    include_T_A: bool = False
    dedup: str = "none"
    timestep_weight: float = 0.0

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be at least 1")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.entropy_temp < 0 or self.final_entropy_temp < 0:
            raise ValueError("temperatures must be nonnegative")

    def temperature(self, episode: int) -> float:
        if self.episodes <= 1:
            return self.entropy_temp
        frac = episode / (self.episodes - 1)
        return self.entropy_temp + (self.final_entropy_temp - self.entropy_temp) * frac


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    proxy_return: float
    env_return: float
    gw_sq: float
    eval_return: float  # nan on episodes without an evaluation pass
    wall_ms: float


@dataclass
class TrainLog:
    records: list[EpisodeRecord] = field(default_factory=list)

    CSV_HEADER = "episode,proxy_return,env_return,gw_sq,eval_return,wall_ms"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.records:
            ev = "" if np.isnan(r.eval_return) else repr(r.eval_return)
            lines.append(
                f"{r.episode},{r.proxy_return!r},{r.env_return!r},"
                f"{r.gw_sq!r},{ev},{r.wall_ms!r}"
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_csv(text: str) -> "TrainLog":
        lines = [ln for ln in text.splitlines() if ln]
        if not lines or lines[0] != TrainLog.CSV_HEADER:
            raise ValueError("unrecognized training-log CSV header")
        records = []
        for ln in lines[1:]:
            ep, proxy, env, gw, ev, wall = ln.split(",")
            records.append(
                EpisodeRecord(
                    episode=int(ep),
                    proxy_return=float(proxy),
                    env_return=float(env),
                    gw_sq=float(gw),
                    eval_return=float(ev) if ev else float("nan"),
                    wall_ms=float(wall),
                )
            )
        return TrainLog(records)

    def numeric_equals(self, other: "TrainLog") -> bool:
        """Equality of everything except wall-clock times."""
        if len(self.records) != len(other.records):
            return False
        for a, b in zip(self.records, other.records):
            if (a.episode, a.proxy_return, a.env_return, a.gw_sq) != (
                b.episode, b.proxy_return, b.env_return, b.gw_sq,
            ):
                return False
            if not (
                (np.isnan(a.eval_return) and np.isnan(b.eval_return))
                or a.eval_return == b.eval_return
            ):
                return False
        return True


@dataclass(frozen=True)
class EvalStats:
    mean_return: float
    std: float
    success_rate: float


def _soft_value(q_row: np.ndarray, temp: float) -> float:
    # KL-to-uniform regularized state value: the -log(nA) baseline keeps
    # all-zero Q rows at value 0, so entropy never pays for staying alive.
    if temp <= 1e-12:
        return float(q_row.max())
    return float(temp * (logsumexp(q_row / temp) - np.log(q_row.size)))


def _boltzmann(q_row: np.ndarray, temp: float) -> np.ndarray:
    if temp <= 1e-12:
        probs = np.zeros_like(q_row)
        probs[int(np.argmax(q_row))] = 1.0
        return probs
    z = (q_row - q_row.max()) / temp
    e = np.exp(z)
    return e / e.sum()


def _run_episode(mdp: TabularMetricMDP, probs_fn, horizon: int, rng):
    """Roll one episode; returns index arrays plus the absorbed flag."""
    s = _sample(rng, mdp.p0)
    states, actions, nexts = [], [], []
    absorbed = False
    for _ in range(horizon):
        if s in mdp.absorbing:
            absorbed = True
            break
        a = _sample(rng, probs_fn(s))
        s2 = _sample(rng, mdp.P[s, a])
        states.append(s)
        actions.append(a)
        nexts.append(s2)
        s = s2
    else:
        absorbed = s in mdp.absorbing
    if not states:
        raise ValueError("initial state is absorbing; episode would be empty")
    return np.array(states), np.array(actions), np.array(nexts), absorbed


def _trajectory_of(mdp: TabularMetricMDP, states, actions) -> Trajectory:
    return Trajectory(
        Step(
            state=mdp.state_feature(s),
            action=mdp.action_feature(a),
            t=t,
            env_reward=float(mdp.R[s, a]),
        )
        for t, (s, a) in enumerate(zip(states, actions))
    )


def _episode_seed(seed: int, tag: int, episode: int) -> int:
    return int(np.random.SeedSequence([seed, tag, episode]).generate_state(1)[0])


def _train(mdp: TabularMetricMDP, cfg: TrainConfig, proxy_fn) -> tuple[Policy, TrainLog]:
    """Shared episodic soft-Q loop.

    ``proxy_fn(episode, trajectory) -> (rewards, distance_sq)`` supplies
    the per-step pseudo-rewards, or None for plain environment-reward RL.
    """
    behavior_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    Q = np.zeros((mdp.nS, mdp.nA))
    log = TrainLog()
    alpha = cfg.learning_rate
    for ep in range(cfg.episodes):
        t_start = time.perf_counter()
        temp = cfg.temperature(ep)
        states, actions, nexts, _ = _run_episode(
            mdp, lambda s: _boltzmann(Q[s], temp), cfg.horizon, behavior_rng
        )
        env_rewards = mdp.R[states, actions]
        skip_update = False
        if proxy_fn is None:
            proxy_rewards = np.zeros_like(env_rewards)
            dist_sq = 0.0
            rewards = env_rewards
        else:
            traj = _trajectory_of(mdp, states, actions)
            try:
                proxy_rewards, dist_sq = proxy_fn(ep, traj)
            except Exception:
                logger.warning("episode %d: coupling solve failed, skipped", ep, exc_info=True)
                proxy_rewards = np.zeros_like(env_rewards)
                dist_sq = 0.0
                skip_update = True
            rewards = proxy_rewards
            if cfg.include_env_reward:
                rewards = combine_rewards(proxy_rewards, env_rewards, cfg.beta)
        if not skip_update:
            terminal = np.array([s2 in mdp.absorbing for s2 in nexts])
            for _ in range(cfg.td_sweeps):
                # backward through the episode so terminal values propagate
                for t in range(len(states) - 1, -1, -1):
                    s, a, s2 = states[t], actions[t], nexts[t]
                    v_next = 0.0 if terminal[t] else _soft_value(Q[s2], temp)
                    Q[s, a] += alpha * (rewards[t] + mdp.gamma * v_next - Q[s, a])
        eval_return = float("nan")
        if cfg.eval_every > 0 and (ep % cfg.eval_every == 0 or ep == cfg.episodes - 1):
            greedy = Policy.deterministic(np.argmax(Q, axis=1), mdp.nA)
            stats = evaluate(
                mdp, greedy, cfg.eval_rollouts,
                seed=_episode_seed(cfg.seed, 2, ep), horizon=cfg.horizon,
            )
            eval_return = stats.mean_return
        log.records.append(
            EpisodeRecord(
                episode=ep,
                proxy_return=float(proxy_rewards.sum()),
                env_return=float(env_rewards.sum()),
                gw_sq=float(dist_sq),
                eval_return=eval_return,
                wall_ms=(time.perf_counter() - t_start) * 1e3,
            )
        )
    return Policy.deterministic(np.argmax(Q, axis=1), mdp.nA), log


def train_gwil(
    agent_mdp: TabularMetricMDP, expert_traj: Trajectory, cfg: TrainConfig
) -> tuple[Policy, TrainLog]:
    """Cross-domain imitation: per-episode GW coupling against one expert episode.

    The expert occupancy space is built once; the agent space is rebuilt
    from each collected episode and the coupling re-solved, so the
    pseudo-rewards track the current behavior.
    """
    expert_space = from_trajectory(
        expert_traj, dedup=cfg.dedup, timestep_weight=cfg.timestep_weight
    )

    def proxy(ep: int, traj: Trajectory):
        agent_space = from_trajectory(
            traj, dedup=cfg.dedup, timestep_weight=cfg.timestep_weight
        )
        opts = replace(cfg.gw_opts, seed=_episode_seed(cfg.seed, 1, ep))
        res = solve_gw(expert_space, agent_space, opts)
        assign = trajectory_rewards(
            expert_space, agent_space, res.coupling, include_T_A=cfg.include_T_A
        )
        return assign.rewards, assign.gw_sq

    return _train(agent_mdp, cfg, proxy)


def train_wasserstein_baseline(
    agent_mdp: TabularMetricMDP, expert_traj: Trajectory, cfg: TrainConfig
) -> tuple[Policy, TrainLog]:
    """Same-domain baseline: exact linear OT on squared feature distances.

    Requires the expert features to live in the agent's feature space.
    The logged distance column holds the Wasserstein value of the episode.
    """
    expert_feats = expert_traj.features()
    agent_dim = agent_mdp.state_feature(0).size + agent_mdp.action_feature(0).size
    if expert_feats.shape[1] != agent_dim:
        raise ValueError(
            f"feature dimension mismatch: expert {expert_feats.shape[1]}, "
            f"agent domain {agent_dim}"
        )

    def proxy(ep: int, traj: Trajectory):
        agent_feats = traj.features()
        if agent_feats.shape[1] != expert_feats.shape[1]:
            raise ValueError(
                f"feature dimension mismatch: expert {expert_feats.shape[1]}, "
                f"agent {agent_feats.shape[1]}"
            )
        cost = cdist(expert_feats, agent_feats, "sqeuclidean")
        t_e, t_a = cost.shape
        value, plan = solve_transport(
            cost, np.full(t_e, 1.0 / t_e), np.full(t_a, 1.0 / t_a), validate=False
        )
        per_step = (cost * plan).sum(axis=0)
        scale = float(t_a) if cfg.include_T_A else 1.0
        return -scale * per_step, value

    return _train(agent_mdp, cfg, proxy)


def train_soft_q(agent_mdp: TabularMetricMDP, cfg: TrainConfig) -> tuple[Policy, TrainLog]:
    """Plain entropy-regularized Q-learning on the environment reward."""
    return _train(agent_mdp, cfg, None)


def evaluate(
    mdp: TabularMetricMDP,
    policy: Policy,
    n_rollouts: int,
    seed: int = 0,
    horizon: int = 200,
) -> EvalStats:
    """Discounted-return statistics of a policy; success = absorbed in time."""
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    returns = np.empty(n_rollouts)
    successes = 0
    for k in range(n_rollouts):
        states, actions, _, absorbed = _run_episode(
            mdp, lambda s: policy.pi[s], horizon, rng
        )
        rewards = mdp.R[states, actions]
        returns[k] = float(rewards @ mdp.gamma ** np.arange(len(rewards)))
        successes += int(absorbed)
    return EvalStats(
        mean_return=float(returns.mean()),
        std=float(returns.std(ddof=1)) if n_rollouts > 1 else 0.0,
        success_rate=successes / n_rollouts,
    )


def first_success_episode(log: TrainLog) -> int | None:
    """First training episode whose collected rollout picked up env reward."""
    for r in log.records:
        if r.env_return > 0:
            return r.episode
    return None
