"""Cross-domain imitation learning via Gromov-Wasserstein occupancy matching.

The package compares agents living in different state-action spaces by
the Gromov-Wasserstein distance between their occupancy measures, turns
optimal couplings into per-step pseudo-rewards, and trains tabular
imitation policies on them.
"""

from .env_suite import (
    DisconnectedMazeError,
    MazeSpec,
    build_chain_env,
    build_maze,
    parse_ascii_maze,
    reflect_maze,
    reflection_feature_maps,
)
from .exact_ot import solve_transport
from .gw_solver import (
    Coupling,
    GWOpts,
    GWSolveResult,
    gw_gradient,
    gw_objective,
    gw_objective_naive,
    restart_couplings,
    solve_gw,
    solve_gw_entropic,
    wasserstein_sq,
)
from .gwil_trainer import (
    EvalStats,
    TrainConfig,
    TrainLog,
    evaluate,
    first_success_episode,
    train_gwil,
    train_soft_q,
    train_wasserstein_baseline,
)
from .mmspace import (
    MetricMeasureSpace,
    Step,
    Trajectory,
    from_distance_matrix,
    from_trajectory,
    product_metric,
)
from .reward_synth import (
    PseudoRewardAssignment,
    combine_rewards,
    occupancy_rewards,
    trajectory_rewards,
)
from .tabular_mdp import (
    IsometryCheck,
    OccupancyMeasure,
    Policy,
    TabularMetricMDP,
    apply_isometry,
    gw_between_policies,
    is_isometric,
    mdp_from_json,
    mdp_to_json,
    occupancy,
    occupancy_space,
    rollout,
    value_iteration,
)

__version__ = "0.1.0"
