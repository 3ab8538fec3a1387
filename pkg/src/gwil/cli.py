"""Command-line front end: build environments, solve, train, export.

Every run directory receives a manifest recording the command, config,
seed, and input hashes; rerunning with identical inputs reproduces the
numeric outputs byte for byte (wall-clock fields aside). Exit codes:
0 ok, 2 input error, 3 infeasible input, 4 training aborted.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import env_suite, gw_solver, gwil_trainer, mmspace, tabular_mdp

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_TRAINING = 4


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise CLIError(EXIT_INPUT, f"cannot read {path}: {e}") from e


def _load_json(path: str):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise CLIError(EXIT_INPUT, f"{path} is not valid JSON: {e}") from e


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _manifest(
    out_dir: Path, command: list[str], config: dict, seed, inputs: list[str],
    outputs: list[str], wall_ms: float,
):
    _write(
        out_dir / "manifest.json",
        json.dumps(
            {
                "command": command,
                "config": config,
                "seed": seed,
                "input_hashes": {p: _sha256(p) for p in inputs},
                "outputs": outputs,
                "wall_ms": wall_ms,
            },
            indent=2,
        )
        + "\n",
    )


def _load_space(path: str) -> mmspace.MetricMeasureSpace:
    obj = _load_json(path)
    if not isinstance(obj, dict):
        raise CLIError(EXIT_INPUT, f"{path}: expected a JSON object")
    try:
        if "steps" in obj:
            return mmspace.from_trajectory(mmspace.trajectory_from_json(json.dumps(obj)))
        if "dist" in obj:
            return mmspace.space_from_json(json.dumps(obj))
    except (KeyError, TypeError) as e:
        raise CLIError(EXIT_INPUT, f"{path}: malformed space ({e})") from e
    except ValueError as e:
        raise CLIError(EXIT_INFEASIBLE, f"{path}: infeasible space ({e})") from e
    raise CLIError(EXIT_INPUT, f"{path}: neither a trajectory nor a distance-matrix space")


def _threads() -> int:
    raw = os.environ.get("GWIL_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return max(1, n) if n else max(1, min(4, os.cpu_count() or 1))


# --- subcommands ---------------------------------------------------------

def cmd_gw(args) -> int:
    x = _load_space(args.space_x)
    y = _load_space(args.space_y)
    opts = gw_solver.GWOpts(
        restarts=args.restarts, seed=args.seed, max_iters=args.max_iters,
        exhaustive=args.exhaustive, include_identity=args.include_identity,
    )
    t0 = time.perf_counter()
    try:
        if args.epsilon is not None:
            res = gw_solver.solve_gw_entropic(x, y, args.epsilon, opts)
        else:
            res = gw_solver.solve_gw(x, y, opts)
    except ValueError as e:
        raise CLIError(EXIT_INFEASIBLE, f"solve failed: {e}") from e
    wall = (time.perf_counter() - t0) * 1e3
    print(repr(res.gw_sq))
    out = Path(args.out_dir)
    _write(out / "coupling.json", json.dumps(res.to_json_dict()) + "\n")
    _write(out / "objective_history.csv", res.history_csv())
    _manifest(
        out, ["gw", args.space_x, args.space_y],
        {
            "restarts": args.restarts, "seed": args.seed, "epsilon": args.epsilon,
            "max_iters": args.max_iters, "exhaustive": args.exhaustive,
            "include_identity": args.include_identity,
        },
        args.seed, [args.space_x, args.space_y],
        ["coupling.json", "objective_history.csv"], wall,
    )
    return EXIT_OK


def _train_config(args) -> gwil_trainer.TrainConfig:
    base = {}
    if args.config:
        obj = _load_json(args.config)
        if not isinstance(obj, dict):
            raise CLIError(EXIT_INPUT, f"{args.config}: expected a JSON object")
        base.update(obj)
    if "gw_opts" in base:
        base["gw_opts"] = gw_solver.GWOpts(**base["gw_opts"])
    for name in ("episodes", "horizon", "beta"):
        val = getattr(args, name, None)
        if val is not None:
            base[name] = val
    if args.beta is not None:
        base["include_env_reward"] = True
    if args.restarts is not None:
        opts = base.get("gw_opts", gwil_trainer.TrainConfig().gw_opts)
        base["gw_opts"] = dataclasses.replace(opts, restarts=args.restarts)
    try:
        return gwil_trainer.TrainConfig(**base)
    except (TypeError, ValueError) as e:
        raise CLIError(EXIT_INPUT, f"bad training config: {e}") from e


def _config_dict(cfg: gwil_trainer.TrainConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["gw_opts"] = dataclasses.asdict(cfg.gw_opts)
    d["gw_opts"]["initial_couplings"] = None  # not representable in JSON config
    return d


def _run_one_seed(mdp, traj, cfg, baseline, out_dir: Path, command, inputs):
    t0 = time.perf_counter()
    try:
        if baseline == "wasserstein":
            policy, log = gwil_trainer.train_wasserstein_baseline(mdp, traj, cfg)
        else:
            policy, log = gwil_trainer.train_gwil(mdp, traj, cfg)
    except Exception as e:
        raise CLIError(EXIT_TRAINING, f"training aborted (seed {cfg.seed}): {e}") from e
    stats = gwil_trainer.evaluate(
        mdp, policy, n_rollouts=10, seed=cfg.seed, horizon=cfg.horizon
    )
    wall = (time.perf_counter() - t0) * 1e3
    _write(out_dir / "trainlog.csv", log.to_csv())
    _write(out_dir / "policy.json", json.dumps({"pi": policy.pi.tolist()}) + "\n")
    _write(
        out_dir / "eval.json",
        json.dumps(
            {
                "mean_return": stats.mean_return,
                "std": stats.std,
                "success_rate": stats.success_rate,
            }
        )
        + "\n",
    )
    _manifest(
        out_dir, command, _config_dict(cfg), cfg.seed, inputs,
        ["trainlog.csv", "policy.json", "eval.json"], wall,
    )
    return stats


def cmd_imitate(args) -> int:
    try:
        mdp = tabular_mdp.mdp_from_json(_read_text(args.env))
    except ValueError as e:
        raise CLIError(EXIT_INPUT, f"{args.env}: {e}") from e
    try:
        traj = mmspace.trajectory_from_json(_read_text(args.expert_traj))
    except (ValueError, KeyError, TypeError) as e:
        raise CLIError(EXIT_INPUT, f"{args.expert_traj}: {e}") from e
    cfg = _train_config(args)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    seeds = [cfg.seed] if args.seeds is None else [int(s) for s in args.seeds.split(",")]
    out = Path(args.out_dir)
    command = ["imitate", args.env, args.expert_traj, "--baseline", args.baseline]
    inputs = [args.env, args.expert_traj] + ([args.config] if args.config else [])
    t0 = time.perf_counter()
    jobs = {
        seed: (dataclasses.replace(cfg, seed=seed), out / f"seed_{seed}") for seed in seeds
    }
    results = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=_threads()) as pool:
        futures = {
            seed: pool.submit(
                _run_one_seed, mdp, traj, scfg, args.baseline, sdir, command, inputs
            )
            for seed, (scfg, sdir) in jobs.items()
        }
        for seed, fut in futures.items():
            results[seed] = fut.result()
    wall = (time.perf_counter() - t0) * 1e3
    _manifest(
        out, command, _config_dict(cfg), seeds, inputs,
        [f"seed_{s}/trainlog.csv" for s in seeds], wall,
    )
    for seed in seeds:
        st = results[seed]
        print(
            f"seed {seed}: mean_return={st.mean_return!r} "
            f"success_rate={st.success_rate!r}"
        )
    return EXIT_OK


def cmd_make_env(args) -> int:
    text = _read_text(args.spec)
    try:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError:
            obj = None
        if obj is not None:
            spec = env_suite.maze_spec_from_json(text)
        else:
            spec = env_suite.parse_ascii_maze(text)
    except env_suite.DisconnectedMazeError as e:
        raise CLIError(EXIT_INFEASIBLE, f"{args.spec}: {e}") from e
    except (ValueError, KeyError, TypeError) as e:
        raise CLIError(EXIT_INPUT, f"{args.spec}: {e}") from e
    if args.sparse:
        try:
            spec = dataclasses.replace(spec, sparse=True)
        except env_suite.DisconnectedMazeError as e:  # pragma: no cover
            raise CLIError(EXIT_INFEASIBLE, str(e)) from e
    out = Path(args.out_dir)
    t0 = time.perf_counter()
    mdp = env_suite.build_maze(spec, gamma=args.gamma)
    outputs = ["env.json"]
    _write(out / "env.json", tabular_mdp.mdp_to_json(mdp) + "\n")
    if args.reflect:
        reflected, phi, psi = env_suite.reflect_maze(spec)
        _, phi2, _ = env_suite.reflect_maze(reflected)
        _write(
            out / "env_reflected.json",
            tabular_mdp.mdp_to_json(env_suite.build_maze(reflected, gamma=args.gamma)) + "\n",
        )
        _write(
            out / "isometry.json",
            json.dumps(
                {
                    "phi": phi.tolist(),
                    "psi": psi.tolist(),
                    "phi_involution": bool(np.array_equal(phi2[phi], np.arange(phi.size))),
                }
            )
            + "\n",
        )
        outputs += ["env_reflected.json", "isometry.json"]
    _manifest(
        out, ["make-env", args.spec],
        {"gamma": args.gamma, "reflect": args.reflect, "sparse": args.sparse},
        None, [args.spec], outputs, (time.perf_counter() - t0) * 1e3,
    )
    print(out / "env.json")
    return EXIT_OK


def cmd_oracle(args) -> int:
    try:
        mdp = tabular_mdp.mdp_from_json(_read_text(args.env))
    except ValueError as e:
        raise CLIError(EXIT_INPUT, f"{args.env}: {e}") from e
    t0 = time.perf_counter()
    policy, value = tabular_mdp.value_iteration(mdp)
    traj = tabular_mdp.rollout(mdp, policy, horizon=args.horizon, seed=args.seed)
    out = Path(args.out_dir)
    _write(out / "policy.json", json.dumps({"pi": policy.pi.tolist()}) + "\n")
    _write(out / "oracle.json", json.dumps({"optimal_return": value}) + "\n")
    _write(out / "expert_trajectory.json", mmspace.trajectory_to_json(traj) + "\n")
    _manifest(
        out, ["oracle", args.env], {"horizon": args.horizon}, args.seed,
        [args.env], ["policy.json", "oracle.json", "expert_trajectory.json"],
        (time.perf_counter() - t0) * 1e3,
    )
    print(repr(value))
    return EXIT_OK


def cmd_export(args) -> int:
    run_dir = Path(args.run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.is_file():
        raise CLIError(EXIT_INPUT, f"{run_dir}: missing manifest.json")
    if args.format != "csv":
        raise CLIError(EXIT_INPUT, f"unsupported export format {args.format!r}")
    seed_dirs = sorted(
        (d for d in run_dir.iterdir() if d.is_dir() and (d / "trainlog.csv").is_file()),
        key=lambda d: d.name,
    )
    if seed_dirs:
        logs = {d.name: gwil_trainer.TrainLog.from_csv((d / "trainlog.csv").read_text()) for d in seed_dirs}
    elif (run_dir / "trainlog.csv").is_file():
        logs = {"run": gwil_trainer.TrainLog.from_csv((run_dir / "trainlog.csv").read_text())}
    else:
        raise CLIError(EXIT_INPUT, f"{run_dir}: no trainlog.csv found")
    names = list(logs)
    episodes = max(len(lg.records) for lg in logs.values())
    cols = ("proxy_return", "env_return", "gw_sq", "eval_return")
    header = ["episode"]
    for name in names:
        header += [f"{c}_{name}" for c in cols]
    lines = [",".join(header)]
    for ep in range(episodes):
        row = [str(ep)]
        for name in names:
            recs = logs[name].records
            if ep < len(recs):
                r = recs[ep]
                row += [
                    repr(r.proxy_return), repr(r.env_return), repr(r.gw_sq),
                    "" if np.isnan(r.eval_return) else repr(r.eval_return),
                ]
            else:
                row += ["", "", "", ""]
        lines.append(",".join(row))
    out_path = Path(args.out) if args.out else run_dir / "curves.csv"
    _write(out_path, "\n".join(lines) + "\n")
    print(out_path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gwil", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gw", help="Gromov-Wasserstein distance between two spaces")
    g.add_argument("space_x")
    g.add_argument("space_y")
    g.add_argument("--out-dir", default="gw_out")
    g.add_argument("--restarts", type=int, default=5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--max-iters", type=int, default=500)
    g.add_argument("--epsilon", type=float, default=None, help="entropic regularization")
    g.add_argument("--exhaustive", action="store_true")
    g.add_argument(
        "--include-identity", action=argparse.BooleanOptionalAction, default=True,
        help="seed the restart set with the diagonal coupling when shapes allow",
    )
    g.set_defaults(func=cmd_gw)

    im = sub.add_parser("imitate", help="train an imitation policy")
    im.add_argument("env")
    im.add_argument("expert_traj")
    im.add_argument("--config", default=None, help="TrainConfig JSON")
    im.add_argument("--out-dir", default="imitate_out")
    im.add_argument("--baseline", choices=("gw", "wasserstein"), default="gw")
    im.add_argument("--seed", type=int, default=None)
    im.add_argument("--seeds", default=None, help="comma-separated seed list")
    im.add_argument("--episodes", type=int, default=None)
    im.add_argument("--horizon", type=int, default=None)
    im.add_argument("--beta", type=float, default=None)
    im.add_argument("--restarts", type=int, default=None)
    im.set_defaults(func=cmd_imitate)

    me = sub.add_parser("make-env", help="build a maze MDP from a spec")
    me.add_argument("spec", help="MazeSpec JSON or ASCII maze file")
    me.add_argument("--out-dir", default="env_out")
    me.add_argument("--reflect", action="store_true")
    me.add_argument("--sparse", action="store_true")
    me.add_argument("--gamma", type=float, default=0.99)
    me.set_defaults(func=cmd_make_env)

    orc = sub.add_parser("oracle", help="optimal policy, value, expert trajectory")
    orc.add_argument("env")
    orc.add_argument("--out-dir", default="oracle_out")
    orc.add_argument("--horizon", type=int, default=200)
    orc.add_argument("--seed", type=int, default=0)
    orc.set_defaults(func=cmd_oracle)

    ex = sub.add_parser("export", help="consolidate run logs into one CSV")
    ex.add_argument("run_dir")
    ex.add_argument("--format", default="csv")
    ex.add_argument("--out", default=None)
    ex.set_defaults(func=cmd_export)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CLIError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
