"""Command-line front end: ``bearlab <subcommand> --config <path> [--seed N] [--out DIR] [--algo NAME]``.

Every subcommand resolves its configuration as built-in defaults, then
config-file keys, then command-line flags (``--seed``, ``--algo`` and any
number of ``--set key=value``). The resolved configuration is validated
before any work starts. All artifacts go under the output directory, which
also receives ``manifest.txt``: the code version, the resolved config and
the sha256 of every file the run wrote.

Exit codes: 0 success, 2 configuration error, 3 flagged training divergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .bear import (
    BEARConfig,
    evaluate_policy,
    load_agent,
    naive_config,
    q_vs_mc_diagnostic,
    save_agent,
    train,
    train_bc,
    write_metrics_csv,
)
from .config import ConfigError, coerce, format_value, read_kv_file
from .datasets import REGIMES, dataset_load, dataset_save, generate_dataset, meta_path
from .dcq import run_bound_sweep, sweep_pass_rates
from .envs import ENV_NAMES, EnvSpec, make_env
from .gridworld import GridworldSpec, final_error_grids, run_gridworld_experiment, write_trace_csv
from .mmd import KernelSpec, run_support_simulation
from .svg import heatmaps, line_chart

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3
ALGOS = ("bear", "bc", "naive", "bear-kl")


class Artifacts:
    """Writes files under one directory and remembers each one for the manifest."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        p = (self.root / name).resolve()
        if self.root.resolve() not in p.parents:
            raise ValueError(f"refusing to write {name!r} outside the output directory")
        p.parent.mkdir(parents=True, exist_ok=True)
        rel = p.relative_to(self.root.resolve()).as_posix()
        if rel not in self.files:
            self.files.append(rel)
        return p

    def text(self, name: str, content: str) -> None:
        self.path(name).write_text(content)

    def rows(self, name: str, header, rows) -> None:
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    def write_manifest(self, command: str, config: dict, inputs=()) -> Path:
        lines = ["bearlab-manifest 1", f"version=bearlab {__version__}", f"command={command}"]
        lines += [f"config.{k}={format_value(config[k])}" for k in sorted(config)]
        lines += [f"input {_sha256(Path(p))} {p}" for p in inputs]
        for rel in sorted(self.files):
            lines.append(f"file {_sha256(self.root / rel)} {rel}")
        path = self.root / "manifest.txt"
        path.write_text("\n".join(lines) + "\n")
        return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _num(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# configuration


GRID_DEFAULTS = {f.name: f.default for f in fields(GridworldSpec)}
BEAR_DEFAULTS = {f.name: getattr(BEARConfig(), f.name) for f in fields(BEARConfig)}

DEFAULTS: dict[str, dict] = {
    "gridworld": {
        **GRID_DEFAULTS,
        "dataset_size": 10_000,
        "iterations": 200,
        "epsilons": (0.005, 0.01, 0.02, 0.05, 0.1),
        "trace_every": 20,
        "seeds": (0, 1, 2, 3, 4),
    },
    "bounds": {
        "n_instances": 100,
        "noise_levels": (0.0, 0.05, 0.2),
        "epsilons": (0.05, 0.1, 0.2, 0.3, 0.4, 0.5),
        "discount": 0.9,
        "seeds": (0,),
    },
    "mmd-sim": {
        "p_mean": 0.0,
        "p_std": 1.0,
        "alphas": (1.5, 4.0),
        "n_min": 2,
        "n_max": 10,
        "trials": 2000,
        "kernel": KernelSpec("laplacian", (20.0,)),
        "seeds": (0,),
    },
    "gen-data": {"env": "pointmass2d", "regime": "medium", "size": 50_000, "seeds": (0,)},
    "train": {
        **BEAR_DEFAULTS,
        "algo": "bear",
        "env": "pointmass2d",
        "dataset": "",
        "regime": "medium",
        "size": 50_000,
        "steps": 10_000,
        "eval_every": 1000,
        "eval_episodes": 10,
        "seeds": (0,),
    },
    "eval": {"checkpoint": "", "env": "pointmass2d", "episodes": 10, "p_eval": 0, "deterministic": False, "seeds": (0,)},
    "diag": {"checkpoints": ("",), "env": "pointmass2d", "episodes": 10, "p_eval": 0, "seeds": (0,)},
}
ENV_COMMANDS = ("gen-data", "train", "eval", "diag")
# typed exemplars for ``env.<field>`` overrides; the values themselves come from make_env
ENV_DEFAULTS = {k: v for k, v in make_env("pendulum").to_dict().items() if k != "name"}


def resolve_config(command: str, file_values: dict[str, str], overrides: dict[str, str]) -> dict:
    """Defaults <- config file <- overrides, each value parsed to its default's type.

    Keys ``env.<field>`` override environment parameters for commands that
    take an environment.
    """
    defaults = DEFAULTS[command]
    resolved = dict(defaults)
    for source in (file_values, overrides):
        for key, raw in source.items():
            if key.startswith("env.") and command in ENV_COMMANDS:
                name = key[4:]
                if name not in ENV_DEFAULTS:
                    raise ConfigError(f"{key}: unknown environment parameter")
                default = ENV_DEFAULTS[name]
            elif key in defaults:
                default = defaults[key]
            else:
                raise ConfigError(f"{key}: unknown key for '{command}'")
            try:
                resolved[key] = coerce(default, raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None
    if not resolved.get("seeds"):
        raise ConfigError("seeds: at least one seed is required")
    return resolved


def _env_from(cfg: dict) -> EnvSpec:
    if cfg["env"] not in ENV_NAMES:
        raise ConfigError(f"env: must be one of {ENV_NAMES} (got {cfg['env']!r})")
    overrides = {k[4:]: v for k, v in cfg.items() if k.startswith("env.")}
    try:
        return make_env(cfg["env"], **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"env: {exc}") from None


def _require_file(cfg: dict, key: str, value: str) -> Path:
    if not value:
        raise ConfigError(f"{key}: a path is required")
    p = Path(value)
    if not p.is_file():
        raise ConfigError(f"{key}: file {value!r} does not exist")
    return p


def _positive(cfg: dict, *keys: str) -> None:
    for k in keys:
        if cfg[k] < 1:
            raise ConfigError(f"{k}: must be >= 1 (got {cfg[k]})")


# ---------------------------------------------------------------------------
# subcommands


@dataclass
class Plan:
    """A validated run: ``execute`` writes artifacts and returns an exit code."""

    execute: Callable[[Artifacts], int]
    inputs: list[str] = field(default_factory=list)


def plan_gridworld(cfg: dict) -> Plan:
    try:
        spec = GridworldSpec(**{k: cfg[k] for k in GRID_DEFAULTS})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"gridworld: {exc}") from None
    _positive(cfg, "dataset_size", "iterations", "trace_every")
    if not cfg["epsilons"] or min(cfg["epsilons"]) <= 0:
        raise ConfigError("epsilons: need at least one positive value")

    def execute(out: Artifacts) -> int:
        rows, wins = [], 0
        for seed in cfg["seeds"]:
            res = run_gridworld_experiment(spec, cfg["dataset_size"], tuple(cfg["epsilons"]), seed, cfg["iterations"])
            write_trace_csv(res, out.path(f"seed{seed}/trace.csv"), every=cfg["trace_every"])
            grids = final_error_grids(res)
            out.rows(
                f"seed{seed}/final_error.csv",
                ["variant", "row", "col", "abs_error"],
                [[name, r, c, _num(g[r, c])] for name, g in grids.items() for r, c in np.ndindex(g.shape)],
            )
            out.text(f"seed{seed}/heatmaps.svg", heatmaps(grids, f"|V - V*| after {cfg['iterations']} backups, seed {seed}"))
            best = res.best_constrained()
            win = best.value_error < res.variant("unconstrained").value_error and best.value_error < res.variant("behavior-eval").value_error
            wins += win
            rows += [[seed, name, _num(err), int(name == best.name)] for name, err in res.summary()]
        out.rows("summary.csv", ["seed", "variant", "value_error", "best_constrained"], rows)
        out.text("result.txt", f"best_constrained_wins={wins}\nseeds={len(cfg['seeds'])}\n")
        return EXIT_OK

    return Plan(execute)


def plan_bounds(cfg: dict) -> Plan:
    _positive(cfg, "n_instances")
    if not 0 <= cfg["discount"] < 1:
        raise ConfigError(f"discount: must lie in [0, 1) (got {cfg['discount']})")
    if not cfg["epsilons"] or any(not 0 < e <= 1 for e in cfg["epsilons"]):
        raise ConfigError("epsilons: values must lie in (0, 1]")
    if not cfg["noise_levels"] or any(x < 0 for x in cfg["noise_levels"]):
        raise ConfigError("noise_levels: values must be >= 0")

    def execute(out: Artifacts) -> int:
        rows, summary = [], []
        for seed in cfg["seeds"]:
            records = run_bound_sweep(cfg["n_instances"], tuple(cfg["noise_levels"]), tuple(cfg["epsilons"]), seed, cfg["discount"])
            for r in records:
                rows.append(
                    [seed, r.instance, r.check, _num(r.epsilon), _num(r.noise_level), _num(r.lhs), _num(r.rhs), int(r.passed), int(r.inconclusive), _num(r.rhs_corrected), int(r.passed_corrected)]
                )
            for check, rate in sorted(sweep_pass_rates(records).items()):
                summary.append([seed, check, _num(rate)])
        out.rows(
            "records.csv",
            ["seed", "instance", "check", "epsilon", "noise_level", "lhs", "rhs", "passed", "inconclusive", "rhs_corrected", "passed_corrected"],
            rows,
        )
        out.rows("summary.csv", ["seed", "check", "pass_rate"], summary)
        return EXIT_OK

    return Plan(execute)


def plan_mmd_sim(cfg: dict) -> Plan:
    _positive(cfg, "trials", "n_min")
    if cfg["n_max"] < cfg["n_min"]:
        raise ConfigError("n_max: must be >= n_min")
    if cfg["p_std"] <= 0:
        raise ConfigError("p_std: must be > 0")
    if not cfg["alphas"] or min(cfg["alphas"]) <= 0:
        raise ConfigError("alphas: values must be > 0")
    grid = tuple(range(cfg["n_min"], cfg["n_max"] + 1))

    def execute(out: Artifacts) -> int:
        summary = []
        for seed in cfg["seeds"]:
            for alpha in cfg["alphas"]:
                curves = run_support_simulation(cfg["p_mean"], cfg["p_std"], alpha, grid, cfg["trials"], cfg["kernel"], seed)
                tag = f"seed{seed}/alpha{alpha:g}"
                curves.write_csv(out.path(f"{tag}.csv"))
                series = {"MMD(P,P)": (grid, curves.self_mean), f"MMD(U(+-{alpha:g}),P)": (grid, curves.uniform_mean)}
                out.text(f"{tag}.svg", line_chart(series, f"support simulation, alpha={alpha:g}", "n", "mean MMD^2"))
                for n, d, se in zip(grid, curves.diff_mean, curves.diff_stderr):
                    summary.append([seed, f"{alpha:g}", n, _num(d), _num(se), "uniform<self" if d < 0 else "uniform>=self"])
        out.rows("summary.csv", ["seed", "alpha", "n", "diff_mean", "diff_stderr", "ordering"], summary)
        return EXIT_OK

    return Plan(execute)


def plan_gen_data(cfg: dict) -> Plan:
    env = _env_from(cfg)
    if cfg["regime"] not in REGIMES:
        raise ConfigError(f"regime: must be one of {REGIMES} (got {cfg['regime']!r})")
    _positive(cfg, "size")

    def execute(out: Artifacts) -> int:
        rows = []
        for seed in cfg["seeds"]:
            data = generate_dataset(env, cfg["regime"], cfg["size"], seed)
            name = f"{env.name}_{cfg['regime']}_seed{seed}.csv"
            path = out.path(name)
            out.path(meta_path(name).as_posix())
            dataset_save(data, path)
            rows.append([seed, name, len(data), _num(data.meta["avg_return"])])
        out.rows("summary.csv", ["seed", "file", "size", "avg_return"], rows)
        return EXIT_OK

    return Plan(execute)


def _bear_config(cfg: dict) -> BEARConfig:
    try:
        base = BEARConfig(**{k: cfg[k] for k in BEAR_DEFAULTS})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    algo = cfg["algo"]
    if algo == "bear-kl":
        return replace(base, constraint="kl")
    if algo == "naive":
        return naive_config(base)
    return base


def plan_train(cfg: dict) -> Plan:
    if cfg["algo"] not in ALGOS:
        raise ConfigError(f"algo: must be one of {ALGOS} (got {cfg['algo']!r})")
    env = _env_from(cfg)
    config = _bear_config(cfg)
    if cfg["steps"] < 0:
        raise ConfigError("steps: must be >= 0")
    _positive(cfg, "eval_every", "eval_episodes", "size")
    dataset_path = _require_file(cfg, "dataset", cfg["dataset"]) if cfg["dataset"] else None
    if dataset_path is None and cfg["regime"] not in REGIMES:
        raise ConfigError(f"regime: must be one of {REGIMES} (got {cfg['regime']!r})")
    if dataset_path is not None:
        try:
            data0 = dataset_load(dataset_path)
        except ValueError as exc:
            raise ConfigError(f"dataset: {exc}") from None
        if data0.meta.get("env") != env.name:
            raise ConfigError(f"dataset: recorded env {data0.meta.get('env')!r} does not match env {env.name!r}")

    def execute(out: Artifacts) -> int:
        rows, diverged = [], False
        for seed in cfg["seeds"]:
            data = data0 if dataset_path is not None else generate_dataset(env, cfg["regime"], cfg["size"], seed)
            tag = f"seed{seed}"
            if cfg["algo"] == "bc":
                bc = train_bc(data, env, config.behavior_epochs, seed, config.hidden, config.lr_behavior, cfg["eval_episodes"])
                nan = float("nan")
                metrics = [{"step": 0, "avg_return": bc.average_return, "critic_loss": nan, "policy_loss": bc.losses[-1] if bc.losses else nan,
                            "mmd": nan, "log_alpha": nan, "q_mean": nan, "q_mc_gap": nan}]
                agent, message, flagged = bc.agent, "", False
            else:
                res = train(data, env, config, cfg["steps"], cfg["eval_every"], seed, cfg["eval_episodes"])
                metrics, agent, message, flagged = res.metrics, res.agent, res.message, res.diverged
            out.text(f"{tag}/config.txt", "".join(f"{k}={v}\n" for k, v in config.to_dict().items()))
            write_metrics_csv(metrics, out.path(f"{tag}/metrics.csv"))
            save_agent(agent, config, out.path(f"{tag}/agent.ckpt"), {"algo": cfg["algo"], "env": env.name})
            steps = [m["step"] for m in metrics]
            out.text(f"{tag}/returns.svg", line_chart({cfg["algo"]: (steps, [m["avg_return"] for m in metrics])}, f"{cfg['algo']} on {env.name}", "step", "average return"))
            rows.append([seed, _num(metrics[-1]["avg_return"]), int(flagged), message])
            diverged |= flagged
        out.rows("summary.csv", ["seed", "final_return", "diverged", "message"], rows)
        return EXIT_DIVERGED if diverged else EXIT_OK

    return Plan(execute, [str(dataset_path)] if dataset_path else [])


def _load_checkpoint(key: str, path: str):
    _require_file({}, key, path)
    try:
        return load_agent(path)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{key}: unreadable checkpoint ({exc})") from None


def _check_env(key: str, agent, env: EnvSpec):
    if (agent.state_dim, agent.action_dim) != (env.state_dim, env.action_dim):
        raise ConfigError(f"{key}: checkpoint dimensions do not match env {env.name!r}")


def plan_eval(cfg: dict) -> Plan:
    env = _env_from(cfg)
    _positive(cfg, "episodes")
    agent, config, header = _load_checkpoint("checkpoint", cfg["checkpoint"])
    _check_env("checkpoint", agent, env)
    p_eval = cfg["p_eval"] or config.p_eval
    deterministic = cfg["deterministic"] or header.get("algo") == "bc"

    def execute(out: Artifacts) -> int:
        rows, summary = [], []
        for seed in cfg["seeds"]:
            res = evaluate_policy(agent, env, cfg["episodes"], p_eval, seed, config.discount, deterministic)
            rows += [[seed, i, _num(r)] for i, r in enumerate(res.returns)]
            summary.append([seed, _num(res.average_return)])
        out.rows("returns.csv", ["seed", "episode", "return"], rows)
        out.rows("summary.csv", ["seed", "average_return"], summary)
        return EXIT_OK

    return Plan(execute, [cfg["checkpoint"]])


def plan_diag(cfg: dict) -> Plan:
    env = _env_from(cfg)
    _positive(cfg, "episodes")
    loaded = []
    for i, path in enumerate(cfg["checkpoints"]):
        agent, config, header = _load_checkpoint(f"checkpoints[{i}]", path)
        _check_env(f"checkpoints[{i}]", agent, env)
        loaded.append((agent, config))

    def execute(out: Artifacts) -> int:
        rows, series = [], []
        for seed in cfg["seeds"]:
            for i, (agent, config) in enumerate(loaded):
                d = q_vs_mc_diagnostic(agent, env, cfg["episodes"], seed, cfg["p_eval"] or config.p_eval, config.discount)
                rows += [[seed, i, agent.step, e, _num(q), _num(mc), _num(q - mc)] for e, (q, mc) in enumerate(zip(d["q"], d["mc"]))]
                series.append([seed, i, agent.step, _num(d["mean_gap"])])
        out.rows("gaps.csv", ["seed", "checkpoint", "step", "episode", "q", "mc_return", "gap"], rows)
        out.rows("series.csv", ["seed", "checkpoint", "step", "mean_gap"], series)
        lines = {}
        for seed, _, step, gap in series:
            xs, ys = lines.setdefault(f"seed {seed}", ([], []))
            xs.append(step)
            ys.append(float(gap))
        out.text("gap.svg", line_chart(lines, "Q - Monte Carlo return", "checkpoint step", "mean gap"))
        return EXIT_OK

    return Plan(execute, list(cfg["checkpoints"]))


PLANNERS: dict[str, Callable[[dict], Plan]] = {
    "gridworld": plan_gridworld,
    "bounds": plan_bounds,
    "mmd-sim": plan_mmd_sim,
    "gen-data": plan_gen_data,
    "train": plan_train,
    "eval": plan_eval,
    "diag": plan_diag,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bearlab", description="Offline RL experiments with support-constrained backups.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in PLANNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="run a single seed (overrides 'seeds')")
        p.add_argument("--out", default=None, help="output directory (default: bearlab-out/<command>)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key; repeatable")
        if name == "train":
            p.add_argument("--algo", choices=ALGOS, help="learner (overrides 'algo')")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_values = read_kv_file(args.config) if args.config else {}
        overrides = {}
        for item in args.set:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"--set: expected KEY=VALUE, got {item!r}")
            overrides[key.strip()] = value
        if args.seed is not None:
            overrides["seeds"] = str(args.seed)
        if getattr(args, "algo", None):
            overrides["algo"] = args.algo
        cfg = resolve_config(args.command, file_values, overrides)
        plan = PLANNERS[args.command](cfg)
    except ConfigError as exc:
        print(f"bearlab {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Artifacts(Path(args.out or Path("bearlab-out") / args.command))
    out.root.mkdir(parents=True, exist_ok=True)
    code = plan.execute(out)
    manifest = out.write_manifest(args.command, cfg, plan.inputs)
    status = "diverged" if code == EXIT_DIVERGED else "ok"
    print(f"bearlab {args.command}: {status}; {len(out.files)} files, manifest {manifest}")
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
