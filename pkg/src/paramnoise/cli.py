"""Command-line experiment driver.

Subcommands:

  toy               seed sweeps of the 2-D benchmark, one cell per
                    (reward, strategy, sigma^2) combination
  rl                actor-critic training runs over a seed list
  baseline-compare  the rl runs for the switching strategy and the
                    isotropic adaptive-sigma baseline, plus a joint summary

Settings come from defaults, then an optional ``--config`` file of
``key = value`` lines, then command-line flags. ``--dry-run`` prints the
resolved settings in that same file format and exits.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from paramnoise import noise, toybench
from paramnoise.envs import EnvNotFoundError, make_env
from paramnoise.rl import trainer

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ENV_NOT_FOUND = 3
EXIT_IO = 4


class ConfigParseError(ValueError):
    pass


# --- typed settings -----------------------------------------------------------


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _words(text: str) -> list[str]:
    return [x.strip().lower() for x in text.split(",") if x.strip()]


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "auto", "none") else float(text)


def _json_obj(text: str) -> dict:
    obj = json.loads(text) if text.strip() else {}
    if not isinstance(obj, dict):
        raise ValueError("expected a JSON object")
    return obj


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "auto"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dict):
        return json.dumps(value, sort_keys=True)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class Setting:
    key: str
    parse: Callable[[str], Any]
    default: str
    help: str


TOY_SETTINGS = [
    Setting("strategy", _words, "pro", "comma list of fv, ac, pro"),
    Setting("reward", _words, "dense", "comma list of dense, sparse"),
    Setting("sigma_sq", _floats, "1.0", "comma list of fixed noise variances"),
    Setting("K", int, "10", "episodes per update"),
    Setting("lr", float, "0.05", "gradient step size"),
    Setting("h", float, "8.0", "weight sharpness"),
    Setting("h2", float, "10.0", "switching sharpness"),
    Setting("max_steps", int, "50000", "update budget per seed"),
    Setting("tol", float, "0.01", "success radius"),
    Setting("seeds", int, "100", "number of seeds"),
    Setting("first_seed", int, "0", "first seed of the sweep"),
    Setting("sparse_radius_sq", float, repr(toybench.SPARSE_RADIUS_SQ), "squared radius of the sparse reward support"),
    Setting("theta_init", _floats, "0.0,0.0", "start point"),
    Setting("c", _floats, "3.0,3.0", "optimum"),
    Setting("trajectory", _bool, "false", "also write theta/perturbation snapshots"),
    Setting("jobs", int, "1", "worker processes"),
    Setting("out", str, "results/toy", "output directory"),
]

RL_SETTINGS = [
    Setting("env", str, "sparse-cartpole-swingup", "environment name"),
    Setting("env_overrides", _json_obj, "{}", "JSON object of environment parameters"),
    Setting("strategy", _words, "pro", "comma list of fv, ac, pro, plappert"),
    Setting("seeds", int, "10", "number of seeds"),
    Setting("first_seed", int, "0", "first seed"),
    Setting("epochs", int, "20", "training epochs"),
    Setting("episodes_per_epoch", int, "10", "episodes per epoch"),
    Setting("hidden", _ints, "64,64", "hidden layer widths"),
    Setting("layer_norm", _bool, "true", "layer normalization on hidden layers"),
    Setting("lr_actor", float, "0.0001", "actor learning rate"),
    Setting("lr_critic", float, "0.001", "critic learning rate"),
    Setting("gamma", float, "0.99", "discount"),
    Setting("tau", float, "0.01", "soft target update rate"),
    Setting("batch", int, "64", "minibatch size"),
    Setting("critic_l2", float, "0.01", "L2 penalty on critic hidden weights"),
    Setting("buffer_capacity", int, "100000", "replay capacity"),
    Setting("warmup_steps", int, "1000", "environment steps before training"),
    Setting("train_every", int, "1", "environment steps per gradient step"),
    Setting("h", float, "8.0", "weight sharpness"),
    Setting("h2", float, "10.0", "switching sharpness"),
    Setting("K", int, "10", "episodes per noise update"),
    Setting("sigma_init", _opt_float, "auto", "initial sigma (auto: 0.2 dense, 0.6 sparse)"),
    Setting("delta", _opt_float, "auto", "target action distance (auto: sigma_init)"),
    Setting("distance_batch", int, "64", "replay states for the action distance"),
    Setting("eval_clean", _bool, "false", "one unperturbed episode per epoch"),
    Setting("checkpoint", _bool, "false", "save a checkpoint per seed"),
    Setting("jobs", int, "1", "worker processes"),
    Setting("out", str, "results/rl", "output directory"),
]

SETTINGS = {"toy": TOY_SETTINGS, "rl": RL_SETTINGS, "baseline-compare": RL_SETTINGS}


def read_config_file(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as f:
        for n, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigParseError(f"{path}:{n}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def resolve(mode: str, file_values: dict[str, str], flag_values: dict[str, str]) -> dict[str, Any]:
    settings = SETTINGS[mode]
    known = {s.key for s in settings}
    raw = {s.key: s.default for s in settings}
    file_values = dict(file_values)
    file_mode = file_values.pop("mode", mode)
    if file_mode != mode:
        raise ConfigParseError(f"config file is for mode {file_mode!r}, not {mode!r}")
    for source in (file_values, flag_values):
        for key, value in source.items():
            if key not in known:
                raise ConfigParseError(f"unknown setting {key!r} for {mode}")
            raw[key] = value
    cfg = {}
    for s in settings:
        try:
            cfg[s.key] = s.parse(raw[s.key])
        except (ValueError, json.JSONDecodeError) as e:
            raise ConfigParseError(f"bad value for {s.key}: {raw[s.key]!r} ({e})") from None
    _validate(mode, cfg)
    return cfg


def _validate(mode: str, cfg: dict) -> None:
    allowed = {"fv", "ac", "pro"} if mode == "toy" else {"fv", "ac", "pro", "plappert"}
    bad = [s for s in cfg["strategy"] if s not in allowed]
    if bad or not cfg["strategy"]:
        raise ConfigParseError(f"strategy must be a list drawn from {sorted(allowed)}")
    if cfg["seeds"] < 1 or cfg["jobs"] < 1:
        raise ConfigParseError("seeds and jobs must be at least 1")
    if mode == "toy":
        if not cfg["reward"] or any(r not in ("dense", "sparse") for r in cfg["reward"]):
            raise ConfigParseError("reward must be a list drawn from dense, sparse")
        if not cfg["sigma_sq"] or min(cfg["sigma_sq"]) <= 0:
            raise ConfigParseError("sigma_sq values must be positive")
        if len(cfg["theta_init"]) != 2 or len(cfg["c"]) != 2:
            raise ConfigParseError("theta_init and c need two components")
        try:
            _toy_config(cfg, cfg["strategy"][0], cfg["reward"][0], cfg["sigma_sq"][0]).validate()
        except toybench.ConfigInvalidError as e:
            raise ConfigParseError(str(e)) from None
    else:
        try:
            _train_config(cfg, cfg["strategy"][0], cfg["first_seed"]).validate()
        except (ValueError, TypeError) as e:
            raise ConfigParseError(str(e)) from None


def format_config(mode: str, cfg: dict) -> str:
    lines = [f"mode = {mode}"]
    lines += [f"{s.key} = {_fmt(cfg[s.key])}" for s in SETTINGS[mode]]
    return "\n".join(lines) + "\n"


# --- output -------------------------------------------------------------------


def f9(x: float) -> str:
    return f"{x:.9g}"


class Outputs:
    """Collects files in memory and writes them atomically on ``commit``.

    Nothing touches the output directory until every result is ready, and
    each file is written to a temporary name and renamed into place.
    """

    def __init__(self, directory: str):
        self.directory = Path(directory)
        self.files: dict[str, str | bytes] = {}

    def add(self, name: str, text: str | bytes) -> None:
        self.files[name] = text

    def add_csv(self, name: str, header, rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self.add(name, buf.getvalue())

    def commit(self) -> list[Path]:
        self.directory.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in self.files.items():
            final = self.directory / name
            fd, tmp = tempfile.mkstemp(dir=self.directory, prefix="." + name, suffix=".tmp")
            try:
                binary = isinstance(text, bytes)
                with os.fdopen(fd, "wb" if binary else "w", **({} if binary else {"newline": ""})) as f:
                    f.write(text)
                os.replace(tmp, final)
            except BaseException:
                with contextlib.suppress(OSError):
                    os.unlink(tmp)
                raise
            written.append(final)
        return written


def check_writable(directory: str) -> None:
    """Fail early, before any work, if ``directory`` cannot be created or written."""
    path = Path(directory)
    probe = path
    while not probe.exists():
        probe = probe.parent
    if not probe.is_dir() or not os.access(probe, os.W_OK | os.X_OK):
        raise OSError(f"output directory {directory!r} is not writable")


# --- toy ------------------------------------------------------------------------


def _toy_config(cfg: dict, strategy: str, reward: str, sigma_sq: float) -> toybench.ToyConfig:
    return toybench.ToyConfig(
        strategy=strategy,
        sparse=reward == "sparse",
        sigma_fix_sq=sigma_sq,
        K=cfg["K"],
        lr=cfg["lr"],
        h=cfg["h"],
        h2=cfg["h2"],
        max_steps=cfg["max_steps"],
        tol=cfg["tol"],
        theta_init=tuple(cfg["theta_init"]),
        c=tuple(cfg["c"]),
        sparse_radius_sq=cfg["sparse_radius_sq"],
        record_trajectory=cfg["trajectory"],
    )


TOY_SEED_FIELDS = ("seed", "moved", "optimized", "steps", "distance")
TOY_SUMMARY_FIELDS = (
    "reward", "strategy", "sigma_sq", "n", "steps_mean", "steps_std", "distance_mean", "distance_std", "moved", "optimized"
)


def toy_cell_name(reward: str, strategy: str, sigma_sq: float) -> str:
    return f"toy_{reward}_{strategy}_{sigma_sq:g}"


def toy_seed_rows(results: list[toybench.ToyResult]):
    return [
        [r.seed, int(r.moved), int(r.optimized), "" if r.steps_to_optimize is None else r.steps_to_optimize, f9(r.final_distance)]
        for r in results
    ]


def stats_from_seed_rows(rows: list[dict]) -> toybench.SweepStats:
    """Recompute a summary row from a per-seed CSV."""
    steps = np.array([float(r["steps"]) for r in rows if r["optimized"] == "1"])
    dist = np.array([float(r["distance"]) for r in rows])
    return toybench.SweepStats(
        n=len(rows),
        moved=sum(r["moved"] == "1" for r in rows),
        optimized=sum(r["optimized"] == "1" for r in rows),
        steps_mean=float(steps.mean()) if steps.size else math.nan,
        steps_std=float(steps.std()) if steps.size else math.nan,
        distance_mean=float(dist.mean()),
        distance_std=float(dist.std()),
    )


def toy_table(rows: list[tuple[str, str, float, toybench.SweepStats]]) -> str:
    out = [f"{'':7s}{'':10s}{'Step when optimized':>24s}{'Distance':>24s}{'Move':>6s}{'Optimized':>10s}"]
    for reward in ("dense", "sparse"):
        block = [r for r in rows if r[0] == reward]
        if not block:
            continue
        out.append(reward.capitalize())
        for _, strategy, s2, st in block:
            label = f"{strategy.upper() if strategy != 'pro' else 'Pro'}:{s2:.1f}"
            steps = "-" if st.optimized == 0 else f"{st.steps_mean:.2e} ± {st.steps_std:.2e}"
            dist = f"{st.distance_mean:.2e} ± {st.distance_std:.2e}"
            out.append(f"{'':7s}{label:10s}{steps:>24s}{dist:>24s}{st.moved:>6d}{st.optimized:>10d}")
    return "\n".join(out) + "\n"


def run_toy_experiment(cfg: dict, log=print) -> Outputs:
    outs = Outputs(cfg["out"])
    summary = []
    for reward in cfg["reward"]:
        for strategy in cfg["strategy"]:
            for s2 in cfg["sigma_sq"]:
                base = _toy_config(cfg, strategy, reward, s2)
                stats, results = toybench.run_sweep(base, cfg["seeds"], cfg["first_seed"], cfg["jobs"])
                name = toy_cell_name(reward, strategy, s2)
                seed_rows = toy_seed_rows(results)
                outs.add_csv(name + ".csv", TOY_SEED_FIELDS, seed_rows)
                # summary is recomputed from the serialized rows so the two files always agree
                parsed = list(csv.DictReader(io.StringIO(outs.files[name + ".csv"])))
                stats = stats_from_seed_rows(parsed)
                summary.append((reward, strategy, s2, stats))
                if cfg["trajectory"]:
                    outs.add_csv(name + "_trajectory.csv", TRAJECTORY_FIELDS, trajectory_rows(results))
                log(f"{name}: optimized {stats.optimized}/{stats.n}")
    outs.add_csv(
        "toy_summary.csv",
        TOY_SUMMARY_FIELDS,
        [
            [rw, stg, f9(s2), st.n, f9(st.steps_mean), f9(st.steps_std), f9(st.distance_mean), f9(st.distance_std), st.moved, st.optimized]
            for rw, stg, s2, st in summary
        ],
    )
    outs.add("toy_summary.txt", toy_table(summary))
    return outs


TRAJECTORY_FIELDS = ("seed", "step", "kind", "index", "x", "y")


def trajectory_rows(results):
    rows = []
    for r in results:
        for step, (theta, batch) in enumerate(r.trajectory or []):
            rows.append([r.seed, step, "theta", 0, f9(theta[0]), f9(theta[1])])
            rows += [[r.seed, step, "perturbed", k, f9(p[0]), f9(p[1])] for k, p in enumerate(batch)]
    return rows


# --- rl -------------------------------------------------------------------------


def _train_config(cfg: dict, strategy: str, seed: int) -> trainer.TrainConfig:
    return trainer.TrainConfig(
        env=cfg["env"],
        env_overrides=dict(cfg["env_overrides"]),
        strategy=strategy,
        seed=seed,
        epochs=cfg["epochs"],
        episodes_per_epoch=cfg["episodes_per_epoch"],
        hidden=tuple(cfg["hidden"]),
        layer_norm=cfg["layer_norm"],
        lr_actor=cfg["lr_actor"],
        lr_critic=cfg["lr_critic"],
        gamma=cfg["gamma"],
        tau=cfg["tau"],
        batch=cfg["batch"],
        critic_l2=cfg["critic_l2"],
        buffer_capacity=cfg["buffer_capacity"],
        warmup_steps=cfg["warmup_steps"],
        train_every=cfg["train_every"],
        h=cfg["h"],
        h2=cfg["h2"],
        K=cfg["K"],
        sigma_init=cfg["sigma_init"],
        delta=cfg["delta"],
        distance_batch=cfg["distance_batch"],
        eval_clean=cfg["eval_clean"],
    )


@dataclass
class SeedRun:
    strategy: str
    seed: int
    curve: list[trainer.EpochRecord]
    logs: list[noise.ExplorationLog]
    checkpoint: bytes | None


def _train_one(args) -> SeedRun:
    config, want_checkpoint = args
    result = trainer.run_training(config)
    blob = None
    if want_checkpoint:
        buf = io.BytesIO()
        trainer.save_checkpoint(buf, result.state)
        blob = buf.getvalue()
    return SeedRun(config.strategy, config.seed, result.curve, result.logs, blob)


def quartiles(values) -> tuple[float, float, float]:
    q1, med, q3 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(med), float(q1), float(q3)


RL_SUMMARY_FIELDS = ("strategy", "epoch", "median", "q25", "q75", "nonzero_seeds")


def rl_summary_rows(strategy: str, runs: list[SeedRun]):
    rows = []
    for e in range(len(runs[0].curve)):
        vals = [r.curve[e].mean_return_perturbed for r in runs]
        med, q1, q3 = quartiles(vals)
        rows.append([strategy, e, f9(med), f9(q1), f9(q3), sum(v != 0 for v in vals)])
    return rows


def run_rl_experiment(cfg: dict, log=print) -> Outputs:
    try:
        make_env(cfg["env"], cfg["env_overrides"])  # EnvNotFoundError before any work
    except (TypeError, ValueError) as e:
        raise ConfigParseError(f"bad env_overrides: {e}") from None
    seeds = list(range(cfg["first_seed"], cfg["first_seed"] + cfg["seeds"]))
    jobs = [(_train_config(cfg, s, seed), cfg["checkpoint"]) for s in cfg["strategy"] for seed in seeds]
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            runs = list(pool.map(_train_one, jobs))
    else:
        runs = []
        for job in jobs:
            runs.append(_train_one(job))
            last = runs[-1].curve[-1].mean_return_perturbed if runs[-1].curve else math.nan
            log(f"{job[0].strategy} seed {job[0].seed}: final perturbed return {last:.6g}")

    outs = Outputs(cfg["out"])
    summary_rows, text = [], []
    for strategy in cfg["strategy"]:
        arm = [r for r in runs if r.strategy == strategy]
        for r in arm:
            stem = f"{strategy}_seed{r.seed}"
            outs.add_csv(
                f"curve_{stem}.csv",
                trainer.EpochRecord.FIELDS,
                [[c.epoch, f9(c.mean_return_perturbed), f9(c.mean_return_clean), c.nonzero_episodes] for c in r.curve],
            )
            outs.add_csv(
                f"exploration_{stem}.csv",
                noise.ExplorationLog.FIELDS,
                [[l.update_index, f9(l.sigma_bar), f9(l.alpha), f9(l.sigma)] for l in r.logs],
            )
            if r.checkpoint is not None:
                outs.add(f"checkpoint_{stem}.npz", r.checkpoint)
        if arm[0].curve:
            summary_rows += rl_summary_rows(strategy, arm)
            finals = [r.curve[-1].mean_return_perturbed for r in arm]
            med, q1, q3 = quartiles(finals)
            nonzero = sum(v != 0 for v in finals)
            text.append(
                f"{strategy:9s} final perturbed return median {med:.4g} IQR [{q1:.4g}, {q3:.4g}]  "
                f"nonzero seeds {nonzero}/{len(arm)}"
            )
    outs.add_csv("rl_summary.csv", RL_SUMMARY_FIELDS, summary_rows)
    outs.add("rl_summary.txt", f"env {cfg['env']}, {cfg['seeds']} seeds, {cfg['epochs']} epochs\n" + "\n".join(text) + "\n")
    return outs


# --- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paramnoise", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode, settings in SETTINGS.items():
        p = sub.add_parser(mode)
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--dry-run", action="store_true", help="print the resolved settings and exit")
        for s in settings:
            flag = "--" + s.key.replace("_", "-")
            p.add_argument(flag, dest="set_" + s.key, metavar=s.key.upper(), help=f"{s.help} (default {s.default})")
        if mode == "toy":
            p.add_argument("--sparse", dest="set_reward", action="store_const", const="sparse", help="same as --reward sparse")
            p.add_argument("--dense", dest="set_reward", action="store_const", const="dense", help="same as --reward dense")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    mode = args.mode
    flags = {k[4:]: v for k, v in vars(args).items() if k.startswith("set_") and v is not None}
    if mode == "baseline-compare" and "strategy" not in flags:
        flags["strategy"] = "pro,plappert"
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve(mode, file_values, flags)
    except ConfigParseError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"cannot read config: {e}", file=sys.stderr)
        return EXIT_IO

    if args.dry_run:
        sys.stdout.write(format_config(mode, cfg))
        return EXIT_OK

    log = lambda msg: print(msg, file=sys.stderr, flush=True)  # noqa: E731
    try:
        check_writable(cfg["out"])
        if mode == "toy":
            outs = run_toy_experiment(cfg, log)
        else:
            outs = run_rl_experiment(cfg, log)
        outs.add("config.txt", format_config(mode, cfg))
        outs.commit()
    except EnvNotFoundError as e:
        print(f"environment not found: {e.args[0]}", file=sys.stderr)
        return EXIT_ENV_NOT_FOUND
    except ConfigParseError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    for name in ("toy_summary.txt", "rl_summary.txt"):
        if name in outs.files:
            sys.stdout.write(outs.files[name])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
