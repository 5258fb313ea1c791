"""Command-line experiment harness.

Subcommands: train, eval, ablate, visitation, valuebias, noise-sweep.
Every run directory is self-describing (the resolved configuration is
copied into it) and every artifact is a pure function of configuration
and seed, so reruns produce identical bytes. Delimited outputs carry a
header row; floats are written with repr so they parse back exactly.
Figures render next to the delimited files they summarize.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import sys
from pathlib import Path

import numpy as np

from .agent import PolicyAdapter, Trainer, evaluate
from .checkpoint import load_trainer, save_checkpoint
from .config import (RunConfig, build_trainer, load_run_config,
                     save_run_config)
from .diagnostics import (VisitationGrid, covered_cells, estimate_value_bias,
                          format_trajectories, normalized_score, record_visit,
                          save_heatmap_pgm)
from .figures import (plot_ablation, plot_bias_bars, plot_learning_curves,
                      plot_trajectories, plot_visitation)
from .maze import MazeEnv

SPARSITY_GRID = (0.1, 0.3, 0.5, 0.7, 0.9)
SUBNET_COUNT_GRID = ("1", "2", "4", "5", "8", "inf")
VISITATION_BUDGETS = (100, 500, 1000)


# ------------------------------------------------------------- small utils


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return value


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _parse_ints(text: str, what: str) -> list[int]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError(f"no {what} given")
    return [int(t) for t in items]


def _parse_floats(text: str, what: str) -> list[float]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError(f"no {what} given")
    return [float(t) for t in items]


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if getattr(args, "steps", None) is not None:
        cfg = dataclasses.replace(cfg, steps=args.steps)
    return cfg


def _seed_list(args, cfg: RunConfig) -> list[int]:
    if args.seeds is None:
        return [cfg.seed]
    seeds = _parse_ints(args.seeds, "seeds")
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    return seeds


def _with_sac(cfg: RunConfig, **kw) -> RunConfig:
    return dataclasses.replace(cfg, sac=dataclasses.replace(cfg.sac, **kw))


def _eval_curve(trainer: Trainer) -> list:
    return [(ev.env_step, ev.mean_return) for ev in trainer.log.evals]


def _run_score(trainer: Trainer) -> float:
    curve = _eval_curve(trainer)
    if not curve:
        return math.nan
    return normalized_score([curve], best=trainer.maze_cfg.success_reward)


# ------------------------------------------------------------ run emission


def train_one(cfg: RunConfig, seed: int, run_dir: Path) -> Trainer:
    """Train one seed and leave a self-describing artifact directory."""
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg = dataclasses.replace(cfg, seed=seed)
    save_run_config(cfg, run_dir / "config.ini")
    trainer = build_trainer(cfg)
    trainer.run(cfg.steps)
    emit_run_artifacts(trainer, run_dir)
    return trainer


def emit_run_artifacts(trainer: Trainer, run_dir: Path) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    log = trainer.log
    n = trainer.cfg.n_subnets
    omnet_actor = trainer.cfg.actor_mode == "omnet"

    header = ["env_step", "mean_return", "min_return", "max_return",
              "success_rate"]
    if omnet_actor:
        header += [f"return_subnet_{k}" for k in range(1, n + 1)]
    rows = []
    for ev in log.evals:
        row = [ev.env_step, ev.mean_return, ev.min_return, ev.max_return,
               ev.success_rate]
        if omnet_actor:
            row += [ev.subnet_mean(k) for k in range(1, n + 1)]
        rows.append(row)
    write_csv(run_dir / "eval_curve.csv", header, rows)

    write_csv(run_dir / "steps.csv",
              ["env_step", "grad_steps", "critic_loss", "actor_loss",
               "alpha"],
              [(r.env_step, r.grad_steps, r.critic_loss, r.actor_loss,
                r.alpha) for r in log.steps])
    write_csv(run_dir / "episodes.csv",
              ["grad_step", "subnet", "return", "success", "steps"],
              [(e.grad_step, e.subnet, e.ret, int(e.success),
                len(e.positions) - 1) for e in log.episodes])
    with open(run_dir / "trajectories.txt", "w", encoding="utf-8") as fh:
        fh.write(format_trajectories(log.episodes))

    grid = VisitationGrid()
    for _, x, y in log.positions:
        record_visit(grid, (x, y))
    save_heatmap_pgm(grid, run_dir / "visitation.pgm")
    maze = trainer.maze_cfg
    plot_visitation(grid, run_dir / "visitation.png", walls=maze.walls,
                    goal=maze.goal, goal_radius=maze.goal_radius,
                    title=f"visits, seed {trainer.seed}")
    plot_learning_curves({f"seed {trainer.seed}": _eval_curve(trainer)},
                         run_dir / "learning_curve.png")
    plot_trajectories(log.episodes[-12:], run_dir / "trajectories.png",
                      walls=maze.walls, goal=maze.goal,
                      goal_radius=maze.goal_radius,
                      title="final episodes")
    save_checkpoint(trainer, run_dir / "final.ckpt")

    final = log.evals[-1] if log.evals else None
    write_csv(run_dir / "summary.csv",
              ["seed", "env_steps", "grad_steps", "first_success_step",
               "final_mean_return", "final_success_rate",
               "normalized_score"],
              [(trainer.seed, trainer.env_step, trainer.grad_steps,
                log.first_success_step,
                final.mean_return if final else math.nan,
                final.success_rate if final else math.nan,
                _run_score(trainer))])


# -------------------------------------------------------------- subcommands


def cmd_train(args) -> int:
    cfg = _load_config(args)
    seeds = _seed_list(args, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    curves = {}
    rows = []
    for seed in seeds:
        trainer = train_one(cfg, seed, out / f"seed_{seed}")
        curves[f"seed {seed}"] = _eval_curve(trainer)
        final = trainer.log.evals[-1] if trainer.log.evals else None
        rows.append((seed, final.mean_return if final else math.nan,
                     final.success_rate if final else math.nan,
                     trainer.log.first_success_step, _run_score(trainer)))
        print(f"seed {seed}: final mean return "
              f"{rows[-1][1]:.1f}, first success at "
              f"{trainer.log.first_success_step}")
    write_csv(out / "eval_summary.csv",
              ["seed", "final_mean_return", "final_success_rate",
               "first_success_step", "normalized_score"], rows)
    plot_learning_curves(curves, out / "learning_curves.png")
    print(f"wrote {out}")
    return 0


def cmd_eval(args) -> int:
    trainer = load_trainer(args.checkpoint)
    noise = trainer.noise_scale if args.noise_scale is None else args.noise_scale
    rng = np.random.default_rng(args.eval_seed)
    res = evaluate(trainer.agent, trainer.maze_cfg, noise, args.episodes,
                   rng, env_step=trainer.env_step)
    print(f"episodes {args.episodes}: mean {res.mean_return!r} "
          f"min {res.min_return!r} max {res.max_return!r} "
          f"success_rate {res.success_rate!r}")
    return 0


def _ablate_variants(cfg: RunConfig, axis: str, tokens: list[str]) -> list:
    """(label, config) per grid value; axis decides how a token applies."""
    if not tokens:
        raise ValueError("no values given")
    variants = []
    for tok in tokens:
        if axis == "sparsity":
            val = float(tok)
            variants.append((f"sparsity_{val!r}",
                             _with_sac(cfg, sparsity=val,
                                       critic_mode="omnet",
                                       actor_mode="omnet")))
        elif axis == "subnet_count":
            if tok == "inf":
                variants.append(("subnets_inf",
                                 _with_sac(cfg, critic_mode="infinity",
                                           actor_mode="infinity")))
            else:
                variants.append((f"subnets_{int(tok)}",
                                 _with_sac(cfg, n_subnets=int(tok),
                                           critic_mode="omnet",
                                           actor_mode="omnet")))
        else:
            raise ValueError(f"unknown ablation axis {axis!r}")
    return variants


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    seeds = _seed_list(args, cfg)
    if args.values is None:
        tokens = ([repr(v) for v in SPARSITY_GRID]
                  if args.axis == "sparsity" else list(SUBNET_COUNT_GRID))
    else:
        tokens = [t.strip() for t in args.values.split(",") if t.strip()]
    variants = _ablate_variants(cfg, args.axis, tokens)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    means = []
    for (label, vcfg), tok in zip(variants, tokens):
        scores = []
        for seed in seeds:
            trainer = train_one(vcfg, seed, out / label / f"seed_{seed}")
            scores.append(_run_score(trainer))
        mean = float(np.mean(scores))
        means.append(mean)
        rows.append([tok, mean] + scores)
        print(f"{args.axis} {tok}: normalized score {mean:.3f}")
    write_csv(out / "scores.csv",
              ["value", "score_mean"] + [f"score_seed_{s}" for s in seeds],
              rows)
    plot_ablation(tokens, {"mean": means}, args.axis, out / "ablation.png")
    print(f"wrote {out}")
    return 0


def cmd_visitation(args) -> int:
    cfg = _load_config(args)
    seeds = _seed_list(args, cfg)
    budgets = sorted(_parse_ints(args.budgets, "budgets"))
    if budgets[0] < 0:
        raise ValueError("budgets must be >= 0")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    warmup = cfg.sac.warmup_steps
    steps = warmup + budgets[-1]
    variants = [("omnet_actor", _with_sac(cfg, critic_mode="omnet",
                                          actor_mode="omnet")),
                ("dense_actor", _with_sac(cfg, critic_mode="omnet",
                                          actor_mode="dense"))]
    rows = []
    for label, vcfg in variants:
        vcfg = dataclasses.replace(vcfg, steps=max(steps, 1), eval_interval=0)
        save_run_config(vcfg, out / f"config_{label}.ini")
        grids = {b: VisitationGrid() for b in budgets}
        for seed in seeds:
            trainer = build_trainer(dataclasses.replace(vcfg, seed=seed))
            trainer.run(vcfg.steps)
            for step, x, y in trainer.log.positions:
                rel = step - warmup
                if rel <= 0:
                    continue
                for b in budgets:
                    if rel <= b:
                        record_visit(grids[b], (x, y))
        for b in budgets:
            grid = grids[b]
            save_heatmap_pgm(grid, out / f"visitation_{label}_{b}.pgm")
            plot_visitation(grid, out / f"visitation_{label}_{b}.png",
                            walls=cfg.maze.walls, goal=cfg.maze.goal,
                            goal_radius=cfg.maze.goal_radius,
                            title=f"{label}, first {b} steps after warmup")
            rows.append((label, b, covered_cells(grid), grid.total))
            print(f"{label} budget {b}: {covered_cells(grid)} cells covered")
    write_csv(out / "coverage.csv",
              ["variant", "budget", "covered_cells", "visits"], rows)
    print(f"wrote {out}")
    return 0


def _measure_bias(trainer: Trainer, n_states: int, n_rollouts: int):
    """Deterministic off-to-the-side bias probe at the current step."""
    tag = (trainer.eval_key, trainer.env_step)
    env = MazeEnv(trainer.maze_cfg, trainer.noise_scale,
                  rng=np.random.default_rng(np.random.SeedSequence(tag + (1,))))
    adapter = PolicyAdapter(trainer.agent,
                            np.random.default_rng(np.random.SeedSequence(tag + (2,))))
    return estimate_value_bias(
        env, adapter, gamma=trainer.cfg.gamma, n_states=n_states,
        n_rollouts=n_rollouts, horizon=trainer.maze_cfg.max_steps,
        rng=np.random.default_rng(np.random.SeedSequence(tag + (3,))))


def cmd_valuebias(args) -> int:
    cfg = _load_config(args)
    seeds = _seed_list(args, cfg)
    schedule = sorted(set(_parse_ints(args.schedule, "schedule"))) \
        if args.schedule.strip() else []
    if not schedule:
        print("warning: empty schedule, nothing to measure", file=sys.stderr)
        return 0
    if schedule[0] < 0:
        raise ValueError("schedule steps must be >= 0")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_run_config(cfg, out / "config.ini")
    steps = max(cfg.steps, schedule[-1])
    labels, finals, errs = [], [], []
    curves = {}
    for seed in seeds:
        trainer = build_trainer(dataclasses.replace(cfg, seed=seed))
        rows = []
        if schedule[0] == 0:
            report = _measure_bias(trainer, args.states, args.rollouts)
            rows.append((0, 0, report.mean_bias(), report.std_error()))
        remaining = [t for t in schedule if t > 0]
        for t in range(1, steps + 1):
            trainer.step_env()
            if remaining and t == remaining[0]:
                remaining.pop(0)
                report = _measure_bias(trainer, args.states, args.rollouts)
                rows.append((t, trainer.grad_steps, report.mean_bias(),
                             report.std_error()))
        write_csv(out / f"bias_curve_seed_{seed}.csv",
                  ["env_step", "grad_steps", "mean_bias", "std_error"], rows)
        curves[f"seed {seed}"] = [(r[0], r[2]) for r in rows]
        labels.append(f"seed {seed}")
        finals.append(rows[-1][2])
        errs.append(rows[-1][3])
        print(f"seed {seed}: final mean bias {finals[-1]:+.3f} "
              f"(se {errs[-1]:.3f})")
    plot_learning_curves(curves, out / "bias_curves.png",
                         ylabel="mean value bias")
    plot_bias_bars(labels, finals, errs, out / "final_bias.png",
                   title="bias at end of training")
    print(f"wrote {out}")
    return 0


def cmd_noise_sweep(args) -> int:
    cfg = _load_config(args)
    seeds = _seed_list(args, cfg)
    values = _parse_floats(args.values, "noise values")
    if min(values) < 0:
        raise ValueError("noise scale must be >= 0")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, means = [], []
    for sigma in values:
        vcfg = dataclasses.replace(cfg, noise_scale=sigma)
        scores = []
        for seed in seeds:
            trainer = train_one(vcfg, seed,
                                out / f"sigma_{sigma!r}" / f"seed_{seed}")
            scores.append(_run_score(trainer))
        mean = float(np.mean(scores))
        means.append(mean)
        rows.append([sigma, mean] + scores)
        print(f"noise {sigma!r}: normalized score {mean:.3f}")
    write_csv(out / "noise.csv",
              ["noise_scale", "score_mean"] + [f"score_seed_{s}"
                                               for s in seeds], rows)
    plot_ablation([repr(v) for v in values], {"mean": means},
                  "observation noise scale", out / "noise.png")
    print(f"wrote {out}")
    return 0


# -------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="omnet",
        description="Train and probe actor-critic agents built on "
                    "overlapping masked subnetworks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, default_out):
        sp.add_argument("--config", help="INI run configuration file")
        sp.add_argument("--seeds",
                        help="comma-separated seeds (default: config seed)")
        sp.add_argument("--out", default=default_out,
                        help="output directory")
        sp.add_argument("--steps", type=int,
                        help="override the environment-step budget")

    p = sub.add_parser("train", help="train one run per seed")
    common(p, "runs/train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--noise-scale", type=float, default=None,
                   help="override the checkpoint's observation noise")
    p.add_argument("--eval-seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="score a grid of agent variants")
    common(p, "runs/ablate")
    p.add_argument("--axis", required=True,
                   choices=("sparsity", "subnet_count"))
    p.add_argument("--values",
                   help="comma-separated grid; subnet_count accepts 'inf' "
                        "(defaults: sparsity 0.1,0.3,0.5,0.7,0.9; "
                        "subnet_count 1,2,4,5,8,inf)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("visitation",
                       help="early-exploration heatmaps, masked vs dense actor")
    common(p, "runs/visitation")
    p.add_argument("--budgets", default="100,500,1000",
                   help="post-warmup step budgets")
    p.set_defaults(func=cmd_visitation)

    p = sub.add_parser("valuebias",
                       help="critic bias against Monte Carlo returns while training")
    common(p, "runs/valuebias")
    p.add_argument("--schedule", default="250,500,1000,2000",
                   help="env steps at which to probe (empty: skip)")
    p.add_argument("--states", type=int, default=20)
    p.add_argument("--rollouts", type=int, default=5)
    p.set_defaults(func=cmd_valuebias)

    p = sub.add_parser("noise-sweep",
                       help="scores under matched train/eval observation noise")
    common(p, "runs/noise-sweep")
    p.add_argument("--values", default="0.0,0.05,0.1")
    p.set_defaults(func=cmd_noise_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
