"""One INI document describing a complete run.

Three sections: [run] for seed, length and evaluation cadence, [sac] for
the agent, [maze] for the environment. Every key is optional and falls
back to the dataclass default; unknown sections or keys are hard errors
so a typo never silently trains the wrong thing.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .agent import SacConfig, Trainer
from .maze import MazeConfig, format_maze_config, maze_config_from_section

_RUN_KEYS = {"seed", "steps", "noise_scale", "eval_interval",
             "eval_episodes"}
_SAC_INT_KEYS = ("n_subnets", "batch_size", "replay_ratio", "policy_delay",
                 "warmup_steps", "buffer_capacity")
_SAC_FLOAT_KEYS = ("sparsity", "gamma", "tau", "critic_lr", "actor_lr",
                   "alpha_lr", "init_alpha")
_SAC_BOOL_KEYS = ("entropy_off", "critic_layer_norm")
_SAC_STR_KEYS = ("critic_mode", "actor_mode")
_SAC_KEYS = (set(_SAC_INT_KEYS) | set(_SAC_FLOAT_KEYS) | set(_SAC_BOOL_KEYS)
             | set(_SAC_STR_KEYS) | {"target_entropy", "hidden_dims"})


@dataclass(frozen=True)
class RunConfig:
    sac: SacConfig = field(default_factory=SacConfig)
    maze: MazeConfig = field(default_factory=MazeConfig)
    seed: int = 0
    steps: int = 2000
    noise_scale: float = 0.0
    eval_interval: int = 100
    eval_episodes: int = 10

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.steps < self.sac.warmup_steps:
            raise ValueError("steps must cover the warmup period")
        if self.eval_interval < 0:
            raise ValueError("eval_interval must be >= 0")
        if self.eval_episodes < 1:
            raise ValueError("eval_episodes must be >= 1")


def _sac_from_section(sec) -> SacConfig:
    unknown = set(sec) - _SAC_KEYS
    if unknown:
        raise ValueError(f"unknown sac config keys: {sorted(unknown)}")
    kwargs = {}
    for key in _SAC_STR_KEYS:
        if key in sec:
            kwargs[key] = sec[key]
    for key in _SAC_INT_KEYS:
        if key in sec:
            kwargs[key] = int(sec[key])
    for key in _SAC_FLOAT_KEYS:
        if key in sec:
            kwargs[key] = float(sec[key])
    for key in _SAC_BOOL_KEYS:
        if key in sec:
            kwargs[key] = sec.getboolean(key)
    if "target_entropy" in sec:
        raw = sec["target_entropy"].strip().lower()
        kwargs["target_entropy"] = None if raw == "none" else float(raw)
    if "hidden_dims" in sec:
        dims = tuple(int(v) for v in sec["hidden_dims"].split(",") if v.strip())
        kwargs["hidden_dims"] = dims
    return SacConfig(**kwargs)


def parse_run_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    unknown = set(cp.sections()) - {"run", "sac", "maze"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {}
    if cp.has_section("run"):
        sec = cp["run"]
        bad = set(sec) - _RUN_KEYS
        if bad:
            raise ValueError(f"unknown run config keys: {sorted(bad)}")
        for key in ("seed", "steps", "eval_interval", "eval_episodes"):
            if key in sec:
                kwargs[key] = int(sec[key])
        if "noise_scale" in sec:
            kwargs["noise_scale"] = float(sec["noise_scale"])
    sac = _sac_from_section(cp["sac"]) if cp.has_section("sac") else SacConfig()
    maze = (maze_config_from_section(cp["maze"]) if cp.has_section("maze")
            else MazeConfig())
    return RunConfig(sac=sac, maze=maze, **kwargs)


def format_run_config(cfg: RunConfig) -> str:
    sac = cfg.sac
    te = "none" if sac.target_entropy is None else repr(sac.target_entropy)
    lines = [
        "[run]",
        f"seed = {cfg.seed}",
        f"steps = {cfg.steps}",
        f"noise_scale = {cfg.noise_scale!r}",
        f"eval_interval = {cfg.eval_interval}",
        f"eval_episodes = {cfg.eval_episodes}",
        "",
        "[sac]",
        f"critic_mode = {sac.critic_mode}",
        f"actor_mode = {sac.actor_mode}",
        f"n_subnets = {sac.n_subnets}",
        f"sparsity = {sac.sparsity!r}",
        f"gamma = {sac.gamma!r}",
        f"tau = {sac.tau!r}",
        f"batch_size = {sac.batch_size}",
        f"replay_ratio = {sac.replay_ratio}",
        f"policy_delay = {sac.policy_delay}",
        f"warmup_steps = {sac.warmup_steps}",
        f"buffer_capacity = {sac.buffer_capacity}",
        f"critic_lr = {sac.critic_lr!r}",
        f"actor_lr = {sac.actor_lr!r}",
        f"alpha_lr = {sac.alpha_lr!r}",
        f"init_alpha = {sac.init_alpha!r}",
        f"target_entropy = {te}",
        f"entropy_off = {str(sac.entropy_off).lower()}",
        f"hidden_dims = {', '.join(str(d) for d in sac.hidden_dims)}",
        f"critic_layer_norm = {str(sac.critic_layer_norm).lower()}",
        "",
    ]
    return "\n".join(lines) + format_maze_config(cfg.maze)


def load_run_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_run_config(fh.read())


def save_run_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_run_config(cfg))


def build_trainer(cfg: RunConfig) -> Trainer:
    return Trainer(cfg.sac, cfg.maze, noise_scale=cfg.noise_scale,
                   seed=cfg.seed, eval_interval=cfg.eval_interval,
                   eval_episodes=cfg.eval_episodes)
