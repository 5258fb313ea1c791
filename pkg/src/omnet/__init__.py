"""Overlapping masked subnetworks inside one dense network, with a
soft actor-critic agent and a small continuous maze to exercise them."""

from .agent import (AgentState, EvalResult, PolicyAdapter, SacConfig, TrainLog,
                    Trainer, act, actor_loss_grad, actor_update, build_agent,
                    critic_loss_grad, critic_update, draw_policy_subnet,
                    evaluate, target_sync, td_target, temperature_update)
from .checkpoint import load_trainer, save_checkpoint
from .config import (RunConfig, build_trainer, load_run_config,
                     parse_run_config, save_run_config)
from .diagnostics import (BiasSample, FlopReport, ValueBiasReport,
                          VisitationGrid, covered_cells, estimate_flops,
                          estimate_value_bias, format_trajectories,
                          normalized_score, parse_trajectories, record_visit,
                          render_heatmap_pgm, save_heatmap_pgm)
from .masks import (MaskSet, SubnetSelector, apply_mask, draw_index,
                    draw_two_distinct, infinity_mask, masked_forward,
                    masked_grad, masked_params, sample_masks)
from .maze import (MazeConfig, MazeEnv, StepResult, load_maze_config,
                   save_maze_config)
from .nn import (AdamState, LayerSpec, MlpParams, adam_step, backward,
                 build_layout, forward, init_params)
from .replay import Batch, ReplayBuffer, Transition

__version__ = "0.1.0"

__all__ = [
    "AdamState", "AgentState", "Batch", "BiasSample", "EvalResult",
    "FlopReport", "LayerSpec", "MaskSet", "MazeConfig", "MazeEnv",
    "MlpParams", "PolicyAdapter", "ReplayBuffer", "RunConfig", "SacConfig",
    "StepResult", "SubnetSelector", "TrainLog", "Trainer", "Transition",
    "ValueBiasReport", "VisitationGrid", "act", "actor_loss_grad",
    "actor_update", "adam_step", "apply_mask", "backward", "build_agent",
    "build_layout", "build_trainer", "covered_cells", "critic_loss_grad",
    "critic_update", "draw_index", "draw_policy_subnet", "draw_two_distinct",
    "estimate_flops", "estimate_value_bias", "evaluate",
    "format_trajectories", "forward", "infinity_mask", "init_params",
    "load_maze_config", "load_run_config", "load_trainer", "masked_forward",
    "masked_grad", "masked_params", "normalized_score", "parse_run_config",
    "parse_trajectories", "record_visit", "render_heatmap_pgm",
    "sample_masks", "save_checkpoint", "save_heatmap_pgm", "save_maze_config",
    "save_run_config", "target_sync", "td_target", "temperature_update",
    "__version__",
]
