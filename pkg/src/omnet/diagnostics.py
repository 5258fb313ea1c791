"""Measurement utilities around training runs.

State-visitation grids with portable graymap rendering, an off-policy
value-bias estimator that replays continuations from stored environment
states, normalized scores over the final stretch of a learning curve,
and an analytic per-update cost model for comparing agent variants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agent import SacConfig, actor_layer_specs, critic_layer_specs
from .nn import LayerSpec

GRID_SIZE = 30


@dataclass
class VisitationGrid:
    """Counts of visits per cell; cell (i, j) covers [i/30, (i+1)/30) x ..."""

    counts: np.ndarray = field(
        default_factory=lambda: np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.int64))
    total: int = 0


def record_visit(grid: VisitationGrid, position) -> None:
    x, y = float(position[0]), float(position[1])
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ValueError(f"position {(x, y)} outside the unit square")
    # the closed upper edge folds into the last cell
    ix = min(int(x * GRID_SIZE), GRID_SIZE - 1)
    iy = min(int(y * GRID_SIZE), GRID_SIZE - 1)
    grid.counts[ix, iy] += 1
    grid.total += 1


def covered_cells(grid: VisitationGrid) -> int:
    return int(np.count_nonzero(grid.counts))


def render_heatmap_pgm(grid: VisitationGrid, block: int = 8) -> str:
    """Textual portable graymap: log-scaled counts, white background.

    Each grid cell becomes a block x block pixel square; the image is
    flipped so y grows upward like the maze coordinates.
    """
    if block < 1:
        raise ValueError("block must be >= 1")
    cmax = int(grid.counts.max())
    shades = np.full((GRID_SIZE, GRID_SIZE), 255, dtype=np.int64)
    if cmax > 0:
        visited = grid.counts > 0
        scale = np.log1p(grid.counts[visited]) / np.log1p(cmax)
        shades[visited] = 255 - np.floor(255.0 * scale).astype(np.int64)
    # pixel row r maps to cell row (GRID_SIZE - 1 - r // block)
    img = np.repeat(np.repeat(shades.T[::-1], block, axis=0), block, axis=1)
    side = GRID_SIZE * block
    lines = ["P2", f"{side} {side}", "255"]
    for row in img:
        text = [str(v) for v in row]
        for k in range(0, side, 17):           # keep lines under 70 chars
            lines.append(" ".join(text[k:k + 17]))
    return "\n".join(lines) + "\n"


def save_heatmap_pgm(grid: VisitationGrid, path, block: int = 8) -> None:
    with open(path, "w") as fh:
        fh.write(render_heatmap_pgm(grid, block))


# ------------------------------------------------------------ trajectories


def format_trajectories(episodes) -> str:
    """One line per episode: gradient-step stamp, subnet id, then the path
    as comma-separated coordinates x1,y1,x2,y2,..."""
    lines = []
    for ep in episodes:
        flat = ",".join(repr(float(c)) for xy in ep.positions for c in xy)
        lines.append(f"{ep.grad_step} {ep.subnet} {flat}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_trajectories(text: str) -> list[tuple[int, int, np.ndarray]]:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        stamp, subnet, flat = line.split(" ", 2)
        coords = np.array([float(v) for v in flat.split(",")])
        if coords.size % 2:
            raise ValueError("odd number of coordinates in trajectory line")
        out.append((int(stamp), int(subnet), coords.reshape(-1, 2)))
    return out


# -------------------------------------------------------------- value bias


@dataclass(frozen=True)
class BiasSample:
    q_estimate: float
    mc_return: float

    @property
    def bias(self) -> float:
        return self.q_estimate - self.mc_return


@dataclass
class ValueBiasReport:
    samples: list[BiasSample]

    def biases(self) -> np.ndarray:
        return np.array([s.bias for s in self.samples])

    def mean_bias(self) -> float:
        return float(self.biases().mean())

    def std_error(self) -> float:
        b = self.biases()
        if b.size < 2:
            return float("inf")
        return float(b.std(ddof=1) / np.sqrt(b.size))


def format_bias_report(report: ValueBiasReport) -> str:
    """One line per sample: q estimate, Monte Carlo return, bias."""
    lines = [f"{repr(s.q_estimate)} {repr(s.mc_return)} {repr(s.bias)}"
             for s in report.samples]
    return "\n".join(lines) + ("\n" if lines else "")


def estimate_value_bias(env, policy, gamma: float, n_states: int,
                        n_rollouts: int, horizon: int,
                        rng: np.random.Generator) -> ValueBiasReport:
    """Mean critic bias: Q(s, a) minus the Monte Carlo return of replayed
    continuations.

    env must expose reset/step/snapshot/restore; policy must expose
    begin_episode/action/q_value (see PolicyAdapter). State-action pairs
    are collected by rolling the stochastic policy, n_states of them are
    chosen without replacement, and each is evaluated by n_rollouts
    continuations truncated at horizon steps with a zero bootstrap.
    """
    if n_states < 1 or n_rollouts < 1 or horizon < 1:
        raise ValueError("n_states, n_rollouts and horizon must be >= 1")
    pool = []
    while len(pool) < n_states:
        token = policy.begin_episode()
        obs = env.reset()
        while True:
            snap = env.snapshot()
            a = policy.action(obs, token)
            pool.append((snap, np.array(obs, dtype=np.float64), a))
            res = env.step(a)
            obs = res.observation
            if res.done or res.truncated:
                break

    chosen = rng.choice(len(pool), size=n_states, replace=False)
    samples = []
    for idx in chosen:
        snap, obs, a = pool[int(idx)]
        q_hat = policy.q_value(obs, a)
        returns = np.zeros(n_rollouts)
        for j in range(n_rollouts):
            env.restore(snap)
            res = env.step(a)
            total = res.reward
            disc = gamma
            o = res.observation
            token = policy.begin_episode()
            steps = 1
            while not (res.done or res.truncated) and steps < horizon:
                res = env.step(policy.action(o, token))
                total += disc * res.reward
                disc *= gamma
                o = res.observation
                steps += 1
            returns[j] = total                 # zero bootstrap at any cutoff
        samples.append(BiasSample(float(q_hat), float(returns.mean())))
    return ValueBiasReport(samples)


# ------------------------------------------------------------------ scores


def normalized_score(runs, best: float) -> float:
    """Mean over runs of (mean return over the final sixth of the curve,
    divided by the best attainable return).

    runs: per-run sequences of (step, return) pairs."""
    if best <= 0:
        raise ValueError("best must be > 0")
    if not runs:
        raise ValueError("no runs given")
    scores = []
    for run in runs:
        if not run:
            raise ValueError("empty run")
        steps = [s for s, _ in run]
        cut = max(steps) * (5.0 / 6.0)
        window = [r for s, r in run if s > cut]
        scores.append(float(np.mean(window)) / best)
    return float(np.mean(scores))


# -------------------------------------------------------------- cost model


@dataclass(frozen=True)
class FlopReport:
    """Dense-equivalent floating point operations per update, per batch.

    critic_update counts critic-network arithmetic only (the shared
    next-action policy pass is priced once inside per_env_step), so dense
    double-critic updates cost exactly twice dense single-critic ones and
    masked variants are independent of the subnetwork count.
    """

    critic_update: float
    actor_update: float
    temperature_update: float
    per_env_step: float
    normalized: float          # per_env_step relative to a baseline, 1.0 if none


def layer_forward_flops(spec: LayerSpec) -> int:
    flops = 2 * spec.input_dim * spec.output_dim + spec.output_dim
    if spec.layer_norm:
        flops += 6 * spec.output_dim
    if spec.activation != "identity":
        flops += spec.output_dim
    return flops


def forward_flops(specs) -> int:
    return sum(layer_forward_flops(s) for s in specs)


def estimate_flops(cfg: SacConfig, obs_dim: int, act_dim: int,
                   baseline: FlopReport | None = None) -> FlopReport:
    """Analytic cost of one critic update, one policy update, and one
    environment step (replay_ratio critic updates plus amortized policy
    and temperature work). A backward pass is priced at twice the forward;
    the policy objective prices the subnetwork-averaged critic at one
    dense evaluation per physical network."""
    f_c = forward_flops(critic_layer_specs(obs_dim, act_dim, cfg)) * cfg.batch_size
    f_a = forward_flops(actor_layer_specs(obs_dim, act_dim, cfg)) * cfg.batch_size
    n_nets = 2 if cfg.critic_mode == "dense_double" else 1
    if cfg.critic_mode == "omnet":
        n_target_evals = 2 if cfg.n_subnets >= 2 else 1
    elif cfg.critic_mode == "infinity":
        n_target_evals = 2
    else:
        n_target_evals = n_nets
    critic = n_target_evals * f_c + n_nets * 3 * f_c
    actor = 3 * f_a + n_nets * 3 * f_c
    temperature = 0.0 if cfg.entropy_off else 2.0 * cfg.batch_size + 16.0
    per_step = (cfg.replay_ratio * (critic + f_a)
                + (actor + temperature) / cfg.policy_delay)
    norm = 1.0 if baseline is None else per_step / baseline.per_env_step
    return FlopReport(float(critic), float(actor), float(temperature),
                      float(per_step), float(norm))
