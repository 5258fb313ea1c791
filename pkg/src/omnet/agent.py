"""Soft actor-critic over overlapping masked subnetworks.

One dense critic parameter vector hosts several overlapping sparse
subnetworks. Each gradient step trains exactly one of them, the target
value takes the minimum over a freshly drawn distinct pair evaluated on
the target parameters, and the policy is trained against the critic
averaged over every subnetwork. Dense single/double critics and a
fresh-mask-per-draw variant run through the same code paths so that cost
and behaviour comparisons stay apples to apples.

All randomness flows from one root seed through named streams (parameter
init, mask draws, subnet index draws, batch sampling, action noise,
environment, evaluation), so a run is a pure function of configuration
and seed, and variants that skip a stream do not shift the others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .masks import (MaskSet, SubnetSelector, draw_index, draw_two_distinct,
                    infinity_mask, masked_params, sample_masks)
from .maze import MazeConfig, MazeEnv
from .nn import AdamState, LayerSpec, MlpParams, adam_step, backward, forward, init_params
from .replay import Batch, ReplayBuffer, Transition

CRITIC_MODES = ("omnet", "dense_single", "dense_double", "infinity")
ACTOR_MODES = ("omnet", "dense", "infinity")

# Smooth bounds on the policy log-standard-deviation head.
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SacConfig:
    critic_mode: str = "omnet"
    actor_mode: str = "omnet"
    n_subnets: int = 5
    sparsity: float = 0.5
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    replay_ratio: int = 20      # critic updates per environment step
    policy_delay: int = 1       # environment steps between policy updates
    warmup_steps: int = 1000    # uniform random actions before the policy acts
    buffer_capacity: int = 1_000_000
    critic_lr: float = 3e-4
    actor_lr: float = 3e-4
    alpha_lr: float = 3e-4
    init_alpha: float = 1.0
    target_entropy: float | None = None   # default: -action_dim
    entropy_off: bool = False   # drop entropy terms: plain min-target / mean-Q losses
    hidden_dims: tuple[int, ...] = (256, 256)
    critic_layer_norm: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if self.critic_mode not in CRITIC_MODES:
            raise ValueError(f"unknown critic_mode {self.critic_mode!r}")
        if self.actor_mode not in ACTOR_MODES:
            raise ValueError(f"unknown actor_mode {self.actor_mode!r}")
        if self.n_subnets < 1:
            raise ValueError("n_subnets must be >= 1")
        if not 0.0 <= self.sparsity < 1.0:
            raise ValueError("sparsity must be in [0, 1)")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if min(self.batch_size, self.replay_ratio, self.policy_delay) < 1:
            raise ValueError("batch_size, replay_ratio, policy_delay must be >= 1")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if self.init_alpha <= 0:
            raise ValueError("init_alpha must be > 0")
        if not self.hidden_dims:
            raise ValueError("need at least one hidden layer")


def critic_layer_specs(obs_dim: int, act_dim: int, cfg: SacConfig) -> tuple[LayerSpec, ...]:
    dims = (obs_dim + act_dim,) + cfg.hidden_dims
    specs = [LayerSpec(dims[i], dims[i + 1], "relu", cfg.critic_layer_norm)
             for i in range(len(dims) - 1)]
    specs.append(LayerSpec(dims[-1], 1, "identity"))
    return tuple(specs)


def actor_layer_specs(obs_dim: int, act_dim: int, cfg: SacConfig) -> tuple[LayerSpec, ...]:
    dims = (obs_dim,) + cfg.hidden_dims
    specs = [LayerSpec(dims[i], dims[i + 1], "relu")
             for i in range(len(dims) - 1)]
    specs.append(LayerSpec(dims[-1], 2 * act_dim, "identity"))
    return tuple(specs)


@dataclass
class AgentState:
    cfg: SacConfig
    obs_dim: int
    act_dim: int
    action_bound: float
    critics: list[MlpParams]
    targets: list[MlpParams]
    critic_opts: list[AdamState]
    critic_masks: MaskSet | None
    actor: MlpParams
    actor_opt: AdamState
    actor_masks: MaskSet | None
    log_alpha: float
    alpha_m: float
    alpha_v: float
    alpha_t: int
    target_entropy: float
    subnet_rng: np.random.Generator
    batch_rng: np.random.Generator
    action_rng: np.random.Generator

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)


def build_agent(cfg: SacConfig, obs_dim: int, act_dim: int,
                action_bound: float, seed: int) -> AgentState:
    """Construct networks, frozen masks and rng streams from one seed.

    Stream table (indices into the derived key array): 0 critic init,
    1 second critic init, 2 actor init, 3 critic masks, 4 actor masks,
    5 subnet draws, 6 batch sampling, 7 action noise. Unused streams are
    still reserved so variants stay aligned.
    """
    keys = [int(v) for v in
            np.random.SeedSequence(seed).generate_state(8, dtype=np.uint64)]
    cspecs = critic_layer_specs(obs_dim, act_dim, cfg)
    aspecs = actor_layer_specs(obs_dim, act_dim, cfg)
    critics = [init_params(cspecs, keys[0])]
    if cfg.critic_mode == "dense_double":
        critics.append(init_params(cspecs, keys[1]))
    targets = [c.copy() for c in critics]
    critic_opts = [AdamState.for_params(c, lr=cfg.critic_lr) for c in critics]
    critic_masks = None
    if cfg.critic_mode == "omnet":
        critic_masks = sample_masks(critics[0].layout, cfg.n_subnets,
                                    cfg.sparsity, keys[3])
    actor = init_params(aspecs, keys[2])
    actor_masks = None
    if cfg.actor_mode == "omnet":
        actor_masks = sample_masks(actor.layout, cfg.n_subnets,
                                   cfg.sparsity, keys[4])
    te = -float(act_dim) if cfg.target_entropy is None else cfg.target_entropy
    return AgentState(
        cfg=cfg, obs_dim=obs_dim, act_dim=act_dim, action_bound=action_bound,
        critics=critics, targets=targets, critic_opts=critic_opts,
        critic_masks=critic_masks, actor=actor,
        actor_opt=AdamState.for_params(actor, lr=cfg.actor_lr),
        actor_masks=actor_masks, log_alpha=math.log(cfg.init_alpha),
        alpha_m=0.0, alpha_v=0.0, alpha_t=0, target_entropy=te,
        subnet_rng=np.random.default_rng(keys[5]),
        batch_rng=np.random.default_rng(keys[6]),
        action_rng=np.random.default_rng(keys[7]))


def _policy_head(out: np.ndarray, act_dim: int):
    """Split raw policy output into mean, bounded log-std, d(log-std)/d(raw)."""
    mu = out[..., :act_dim]
    raw = out[..., act_dim:]
    t = np.tanh(raw)
    log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (t + 1.0)
    dlog_std = 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t ** 2)
    return mu, log_std, dlog_std


def _squash(mu, log_std, eps, bound: float):
    """a = bound * tanh(mu + std * eps) with its log density.

    log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)) keeps the tanh
    volume correction finite for large |u|.
    """
    std = np.exp(log_std)
    u = mu + std * eps
    t = np.tanh(u)
    log1m_t2 = 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))
    logp = (-0.5 * eps ** 2 - log_std - 0.5 * _LOG_2PI
            - math.log(bound) - log1m_t2).sum(axis=-1)
    return bound * t, t, logp


def _actor_mask(agent: AgentState, subnet) -> np.ndarray | None:
    """Resolve a policy subnet token: 1-based index, explicit mask, or None."""
    if subnet is None:
        return None
    if isinstance(subnet, (int, np.integer)):
        return agent.actor_masks.mask(int(subnet))
    return np.asarray(subnet, dtype=np.float64)


def resolve_actor_params(agent: AgentState, subnet) -> MlpParams:
    m = _actor_mask(agent, subnet)
    return agent.actor if m is None else masked_params(agent.actor, m)


def draw_policy_subnet(agent: AgentState):
    """Fresh policy subnet token from the subnet stream; None means dense."""
    cfg = agent.cfg
    if cfg.actor_mode == "omnet":
        return draw_index(SubnetSelector(agent.subnet_rng, cfg.n_subnets))
    if cfg.actor_mode == "infinity":
        return infinity_mask(agent.actor.layout, cfg.sparsity, agent.subnet_rng)
    return None


def act(agent: AgentState, obs, subnet=None, deterministic: bool = False) -> np.ndarray:
    """Action for one observation under the given policy subnet token."""
    out, _ = forward(resolve_actor_params(agent, subnet),
                     np.asarray(obs, dtype=np.float64))
    mu, log_std, _ = _policy_head(out, agent.act_dim)
    if deterministic:
        return agent.action_bound * np.tanh(mu)
    eps = agent.action_rng.standard_normal(agent.act_dim)
    a, _, _ = _squash(mu, log_std, eps, agent.action_bound)
    return a


def _q_values(params: MlpParams, mask: np.ndarray | None, x: np.ndarray) -> np.ndarray:
    p = params if mask is None else masked_params(params, mask)
    q, _ = forward(p, x)
    return q[:, 0]


def _target_value_nets(agent: AgentState) -> list:
    """(params, mask) pairs whose minimum forms the target value."""
    cfg = agent.cfg
    tgt = agent.targets[0]
    if cfg.critic_mode == "omnet":
        if cfg.n_subnets >= 2:
            i1, i2 = draw_two_distinct(SubnetSelector(agent.subnet_rng, cfg.n_subnets))
            return [(tgt, agent.critic_masks.mask(i1)),
                    (tgt, agent.critic_masks.mask(i2))]
        return [(tgt, agent.critic_masks.mask(1))]
    if cfg.critic_mode == "infinity":
        return [(tgt, infinity_mask(tgt.layout, cfg.sparsity, agent.subnet_rng)),
                (tgt, infinity_mask(tgt.layout, cfg.sparsity, agent.subnet_rng))]
    if cfg.critic_mode == "dense_double":
        return [(agent.targets[0], None), (agent.targets[1], None)]
    return [(tgt, None)]


def _policy_value_nets(agent: AgentState, rng: np.random.Generator | None = None) -> list:
    """(params, mask) pairs averaged when evaluating the critic for the policy:
    every fixed subnetwork, one fresh mask in fresh-mask mode, every dense net."""
    cfg = agent.cfg
    if cfg.critic_mode == "omnet":
        return [(agent.critics[0], agent.critic_masks.mask(i))
                for i in range(1, cfg.n_subnets + 1)]
    if cfg.critic_mode == "infinity":
        r = agent.subnet_rng if rng is None else rng
        return [(agent.critics[0],
                 infinity_mask(agent.critics[0].layout, cfg.sparsity, r))]
    return [(c, None) for c in agent.critics]


def td_target(agent: AgentState, batch: Batch) -> np.ndarray:
    """r + gamma (1 - done) (min_k Q_k(s', a') - alpha log pi(a'|s')).

    Subnet-stream order: target pair first, then the next-action policy
    token; the action noise comes from the action stream.
    """
    cfg = agent.cfg
    nets = _target_value_nets(agent)
    subnet = draw_policy_subnet(agent)
    out, _ = forward(resolve_actor_params(agent, subnet), batch.s_next)
    mu, log_std, _ = _policy_head(out, agent.act_dim)
    eps = agent.action_rng.standard_normal((len(batch), agent.act_dim))
    a_next, _, logp = _squash(mu, log_std, eps, agent.action_bound)
    x = np.concatenate([batch.s_next, a_next], axis=1)
    value = np.minimum.reduce([_q_values(p, m, x) for p, m in nets])
    if not cfg.entropy_off:
        value = value - agent.alpha * logp
    return batch.r + cfg.gamma * (1.0 - batch.done) * value


def critic_loss_grad(params: MlpParams, mask: np.ndarray | None,
                     x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared TD error and its exact gradient, zero off the mask."""
    p = params if mask is None else masked_params(params, mask)
    q, trace = forward(p, x)
    err = q[:, 0] - y
    loss = float(np.mean(err ** 2))
    grad = backward(p, trace, (2.0 / err.size) * err[:, None])
    if mask is not None:
        grad *= mask
    return loss, grad


def critic_update(agent: AgentState, batch: Batch, log: list | None = None) -> float:
    """One TD gradient step; returns the (mean) squared-error loss.

    Masked modes draw and update exactly one subnetwork per call (the
    online draw happens before the target draws inside td_target); dense
    modes update every network on the same batch and target.
    """
    cfg = agent.cfg
    if cfg.critic_mode == "omnet":
        i = draw_index(SubnetSelector(agent.subnet_rng, cfg.n_subnets))
        updates = [(0, agent.critic_masks.mask(i), i)]
    elif cfg.critic_mode == "infinity":
        m = infinity_mask(agent.critics[0].layout, cfg.sparsity, agent.subnet_rng)
        updates = [(0, m, 0)]
    else:
        updates = [(k, None, 0) for k in range(len(agent.critics))]
    y = td_target(agent, batch)
    x = np.concatenate([batch.s, batch.a], axis=1)
    losses = []
    for net, mask, ident in updates:
        loss, grad = critic_loss_grad(agent.critics[net], mask, x, y)
        adam_step(agent.critics[net], grad, agent.critic_opts[net], update_mask=mask)
        losses.append(loss)
        if log is not None:
            touched = agent.critics[net].n if mask is None else int(mask.sum())
            log.append({"kind": "critic_update", "net": net, "subnet": ident,
                        "mask": mask, "touched": touched, "loss": loss})
    return float(np.mean(losses))


def actor_loss_grad(agent: AgentState, s: np.ndarray, mask: np.ndarray | None,
                    eps: np.ndarray, nets: list) -> tuple[float, np.ndarray, float]:
    """Policy loss mean(alpha log pi - Qbar), its exact gradient, mean log pi.

    Pure given its inputs: the policy mask, the reparameterization noise and
    the (params, mask) critic list are supplied by the caller. The action
    path flows through the critic input gradient, the entropy path through
    the closed-form log-density derivatives.
    """
    params = agent.actor if mask is None else masked_params(agent.actor, mask)
    out, trace = forward(params, s)
    mu, log_std, dlog_std = _policy_head(out, agent.act_dim)
    std = np.exp(log_std)
    b = s.shape[0]
    a, t, logp = _squash(mu, log_std, eps, agent.action_bound)

    x = np.concatenate([s, a], axis=1)
    og_q = np.full((b, 1), -1.0 / (b * len(nets)))  # d loss / d q_k
    da = np.zeros((b, agent.act_dim))
    q_mean = np.zeros(b)
    for p, m in nets:
        pm = p if m is None else masked_params(p, m)
        q, qtrace = forward(pm, x)
        q_mean += q[:, 0] / len(nets)
        _, gin = backward(pm, qtrace, og_q, return_input_grad=True)
        da += gin[:, agent.obs_dim:]

    alpha = 0.0 if agent.cfg.entropy_off else agent.alpha
    loss = float(np.mean(alpha * logp - q_mean))

    # d logp / d u = 2 tanh(u); d a / d u = bound (1 - tanh(u)^2); u = mu + std eps
    da_du = agent.action_bound * (1.0 - t ** 2)
    g_mu = (alpha / b) * (2.0 * t) + da * da_du
    g_log_std = ((alpha / b) * (2.0 * t * std * eps - 1.0)
                 + da * da_du * std * eps)
    head_grad = np.concatenate([g_mu, g_log_std * dlog_std], axis=1)
    grad = backward(params, trace, head_grad)
    if mask is not None:
        grad *= mask
    return loss, grad, float(np.mean(logp))


def actor_update(agent: AgentState, batch: Batch,
                 log: list | None = None) -> tuple[float, float]:
    """One gradient step on the policy; returns (loss, batch-mean log-prob).

    Draws one policy subnet, evaluates the critic averaged over every
    subnetwork (every dense net, or one fresh mask), and applies a masked
    Adam step to the dense policy parameters.
    """
    subnet = draw_policy_subnet(agent)
    mask = _actor_mask(agent, subnet)
    eps = agent.action_rng.standard_normal((len(batch), agent.act_dim))
    nets = _policy_value_nets(agent)
    loss, grad, mean_logp = actor_loss_grad(agent, batch.s, mask, eps, nets)
    adam_step(agent.actor, grad, agent.actor_opt, update_mask=mask)
    if log is not None:
        touched = agent.actor.n if mask is None else int(mask.sum())
        log.append({"kind": "actor_update",
                    "subnet": subnet if isinstance(subnet, int) else 0,
                    "mask": mask, "touched": touched, "loss": loss})
    return loss, mean_logp


def temperature_update(agent: AgentState, batch: Batch,
                       mean_logp: float | None = None) -> float:
    """Adam step on log alpha minimizing E[-alpha (log pi + target_entropy)].

    mean_logp defaults to a fresh policy evaluation of the batch; the
    trainer passes the actor step's value so both use the same sample.
    Returns the new alpha (unchanged when entropy terms are off).
    """
    if agent.cfg.entropy_off:
        return agent.alpha
    if mean_logp is None:
        subnet = draw_policy_subnet(agent)
        out, _ = forward(resolve_actor_params(agent, subnet), batch.s)
        mu, log_std, _ = _policy_head(out, agent.act_dim)
        eps = agent.action_rng.standard_normal((len(batch), agent.act_dim))
        _, _, logp = _squash(mu, log_std, eps, agent.action_bound)
        mean_logp = float(np.mean(logp))
    g = -agent.alpha * (mean_logp + agent.target_entropy)
    agent.alpha_t += 1
    b1, b2, adam_eps = 0.9, 0.999, 1e-8
    agent.alpha_m = b1 * agent.alpha_m + (1.0 - b1) * g
    agent.alpha_v = b2 * agent.alpha_v + (1.0 - b2) * g * g
    mhat = agent.alpha_m / (1.0 - b1 ** agent.alpha_t)
    vhat = agent.alpha_v / (1.0 - b2 ** agent.alpha_t)
    agent.log_alpha -= agent.cfg.alpha_lr * mhat / (math.sqrt(vhat) + adam_eps)
    return agent.alpha


def target_sync(agent: AgentState) -> None:
    """Polyak update target <- (1 - tau) target + tau online, elementwise."""
    tau = agent.cfg.tau
    for online, tgt in zip(agent.critics, agent.targets):
        tgt.theta *= 1.0 - tau
        tgt.theta += tau * online.theta


@dataclass(frozen=True)
class EvalResult:
    env_step: int
    mean_return: float
    returns: tuple[float, ...]
    subnets: tuple[int, ...]   # 1-based policy subnet per episode, 0 = dense/fresh
    success_rate: float

    @property
    def min_return(self) -> float:
        return min(self.returns)

    @property
    def max_return(self) -> float:
        return max(self.returns)

    def subnet_mean(self, k: int) -> float:
        """Mean return of the episodes evaluated with subnet k, nan if none."""
        vals = [r for r, s in zip(self.returns, self.subnets) if s == k]
        return float(np.mean(vals)) if vals else math.nan


def evaluate(agent: AgentState, maze_cfg: MazeConfig, noise_scale: float,
             episodes: int, rng: np.random.Generator, env_step: int = 0) -> EvalResult:
    """Deterministic-action rollouts; masked policies cycle their subnets.

    Uses only the rng passed in, so evaluation never perturbs training."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    cfg = agent.cfg
    env = MazeEnv(maze_cfg, noise_scale, rng=rng)
    rets, ids = [], []
    successes = 0
    for e in range(episodes):
        if cfg.actor_mode == "omnet":
            subnet = 1 + e % cfg.n_subnets
        elif cfg.actor_mode == "infinity":
            subnet = infinity_mask(agent.actor.layout, cfg.sparsity, rng)
        else:
            subnet = None
        obs = env.reset()
        total = 0.0
        for _ in range(maze_cfg.max_steps):
            res = env.step(act(agent, obs, subnet=subnet, deterministic=True))
            total += res.reward
            obs = res.observation
            if res.done or res.truncated:
                break
        if res.done:
            successes += 1
        rets.append(total)
        ids.append(subnet if isinstance(subnet, int) else 0)
    return EvalResult(env_step, float(np.mean(rets)), tuple(rets), tuple(ids),
                      successes / episodes)


@dataclass
class StepRecord:
    env_step: int
    grad_steps: int
    critic_loss: float
    actor_loss: float   # nan on steps without a policy update
    alpha: float


@dataclass
class EpisodeRecord:
    grad_step: int      # gradient-step count when the episode ended
    subnet: int         # 1-based policy subnet, 0 = dense or fresh mask
    ret: float
    success: bool
    positions: list     # true (x, y) path: start, then one point per step


@dataclass
class TrainLog:
    steps: list[StepRecord] = field(default_factory=list)
    episodes: list[EpisodeRecord] = field(default_factory=list)
    evals: list[EvalResult] = field(default_factory=list)
    # (env_step, x, y) after every environment transition, noise-free
    positions: list[tuple[int, float, float]] = field(default_factory=list)
    first_success_step: int | None = None


class Trainer:
    """One training run: agent, environment, replay, logs, counters.

    Stream keys 0..7 of the root seed belong to the agent; key 8 drives
    the training environment and key 9 seeds the evaluation episodes, so
    evaluation count and cadence are part of the run definition.
    """

    def __init__(self, cfg: SacConfig, maze_cfg: MazeConfig | None = None,
                 noise_scale: float = 0.0, seed: int = 0,
                 eval_interval: int = 100, eval_episodes: int = 10):
        self.cfg = cfg
        self.maze_cfg = maze_cfg if maze_cfg is not None else MazeConfig()
        self.noise_scale = noise_scale
        self.seed = seed
        self.eval_interval = eval_interval
        self.eval_episodes = eval_episodes
        keys = np.random.SeedSequence(seed).generate_state(10, dtype=np.uint64)
        self.env = MazeEnv(self.maze_cfg, noise_scale,
                           rng=np.random.default_rng(int(keys[8])))
        self.agent = build_agent(cfg, self.env.observation_dim,
                                 self.env.action_dim,
                                 self.maze_cfg.action_bound, seed)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, self.env.observation_dim,
                                   self.env.action_dim)
        self.eval_key = int(keys[9])
        self.eval_count = 0
        self.env_step = 0
        self.grad_steps = 0
        self.log = TrainLog()
        self._obs: np.ndarray | None = None
        self._ep_subnet = None
        self._ep_return = 0.0
        self._ep_positions: list[tuple[float, float]] = []

    def run(self, n_env_steps: int, callback=None) -> TrainLog:
        for _ in range(n_env_steps):
            self.step_env(callback)
        return self.log

    def step_env(self, callback=None) -> None:
        """One environment transition plus its replay_ratio critic updates."""
        cfg, agent = self.cfg, self.agent
        if self._obs is None:
            self._obs = self.env.reset()
            self._ep_subnet = draw_policy_subnet(agent)
            self._ep_return = 0.0
            start = self.env.state.position
            self._ep_positions = [(float(start[0]), float(start[1]))]
        self.env_step += 1
        if self.env_step <= cfg.warmup_steps:
            a = agent.action_rng.uniform(-agent.action_bound,
                                         agent.action_bound, agent.act_dim)
        else:
            a = act(agent, self._obs, subnet=self._ep_subnet)
        res = self.env.step(a)
        pos = self.env.state.position
        self.log.positions.append((self.env_step, float(pos[0]), float(pos[1])))
        self._ep_positions.append((float(pos[0]), float(pos[1])))
        self.buffer.add(Transition(self._obs, a, res.reward,
                                   res.observation, res.done))
        self._ep_return += res.reward
        if res.done and self.log.first_success_step is None:
            self.log.first_success_step = self.env_step
        if callback is not None:
            callback({"kind": "env_step", "env_step": self.env_step,
                      "position": (float(pos[0]), float(pos[1]))})

        events: list | None = [] if callback is not None else None
        critic_loss = 0.0
        for _ in range(cfg.replay_ratio):
            batch = self.buffer.sample(cfg.batch_size, agent.batch_rng)
            critic_loss += critic_update(agent, batch, log=events)
            target_sync(agent)
            self.grad_steps += 1
        critic_loss /= cfg.replay_ratio
        actor_loss = math.nan
        if self.env_step % cfg.policy_delay == 0:
            batch = self.buffer.sample(cfg.batch_size, agent.batch_rng)
            actor_loss, mean_logp = actor_update(agent, batch, log=events)
            temperature_update(agent, batch, mean_logp)
        if events:
            for e in events:
                e["env_step"] = self.env_step
                callback(e)
        self.log.steps.append(StepRecord(self.env_step, self.grad_steps,
                                         critic_loss, actor_loss, agent.alpha))

        if res.done or res.truncated:
            self.log.episodes.append(EpisodeRecord(
                self.grad_steps,
                self._ep_subnet if isinstance(self._ep_subnet, int) else 0,
                self._ep_return, bool(res.done), self._ep_positions))
            self._obs = None
        else:
            self._obs = res.observation

        if self.eval_interval and self.env_step % self.eval_interval == 0:
            self.log.evals.append(self.run_eval())

    def run_eval(self) -> EvalResult:
        rng = np.random.default_rng(
            np.random.SeedSequence((self.eval_key, self.eval_count)))
        self.eval_count += 1
        return evaluate(self.agent, self.maze_cfg, self.noise_scale,
                        self.eval_episodes, rng, env_step=self.env_step)


class PolicyAdapter:
    """Stochastic-policy view of an agent with a private rng.

    Diagnostics that replay continuations from stored states go through
    this so the agent's own streams stay untouched."""

    def __init__(self, agent: AgentState, rng: np.random.Generator):
        self.agent = agent
        self.rng = rng

    def begin_episode(self):
        cfg = self.agent.cfg
        if cfg.actor_mode == "omnet":
            return int(self.rng.integers(1, cfg.n_subnets + 1))
        if cfg.actor_mode == "infinity":
            return infinity_mask(self.agent.actor.layout, cfg.sparsity, self.rng)
        return None

    def action(self, obs, subnet) -> np.ndarray:
        agent = self.agent
        out, _ = forward(resolve_actor_params(agent, subnet),
                         np.asarray(obs, dtype=np.float64))
        mu, log_std, _ = _policy_head(out, agent.act_dim)
        eps = self.rng.standard_normal(agent.act_dim)
        a, _, _ = _squash(mu, log_std, eps, agent.action_bound)
        return a

    def q_value(self, obs, action) -> float:
        """Critic estimate averaged the same way the policy objective is."""
        agent = self.agent
        x = np.concatenate([np.asarray(obs, dtype=np.float64),
                            np.asarray(action, dtype=np.float64)])
        vals = []
        for p, m in _policy_value_nets(agent, rng=self.rng):
            pm = p if m is None else masked_params(p, m)
            q, _ = forward(pm, x)
            vals.append(float(q[0]))
        return float(np.mean(vals))
