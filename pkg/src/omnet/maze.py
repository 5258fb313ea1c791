"""Sparse-reward continuous 2D maze on the unit square.

The agent starts at the center, actions are clipped 2D displacements, and
the only reward is +100 for entering the goal disc near the upper-right
corner. Moves whose path segment touches any wall (interior walls or the
square boundary) are rejected outright: the agent stays put. Episodes
truncate after max_steps without success.

Observations are the true position plus a per-episode uniform noise offset
(zero when noise_scale is 0); noise never affects dynamics or reward.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

import numpy as np

Segment = tuple[float, float, float, float]  # x1, y1, x2, y2

WALL_TOUCH_TOL = 1e-12

# Three-sided enclosure around the start, open toward the lower-left: the
# direct path from (1/2, 1/2) to the goal is blocked on the right and top.
DEFAULT_WALLS: tuple[Segment, ...] = (
    (2 / 3, 1 / 3, 2 / 3, 2 / 3),   # right wall of the enclosure
    (1 / 3, 1 / 3, 2 / 3, 1 / 3),   # bottom wall
    (1 / 3, 2 / 3, 2 / 3, 2 / 3),   # top wall
)

_BOUNDARY: tuple[Segment, ...] = (
    (0.0, 0.0, 1.0, 0.0),
    (1.0, 0.0, 1.0, 1.0),
    (1.0, 1.0, 0.0, 1.0),
    (0.0, 1.0, 0.0, 0.0),
)


@dataclass(frozen=True)
class MazeConfig:
    walls: tuple[Segment, ...] = DEFAULT_WALLS
    start: tuple[float, float] = (0.5, 0.5)
    goal: tuple[float, float] = (5 / 6, 5 / 6)
    goal_radius: float = 0.1
    max_steps: int = 50
    action_bound: float = 0.2
    success_reward: float = 100.0

    def __post_init__(self):
        if not (0.0 < self.start[0] < 1.0 and 0.0 < self.start[1] < 1.0):
            raise ValueError("start must be strictly inside the unit square")
        if self.goal_radius <= 0:
            raise ValueError("goal_radius must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.action_bound <= 0:
            raise ValueError("action_bound must be > 0")
        for w in self.walls:
            if abs(w[0] - w[2]) > 0 and abs(w[1] - w[3]) > 0:
                raise ValueError(f"wall {w} is not axis-aligned")
            if _point_segment_distance(self.goal, w) <= self.goal_radius:
                raise ValueError(f"wall {w} intersects the goal region")


@dataclass
class EnvState:
    position: np.ndarray
    step_count: int
    noise: np.ndarray       # constant within the episode
    finished: bool = False

    def copy(self) -> "EnvState":
        return EnvState(self.position.copy(), self.step_count,
                        self.noise.copy(), self.finished)


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool          # terminal success only; never set on the time limit
    truncated: bool


def _point_segment_distance(p, seg) -> float:
    px, py = p
    x1, y1, x2, y2 = seg
    dx, dy = x2 - x1, y2 - y1
    length2 = dx * dx + dy * dy
    if length2 == 0.0:
        return float(np.hypot(px - x1, py - y1))
    t = max(0.0, min(1.0, ((px - x1) * dx + (py - y1) * dy) / length2))
    return float(np.hypot(px - (x1 + t * dx), py - (y1 + t * dy)))


def _orient(ax, ay, bx, by, cx, cy) -> float:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_segment(ax, ay, bx, by, px, py, tol) -> bool:
    return (min(ax, bx) - tol <= px <= max(ax, bx) + tol
            and min(ay, by) - tol <= py <= max(ay, by) + tol)


def segments_intersect(p1, p2, q1, q2, tol: float = WALL_TOUCH_TOL) -> bool:
    """True when segments p1-p2 and q1-q2 cross or touch within tol."""
    d1 = _orient(q1[0], q1[1], q2[0], q2[1], p1[0], p1[1])
    d2 = _orient(q1[0], q1[1], q2[0], q2[1], p2[0], p2[1])
    d3 = _orient(p1[0], p1[1], p2[0], p2[1], q1[0], q1[1])
    d4 = _orient(p1[0], p1[1], p2[0], p2[1], q2[0], q2[1])

    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and \
       ((d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)):
        return True
    # Touch / collinear cases: an endpoint lying (within tol) on the other segment.
    if abs(d1) <= tol and _on_segment(q1[0], q1[1], q2[0], q2[1], p1[0], p1[1], tol):
        return True
    if abs(d2) <= tol and _on_segment(q1[0], q1[1], q2[0], q2[1], p2[0], p2[1], tol):
        return True
    if abs(d3) <= tol and _on_segment(p1[0], p1[1], p2[0], p2[1], q1[0], q1[1], tol):
        return True
    if abs(d4) <= tol and _on_segment(p1[0], p1[1], p2[0], p2[1], q2[0], q2[1], tol):
        return True
    return False


def move_blocked(position: np.ndarray, proposed: np.ndarray,
                 config: MazeConfig) -> bool:
    p1 = (float(position[0]), float(position[1]))
    p2 = (float(proposed[0]), float(proposed[1]))
    for w in config.walls + _BOUNDARY:
        if segments_intersect(p1, p2, (w[0], w[1]), (w[2], w[3])):
            return True
    return False


def reset(config: MazeConfig, noise_scale: float,
          rng: np.random.Generator) -> tuple[EnvState, np.ndarray]:
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    noise = rng.uniform(-noise_scale, noise_scale, 2)
    state = EnvState(position=np.array(config.start, dtype=np.float64),
                     step_count=0, noise=noise)
    return state, state.position + noise


def step(state: EnvState, action: np.ndarray, config: MazeConfig) -> StepResult:
    if state.finished:
        raise RuntimeError("episode already finished; reset the environment")
    a = np.clip(np.asarray(action, dtype=np.float64),
                -config.action_bound, config.action_bound)
    proposed = state.position + a
    if not move_blocked(state.position, proposed, config):
        state.position = proposed
    state.step_count += 1
    dist = float(np.hypot(state.position[0] - config.goal[0],
                          state.position[1] - config.goal[1]))
    done = dist < config.goal_radius
    reward = config.success_reward if done else 0.0
    truncated = (not done) and state.step_count >= config.max_steps
    state.finished = done or truncated
    return StepResult(state.position + state.noise, reward, done, truncated)


class MazeEnv:
    """Stateful wrapper owning one episode stream and its rng."""

    def __init__(self, config: MazeConfig | None = None,
                 noise_scale: float = 0.0,
                 rng: np.random.Generator | int | None = None):
        self.config = config if config is not None else MazeConfig()
        self.noise_scale = noise_scale
        if isinstance(rng, np.random.Generator):
            self.rng = rng
        else:
            self.rng = np.random.default_rng(rng)
        self.state: EnvState | None = None

    @property
    def observation_dim(self) -> int:
        return 2

    @property
    def action_dim(self) -> int:
        return 2

    def reset(self) -> np.ndarray:
        self.state, obs = reset(self.config, self.noise_scale, self.rng)
        return obs

    def step(self, action: np.ndarray) -> StepResult:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        return step(self.state, action, self.config)

    def snapshot(self) -> EnvState:
        if self.state is None:
            raise RuntimeError("no live episode to snapshot")
        return self.state.copy()

    def restore(self, snap: EnvState) -> np.ndarray:
        self.state = snap.copy()
        return self.state.position + self.state.noise


_MAZE_KEYS = {"walls", "start", "goal", "goal_radius", "max_steps",
              "action_bound", "success_reward"}


def _parse_pair(text: str) -> tuple[float, float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated numbers, got {text!r}")
    return parts[0], parts[1]


def parse_maze_config(text: str) -> MazeConfig:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if cp.sections() != ["maze"]:
        raise ValueError("maze config must contain exactly a [maze] section")
    return maze_config_from_section(cp["maze"])


def maze_config_from_section(sec) -> MazeConfig:
    """Build a MazeConfig from one parsed INI section mapping."""
    unknown = set(sec) - _MAZE_KEYS
    if unknown:
        raise ValueError(f"unknown maze config keys: {sorted(unknown)}")
    kwargs = {}
    if "walls" in sec:
        walls = []
        for chunk in sec["walls"].split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            vals = [float(v) for v in chunk.split(",")]
            if len(vals) != 4:
                raise ValueError(f"wall needs 4 numbers, got {chunk!r}")
            walls.append(tuple(vals))
        kwargs["walls"] = tuple(walls)
    if "start" in sec:
        kwargs["start"] = _parse_pair(sec["start"])
    if "goal" in sec:
        kwargs["goal"] = _parse_pair(sec["goal"])
    if "goal_radius" in sec:
        kwargs["goal_radius"] = float(sec["goal_radius"])
    if "max_steps" in sec:
        kwargs["max_steps"] = int(sec["max_steps"])
    if "action_bound" in sec:
        kwargs["action_bound"] = float(sec["action_bound"])
    if "success_reward" in sec:
        kwargs["success_reward"] = float(sec["success_reward"])
    return MazeConfig(**kwargs)


def format_maze_config(config: MazeConfig) -> str:
    walls = " ; ".join(
        ",".join(repr(v) for v in w) for w in config.walls)
    lines = [
        "[maze]",
        f"walls = {walls}",
        f"start = {config.start[0]!r}, {config.start[1]!r}",
        f"goal = {config.goal[0]!r}, {config.goal[1]!r}",
        f"goal_radius = {config.goal_radius!r}",
        f"max_steps = {config.max_steps}",
        f"action_bound = {config.action_bound!r}",
        f"success_reward = {config.success_reward!r}",
    ]
    return "\n".join(lines) + "\n"


def load_maze_config(path) -> MazeConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_maze_config(fh.read())


def save_maze_config(config: MazeConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_maze_config(config))
