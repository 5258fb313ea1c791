"""Maze dynamics: hand-computed goal/collision cases, an independent
line-intersection oracle for the fuzz run, noise and snapshot semantics,
config file round-trips."""

import numpy as np
import numpy.testing as npt
import pytest

from omnet.maze import (DEFAULT_WALLS, EnvState, MazeConfig, MazeEnv,
                        format_maze_config, move_blocked, parse_maze_config,
                        reset, segments_intersect, step)

OPEN_FIELD = MazeConfig(walls=())


def fresh_state(position, step_count=0):
    return EnvState(position=np.asarray(position, dtype=np.float64),
                    step_count=step_count, noise=np.zeros(2))


def crossing_oracle(p1, p2, walls):
    """Segment intersection via the parametric 2x2 system, independently of
    the orientation-test implementation."""
    d = np.asarray(p2, dtype=float) - np.asarray(p1, dtype=float)
    for x1, y1, x2, y2 in walls:
        e = np.array([x2 - x1, y2 - y1])
        mat = np.array([[d[0], -e[0]], [d[1], -e[1]]])
        rhs = np.array([x1 - p1[0], y1 - p1[1]])
        det = np.linalg.det(mat)
        if abs(det) < 1e-14:
            continue  # parallel; endpoint touches are exercised separately
        t, u = np.linalg.solve(mat, rhs)
        if -1e-9 <= t <= 1 + 1e-9 and -1e-9 <= u <= 1 + 1e-9:
            return True
    return False


# ------------------------------------------------------------------- goal


def test_goal_reached_within_radius():
    # (0.8, 0.8) -> distance to (5/6, 5/6) is hypot(1/30, 1/30) ~ 0.047 < 0.1
    state = fresh_state([0.8, 0.8])
    res = step(state, np.zeros(2), MazeConfig())
    assert res.done and not res.truncated
    assert res.reward == 100.0
    assert state.finished


def test_goal_boundary_is_strict():
    # 0.75 - 0.5 = 0.25 exactly in binary, so the distance equals the radius.
    cfg = MazeConfig(walls=(), goal=(0.5, 0.5), goal_radius=0.25,
                     start=(0.75, 0.5))
    res = step(fresh_state([0.75, 0.5]), np.zeros(2), cfg)
    assert not res.done and res.reward == 0.0
    res = step(fresh_state([0.7, 0.5]), np.zeros(2), cfg)
    assert res.done and res.reward == 100.0


def test_zero_reward_everywhere_outside_goal():
    rng = np.random.default_rng(0)
    cfg = MazeConfig()
    for _ in range(200):
        pos = rng.uniform(0.02, 0.98, 2)
        if np.hypot(pos[0] - 5 / 6, pos[1] - 5 / 6) < cfg.goal_radius + 0.01:
            continue
        res = step(fresh_state(pos), rng.uniform(-0.2, 0.2, 2), cfg)
        if not res.done:
            assert res.reward == 0.0


# ----------------------------------------------------------------- actions


def test_actions_clip_to_bound():
    state = fresh_state([0.5, 0.5])
    step(state, np.array([10.0, -10.0]), OPEN_FIELD)
    npt.assert_array_equal(state.position, [0.7, 0.3])


def test_small_actions_apply_exactly():
    state = fresh_state([0.5, 0.5])
    step(state, np.array([0.125, -0.0625]), OPEN_FIELD)  # exact in binary
    npt.assert_array_equal(state.position, [0.625, 0.4375])


# --------------------------------------------------------------- collision


def test_wall_blocks_and_open_side_passes():
    cfg = MazeConfig()
    # Straight right from the start crosses the enclosure wall at x = 2/3.
    state = fresh_state([0.5, 0.5])
    res = step(state, np.array([0.2, 0.0]), cfg)
    npt.assert_array_equal(state.position, [0.5, 0.5])
    assert state.step_count == 1 and res.reward == 0.0
    # Straight left passes through the open side.
    state = fresh_state([0.5, 0.5])
    step(state, np.array([-0.2, 0.0]), cfg)
    npt.assert_array_equal(state.position, [0.3, 0.5])


def test_boundary_is_a_wall():
    state = fresh_state([0.05, 0.5])
    step(state, np.array([-0.2, 0.0]), OPEN_FIELD)
    npt.assert_array_equal(state.position, [0.05, 0.5])


def test_touching_a_wall_counts_as_contact():
    cfg = MazeConfig()
    # Move ending exactly on the bottom enclosure wall y = 1/3.
    state = fresh_state([0.6, 0.25])
    step(state, np.array([0.0, 1 / 3 - 0.25]), cfg)
    npt.assert_array_equal(state.position, [0.6, 0.25])
    # Path grazing the wall corner (2/3, 1/3) is also contact.
    state = fresh_state([0.5, 0.5])
    step(state, np.array([0.2, -0.2]), cfg)  # exits through the corner point
    npt.assert_array_equal(state.position, [0.5, 0.5])


def test_move_blocked_agrees_with_independent_oracle():
    rng = np.random.default_rng(123)
    cfg = MazeConfig()
    walls = DEFAULT_WALLS + ((0.0, 0.0, 1.0, 0.0), (1.0, 0.0, 1.0, 1.0),
                             (1.0, 1.0, 0.0, 1.0), (0.0, 1.0, 0.0, 0.0))
    disagreements = 0
    for _ in range(2000):
        p = rng.uniform(0.01, 0.99, 2)
        q = p + rng.uniform(-0.25, 0.25, 2)
        got = move_blocked(p, q, cfg)
        want = crossing_oracle(p, q, walls)
        if got != want:
            # Allow only hairline cases where the oracle's epsilon differs.
            d = min(abs(np.cross(np.array(w[2:]) - np.array(w[:2]), q - np.array(w[:2])))
                    for w in walls)
            assert d < 1e-6
            disagreements += 1
    assert disagreements <= 2


def test_fuzz_positions_stay_inside_and_legal():
    rng = np.random.default_rng(7)
    env = MazeEnv(rng=8)
    for _ in range(60):
        env.reset()
        prev = env.state.position.copy()
        while True:
            res = env.step(rng.uniform(-0.3, 0.3, 2))
            pos = env.state.position
            assert 0.0 <= pos[0] <= 1.0 and 0.0 <= pos[1] <= 1.0
            moved = not np.array_equal(pos, prev)
            if moved:
                assert not crossing_oracle(prev, pos, DEFAULT_WALLS)
            dist = np.hypot(pos[0] - 5 / 6, pos[1] - 5 / 6)
            assert res.done == (dist < 0.1)
            assert res.reward == (100.0 if res.done else 0.0)
            prev = pos.copy()
            if res.done or res.truncated:
                break


# ------------------------------------------------------------- termination


def test_truncates_after_max_steps_without_success():
    cfg = MazeConfig()
    state = fresh_state([0.1, 0.1])
    for k in range(1, 51):
        res = step(state, np.zeros(2), cfg)
        if k < 50:
            assert not res.truncated and not res.done
    assert res.truncated and not res.done and res.reward == 0.0
    with pytest.raises(RuntimeError):
        step(state, np.zeros(2), cfg)


def test_success_on_final_step_is_done_not_truncated():
    state = fresh_state([0.8, 0.8], step_count=49)
    res = step(state, np.zeros(2), MazeConfig())
    assert res.done and not res.truncated and res.reward == 100.0


# ------------------------------------------------------------------- noise


def test_noise_constant_within_episode_and_bounded():
    env = MazeEnv(noise_scale=0.05, rng=3)
    obs = env.reset()
    noise = env.state.noise.copy()
    assert np.all(np.abs(noise) <= 0.05)
    npt.assert_array_equal(obs, env.state.position + noise)
    for _ in range(10):
        res = env.step(np.array([0.05, 0.0]))
        npt.assert_array_equal(env.state.noise, noise)  # frozen for the episode
        npt.assert_array_equal(res.observation, env.state.position + noise)
        if res.done or res.truncated:
            break
    env.reset()
    assert not np.array_equal(env.state.noise, noise)  # fresh draw


def test_zero_noise_observation_is_position():
    env = MazeEnv(noise_scale=0.0, rng=1)
    obs = env.reset()
    npt.assert_array_equal(obs, env.state.position)
    res = env.step(np.array([0.1, 0.1]))
    npt.assert_array_equal(res.observation, env.state.position)


def test_noise_draws_match_uniform_stream():
    rng_env = np.random.default_rng(42)
    rng_ref = np.random.default_rng(42)
    state, obs = reset(MazeConfig(), 0.07, rng_env)
    want = rng_ref.uniform(-0.07, 0.07, 2)
    npt.assert_array_equal(state.noise, want)
    npt.assert_array_equal(obs, state.position + want)


def test_negative_noise_scale_rejected():
    with pytest.raises(ValueError):
        reset(MazeConfig(), -0.1, np.random.default_rng(0))


# -------------------------------------------------------- snapshot/restore


def test_snapshot_restore_replays_identically():
    env = MazeEnv(noise_scale=0.03, rng=11)
    env.reset()
    actions = np.random.default_rng(5).uniform(-0.2, 0.2, (6, 2))
    env.step(actions[0])
    snap = env.snapshot()
    first = [env.step(a) for a in actions[1:]]
    obs = env.restore(snap)
    npt.assert_array_equal(obs, env.state.position + env.state.noise)
    second = [env.step(a) for a in actions[1:]]
    for a, b in zip(first, second):
        npt.assert_array_equal(a.observation, b.observation)
        assert (a.reward, a.done, a.truncated) == (b.reward, b.done, b.truncated)


def test_snapshot_is_independent_copy():
    env = MazeEnv(rng=0)
    env.reset()
    snap = env.snapshot()
    env.step(np.array([0.1, 0.0]))
    assert snap.step_count == 0
    npt.assert_array_equal(snap.position, [0.5, 0.5])


# ------------------------------------------------------------------ config


def test_config_validation():
    with pytest.raises(ValueError):
        MazeConfig(start=(1.5, 0.5))
    with pytest.raises(ValueError):
        MazeConfig(walls=((0.1, 0.1, 0.3, 0.4),))       # not axis aligned
    with pytest.raises(ValueError):
        MazeConfig(walls=((0.7, 0.8, 0.95, 0.8),))      # cuts the goal disc
    with pytest.raises(ValueError):
        MazeConfig(goal_radius=0.0)
    with pytest.raises(ValueError):
        MazeConfig(max_steps=0)
    with pytest.raises(ValueError):
        MazeConfig(action_bound=-0.2)


def test_config_text_round_trip():
    cfg = MazeConfig()
    text = format_maze_config(cfg)
    back = parse_maze_config(text)
    assert back == cfg
    custom = MazeConfig(walls=((0.25, 0.25, 0.25, 0.5),), start=(0.1, 0.9),
                        goal=(0.9, 0.1), goal_radius=0.05, max_steps=10,
                        action_bound=0.3, success_reward=1.0)
    assert parse_maze_config(format_maze_config(custom)) == custom


def test_config_rejects_unknown_keys():
    text = format_maze_config(MazeConfig()) + "\nteleport = yes\n"
    with pytest.raises(ValueError):
        parse_maze_config(text)


def test_config_file_round_trip(tmp_path):
    from omnet.maze import load_maze_config, save_maze_config
    path = tmp_path / "maze.ini"
    save_maze_config(MazeConfig(), path)
    assert load_maze_config(path) == MazeConfig()
