"""Visitation grids, graymap rendering, value-bias estimation, scores,
and the analytic cost model."""

import numpy as np
import pytest

from omnet.agent import (EpisodeRecord, PolicyAdapter, SacConfig, Trainer,
                         actor_layer_specs, critic_layer_specs)
from omnet.diagnostics import (GRID_SIZE, BiasSample, FlopReport,
                               ValueBiasReport, VisitationGrid, covered_cells,
                               estimate_flops, estimate_value_bias,
                               format_bias_report, format_trajectories,
                               forward_flops, normalized_score,
                               parse_trajectories, record_visit,
                               render_heatmap_pgm, save_heatmap_pgm)
from omnet.maze import MazeConfig, MazeEnv, StepResult


def parse_pgm(text):
    tokens = text.split()
    assert tokens[0] == "P2"
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    vals = np.array([int(t) for t in tokens[4:]], dtype=np.int64)
    assert vals.size == w * h
    return vals.reshape(h, w), maxval


# -------------------------------------------------------- visitation grid


def test_record_visit_cell_mapping():
    grid = VisitationGrid()
    record_visit(grid, (0.0, 0.0))
    record_visit(grid, (0.5, 0.5))
    record_visit(grid, (1.0, 1.0))            # closed edge folds inward
    record_visit(grid, (0.0333, 0.9667))
    assert grid.counts[0, 0] == 1
    assert grid.counts[15, 15] == 1
    assert grid.counts[29, 29] == 1
    assert grid.counts[0, 29] == 1
    assert grid.total == 4
    assert grid.counts.sum() == 4


def test_record_visit_boundary_cells():
    grid = VisitationGrid()
    # 1/30 is the first interior cell edge; just below it stays in cell 0
    record_visit(grid, (1.0 / 30.0, 0.0))
    record_visit(grid, (1.0 / 30.0 - 1e-12, 0.0))
    assert grid.counts[1, 0] == 1
    assert grid.counts[0, 0] == 1


def test_record_visit_rejects_outside():
    grid = VisitationGrid()
    for bad in [(-0.01, 0.5), (0.5, -0.01), (1.01, 0.5), (0.5, 1.01)]:
        with pytest.raises(ValueError):
            record_visit(grid, bad)
    assert grid.total == 0


def test_covered_cells():
    grid = VisitationGrid()
    assert covered_cells(grid) == 0
    for _ in range(5):
        record_visit(grid, (0.11, 0.11))
    record_visit(grid, (0.99, 0.42))
    assert covered_cells(grid) == 2


# ------------------------------------------------------- graymap rendering


def test_pgm_blank_grid_is_white():
    img, maxval = parse_pgm(render_heatmap_pgm(VisitationGrid()))
    assert maxval == 255
    assert img.shape == (240, 240)
    assert np.all(img == 255)


def test_pgm_orientation_top_left_is_high_y():
    grid = VisitationGrid()
    record_visit(grid, (0.01, 0.99))          # cell (0, 29)
    img, _ = parse_pgm(render_heatmap_pgm(grid))
    assert np.all(img[0:8, 0:8] == 0)         # lone visit is the darkest shade
    assert img.sum() == 255 * (240 * 240 - 64)

    grid = VisitationGrid()
    record_visit(grid, (0.99, 0.01))          # cell (29, 0) -> bottom right
    img, _ = parse_pgm(render_heatmap_pgm(grid))
    assert np.all(img[232:240, 232:240] == 0)
    assert img.sum() == 255 * (240 * 240 - 64)


def test_pgm_log_scaled_shades():
    grid = VisitationGrid()
    grid.counts[0, 0] = 1
    grid.counts[1, 0] = 3
    grid.total = 4
    img, _ = parse_pgm(render_heatmap_pgm(grid))
    # log1p(1)/log1p(3) = 0.5 exactly, so 255 - floor(127.5) = 128
    assert np.all(img[232:240, 0:8] == 128)
    assert np.all(img[232:240, 8:16] == 0)


def test_pgm_line_lengths_and_block_size():
    grid = VisitationGrid()
    grid.counts[:] = np.arange(GRID_SIZE * GRID_SIZE).reshape(GRID_SIZE,
                                                              GRID_SIZE)
    text = render_heatmap_pgm(grid)
    assert all(len(line) <= 70 for line in text.splitlines())
    img, _ = parse_pgm(render_heatmap_pgm(grid, block=2))
    assert img.shape == (60, 60)
    with pytest.raises(ValueError):
        render_heatmap_pgm(grid, block=0)


def test_pgm_save(tmp_path):
    grid = VisitationGrid()
    record_visit(grid, (0.2, 0.2))
    path = tmp_path / "grid.pgm"
    save_heatmap_pgm(grid, path)
    assert path.read_text() == render_heatmap_pgm(grid)


# ------------------------------------------------------------ trajectories


def test_trajectory_round_trip():
    eps = [EpisodeRecord(grad_step=40, subnet=3, ret=100.0, success=True,
                         positions=[(0.5, 0.5), (0.61, 0.47), (0.7, 0.55)]),
           EpisodeRecord(grad_step=80, subnet=1, ret=0.0, success=False,
                         positions=[(0.5, 0.5), (0.3, 0.3)])]
    parsed = parse_trajectories(format_trajectories(eps))
    assert len(parsed) == 2
    for ep, (stamp, subnet, path) in zip(eps, parsed):
        assert stamp == ep.grad_step
        assert subnet == ep.subnet
        assert np.array_equal(path, np.array(ep.positions))


def test_trajectory_empty_and_malformed():
    assert format_trajectories([]) == ""
    assert parse_trajectories("") == []
    with pytest.raises(ValueError):
        parse_trajectories("3 1 0.5,0.5,0.7")


# -------------------------------------------------------------- value bias


class FixedLengthEnv:
    """Reward 1 per step, terminates after a fixed number of steps."""

    def __init__(self, length):
        self.length = length
        self.t = 0

    def reset(self):
        self.t = 0
        return np.zeros(1)

    def snapshot(self):
        return self.t

    def restore(self, snap):
        self.t = snap

    def step(self, action):
        self.t += 1
        return StepResult(np.full(1, float(self.t)), 1.0,
                          self.t >= self.length, False)


class OneStepUniformEnv:
    """Single step, reward drawn uniform on [0, 1) from a live stream."""

    def __init__(self, rng):
        self.rng = rng
        self.t = 0

    def reset(self):
        self.t = 0
        return np.zeros(1)

    def snapshot(self):
        return self.t

    def restore(self, snap):
        self.t = snap

    def step(self, action):
        self.t += 1
        return StepResult(np.zeros(1), float(self.rng.random()), True, False)


class ConstantPolicy:
    def __init__(self, q=0.0):
        self.q = q

    def begin_episode(self):
        return 0

    def action(self, obs, token):
        return np.zeros(1)

    def q_value(self, obs, action):
        return self.q


def discounted_ones(n, gamma):
    total = 1.0
    disc = gamma
    for _ in range(n - 1):
        total += disc * 1.0
        disc *= gamma
    return total


def test_bias_sample_and_report():
    s = BiasSample(q_estimate=2.0, mc_return=0.5)
    assert s.bias == 1.5
    report = ValueBiasReport([BiasSample(1.0, 0.0), BiasSample(3.0, 1.0)])
    assert report.mean_bias() == 1.5
    # two samples, biases 1 and 2: sd = sqrt(0.5), se = sd / sqrt(2) = 0.5
    assert report.std_error() == pytest.approx(0.5, rel=1e-12)
    assert ValueBiasReport([BiasSample(1.0, 0.0)]).std_error() == float("inf")
    lines = format_bias_report(report).splitlines()
    assert [float(v) for v in lines[0].split()] == [1.0, 0.0, 1.0]


def test_bias_deterministic_discounting():
    gamma = 0.9
    report = estimate_value_bias(FixedLengthEnv(3), ConstantPolicy(0.0),
                                 gamma=gamma, n_states=3, n_rollouts=2,
                                 horizon=10, rng=np.random.default_rng(0))
    got = sorted(s.mc_return for s in report.samples)
    want = sorted(discounted_ones(n, gamma) for n in (1, 2, 3))
    assert got == want
    assert all(s.bias == -s.mc_return for s in report.samples)


def test_bias_horizon_truncates_with_zero_bootstrap():
    gamma = 0.95
    report = estimate_value_bias(FixedLengthEnv(50), ConstantPolicy(0.0),
                                 gamma=gamma, n_states=50, n_rollouts=1,
                                 horizon=5, rng=np.random.default_rng(1))
    got = sorted(s.mc_return for s in report.samples)
    # states at t = 0..49; a continuation from t runs min(5, 50 - t) steps
    want = sorted(discounted_ones(min(5, 50 - t), gamma) for t in range(50))
    assert got == want


def test_bias_estimate_centered_on_true_value():
    n_states, n_rollouts = 40, 25
    se = np.sqrt((1.0 / 12.0) / (n_states * n_rollouts))
    for seed in range(5):
        rng = np.random.default_rng(seed)
        env = OneStepUniformEnv(np.random.default_rng(1000 + seed))
        report = estimate_value_bias(env, ConstantPolicy(0.5), gamma=0.99,
                                     n_states=n_states, n_rollouts=n_rollouts,
                                     horizon=10, rng=rng)
        assert len(report.samples) == n_states
        assert abs(report.mean_bias()) < 4.0 * se
        assert 0.5 * se < report.std_error() < 1.5 * se


def test_bias_validation():
    env = FixedLengthEnv(3)
    rng = np.random.default_rng(0)
    for kw in ({"n_states": 0}, {"n_rollouts": 0}, {"horizon": 0}):
        args = {"n_states": 2, "n_rollouts": 1, "horizon": 5, **kw}
        with pytest.raises(ValueError):
            estimate_value_bias(env, ConstantPolicy(), 0.9, rng=rng, **args)


def test_bias_runs_against_live_agent_and_maze():
    trainer = Trainer(SacConfig(hidden_dims=(8, 8), batch_size=4,
                                replay_ratio=1, warmup_steps=4,
                                buffer_capacity=500),
                      maze_cfg=MazeConfig(max_steps=8), seed=3)
    trainer.run(12)
    env = MazeEnv(MazeConfig(max_steps=8), rng=np.random.default_rng(7))
    adapter = PolicyAdapter(trainer.agent, np.random.default_rng(11))
    report = estimate_value_bias(env, adapter, gamma=0.99, n_states=6,
                                 n_rollouts=2, horizon=8,
                                 rng=np.random.default_rng(5))
    assert len(report.samples) == 6
    assert np.isfinite(report.biases()).all()


# ------------------------------------------------------------------ scores


def test_normalized_score_window_and_mean():
    flat = [(s, 50.0) for s in range(1, 13)]
    assert normalized_score([flat], best=100.0) == pytest.approx(0.5)
    # only steps beyond 5/6 of the last one count: 11 and 12 here
    ramp = [(s, 0.0) for s in range(1, 11)] + [(11, 90.0), (12, 110.0)]
    assert normalized_score([ramp], best=100.0) == pytest.approx(1.0)
    assert normalized_score([flat, ramp], best=100.0) == pytest.approx(0.75)


def test_normalized_score_scale_invariance():
    rng = np.random.default_rng(2)
    run = [(s, float(r)) for s, r in enumerate(rng.uniform(0, 90, 30), 1)]
    base = normalized_score([run], best=90.0)
    scaled = [(s, 7.0 * r) for s, r in run]
    assert normalized_score([scaled], best=630.0) == pytest.approx(base,
                                                                   rel=1e-12)


def test_normalized_score_validation():
    with pytest.raises(ValueError):
        normalized_score([], best=1.0)
    with pytest.raises(ValueError):
        normalized_score([[]], best=1.0)
    with pytest.raises(ValueError):
        normalized_score([[(1, 1.0)]], best=0.0)


# -------------------------------------------------------------- cost model


def tiny_cfg(**kw):
    base = dict(hidden_dims=(4,), batch_size=2, replay_ratio=1,
                policy_delay=1, n_subnets=5)
    base.update(kw)
    return SacConfig(**base)


def test_flops_match_hand_count():
    # critic layers on 4 inputs: (2*4*4+4) + 6*4 + 4 = 64, then 2*4+1 = 9
    # actor layers on 2 inputs: (2*2*4+4) + 4 = 24, then 2*4*4+4 = 36
    cfg = tiny_cfg()
    assert forward_flops(critic_layer_specs(2, 2, cfg)) == 73
    assert forward_flops(actor_layer_specs(2, 2, cfg)) == 60
    report = estimate_flops(cfg, 2, 2)
    f_c, f_a = 73 * 2, 60 * 2
    assert report.critic_update == 2 * f_c + 3 * f_c
    assert report.actor_update == 3 * f_a + 3 * f_c
    assert report.temperature_update == 2 * 2 + 16
    assert report.per_env_step == (report.critic_update + f_a
                                   + report.actor_update
                                   + report.temperature_update)
    assert report.normalized == 1.0


def test_flops_independent_of_subnet_count():
    reports = [estimate_flops(tiny_cfg(n_subnets=n), 2, 2)
               for n in (2, 4, 5, 8)]
    assert len({r.critic_update for r in reports}) == 1
    assert len({r.actor_update for r in reports}) == 1
    assert len({r.per_env_step for r in reports}) == 1
    inf = estimate_flops(tiny_cfg(critic_mode="infinity",
                                  actor_mode="infinity"), 2, 2)
    assert inf.critic_update == reports[0].critic_update


def test_flops_double_critic_exactly_doubles_critic_update():
    single = estimate_flops(tiny_cfg(critic_mode="dense_single",
                                     actor_mode="dense"), 2, 2)
    double = estimate_flops(tiny_cfg(critic_mode="dense_double",
                                     actor_mode="dense"), 2, 2)
    assert double.critic_update == 2 * single.critic_update


def test_flops_schedule_and_baseline():
    cfg = tiny_cfg(replay_ratio=20, policy_delay=4)
    r = estimate_flops(cfg, 2, 2)
    f_a = 60 * 2
    assert r.per_env_step == (20 * (r.critic_update + f_a)
                              + (r.actor_update + r.temperature_update) / 4)
    base = estimate_flops(tiny_cfg(critic_mode="dense_single",
                                   actor_mode="dense"), 2, 2)
    rel = estimate_flops(cfg, 2, 2, baseline=base)
    assert rel.normalized == pytest.approx(r.per_env_step / base.per_env_step)
    assert estimate_flops(tiny_cfg(entropy_off=True), 2,
                          2).temperature_update == 0.0


def test_flops_single_subnet_matches_single_dense_critic():
    lone = estimate_flops(tiny_cfg(n_subnets=1), 2, 2)
    dense = estimate_flops(tiny_cfg(critic_mode="dense_single",
                                    actor_mode="dense"), 2, 2)
    assert lone.critic_update == dense.critic_update
