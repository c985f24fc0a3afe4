"""Acceptance suite: one test per release criterion, at the stated
tolerances. Criterion 7 (desk-scale learning) is marked `slow` and is
deselected by default; run `pytest -m slow` to include it.
"""

import numpy as np
import pytest

from swindqn import tensor as T
from swindqn.agent import (
    DoubleDQNAgent,
    TrainConfig,
    compute_target,
    tabular_double_q_update,
    train,
)
from swindqn.checkpoint import load, save
from swindqn.cnn import CnnConfig, forward_q_cnn, init_cnn_params
from swindqn.envs import AgentEnv, CatchEnv
from swindqn.metrics import evaluate, human_normalized, load_anchors
from swindqn.replay import Batch
from swindqn.swin import (
    SwinConfig,
    drop_path,
    forward_q,
    init_swin_params,
    patch_embed,
    window_merge,
    window_partition,
)
from swindqn.tensor import Tensor

from fd import finite_difference, rel_error


class TestCriterion1ShapeConformance:
    def test_patch_embedding_and_stage_grids(self):
        cfg = SwinConfig(num_actions=4)
        assert cfg.stage_geometry() == [(28, 28, 96), (14, 14, 192), (7, 7, 384)]
        params = init_swin_params(cfg, np.random.default_rng(0))
        frames = Tensor(np.random.default_rng(1).random((1, 4, 84, 84), dtype=np.float32))
        tokens = patch_embed(frames, params, cfg)
        assert tokens.shape == (1, 784, 96)


def _directional_check(loss_fn, tensors, step=1e-5, tol=1e-3):
    """End-to-end gradient check via random directional derivatives.

    For each tensor, compare grad . d against the central difference of the
    loss along a random unit direction d.
    """
    loss = loss_fn()
    loss.backward()
    rng = np.random.default_rng(99)
    for t in tensors:
        d = rng.standard_normal(t.data.shape)
        d /= np.linalg.norm(d) + 1e-12
        analytic = float(np.sum(t.grad * d))
        original = t.data.copy()
        t.data[...] = original + step * d
        hi = loss_fn().item()
        t.data[...] = original - step * d
        lo = loss_fn().item()
        t.data[...] = original
        numeric = (hi - lo) / (2 * step)
        scale = max(abs(analytic), abs(numeric), 1.0)
        assert abs(analytic - numeric) / scale < tol


class TestCriterion2GradientFidelity:
    def test_every_op_matches_finite_differences(self):
        rng = np.random.default_rng(2)

        def arr(*shape):
            return rng.standard_normal(shape)

        x, y = arr(3, 4), arr(3, 4)
        mat_a, mat_b = arr(3, 4), arr(4, 2)
        conv_x, conv_w, conv_b = arr(1, 2, 7, 7), arr(3, 2, 3, 3), arr(3)
        mix_x, mix_w = arr(2, 5, 4), arr(2, 5, 5)
        ln_x, ln_g, ln_b = arr(3, 6), arr(6), arr(6)
        probe, probe2, probe_roll = arr(3, 4), arr(3, 6), arr(1, 2, 7, 7)
        actions = np.array([0, 1, 1])
        index = np.array([2, 0, 2, 1])
        targets = arr(3)

        cases = {
            "add": ([x, y], lambda a, b: T.mean(Tensor(a, True) + Tensor(b, True) * 2.0)),
            "mul": ([x, y], lambda a, b: T.mean(Tensor(a, True) * Tensor(b, True))),
            "matmul": ([mat_a, mat_b], lambda a, b: T.mean(T.matmul(Tensor(a, True), Tensor(b, True)))),
            "reshape": ([x], lambda a: T.mean(T.reshape(Tensor(a, True), (4, 3)) * probe.reshape(4, 3))),
            "transpose": ([x], lambda a: T.mean(T.transpose(Tensor(a, True), (1, 0)) * probe.T)),
            "roll2d": ([conv_x], lambda a: T.mean(
                T.roll2d(Tensor(a, True), (2, 3), axes=(2, 3)) * probe_roll)),
            "relu": ([x], lambda a: T.mean(T.relu(Tensor(a, True)) * probe)),
            "gelu": ([x], lambda a: T.mean(T.gelu(Tensor(a, True)) * probe)),
            "softmax": ([x], lambda a: T.mean(T.softmax(Tensor(a, True), axis=-1) * probe)),
            "mean": ([x], lambda a: T.mean(T.mean(Tensor(a, True), axis=0) * probe[0])),
            "gather": ([x[:, :3].copy()], lambda a: T.mean(T.gather(Tensor(a, True), actions))),
            "index_select": ([x], lambda a: T.mean(T.index_select(Tensor(a, True), index))),
            "layer_norm": ([ln_x, ln_g, ln_b], lambda a, g, b: T.mean(
                T.layer_norm(Tensor(a, True), Tensor(g, True), Tensor(b, True)) * probe2)),
            "conv2d": ([conv_x, conv_w, conv_b], lambda a, w, b: T.mean(
                T.conv2d(Tensor(a, True), Tensor(w, True), Tensor(b, True), stride=2))),
            "grouped_conv1d_mix": ([mix_x, mix_w], lambda a, w: T.mean(
                T.grouped_conv1d_mix(Tensor(a, True), Tensor(w, True)))),
            "smooth_l1": ([targets + 0.3], lambda a: T.smooth_l1(Tensor(a, True), targets)),
        }

        for name, (arrays, build) in cases.items():
            loss = build(*arrays)
            loss.backward()
            stack, seen, leaves = [loss], set(), {}
            while stack:
                t = stack.pop()
                if id(t) in seen:
                    continue
                seen.add(id(t))
                stack.extend(t._parents)
                if t.requires_grad and t._backward is None:
                    leaves[t.data.tobytes()] = t
            numeric = finite_difference(lambda *xs: build(*xs).item(), arrays)
            for a, n in zip(arrays, numeric):
                leaf = leaves[np.asarray(a, np.float64).tobytes()]
                assert rel_error(leaf.grad, n) < 1e-4, name

    def test_swin_backbone_end_to_end(self):
        cfg = SwinConfig(num_actions=3, blocks_per_layer=(2,), heads_per_layer=(2,),
                         embed_dim=6, mlp_ratio=2, drop_path_rate=0.0, input_size=21)
        rng = np.random.default_rng(3)
        params = init_swin_params(cfg, rng, dtype=np.float64)
        frames = Tensor(rng.standard_normal((1, 4, 21, 21)), requires_grad=True)
        probe = rng.standard_normal((1, 3))

        def loss_fn():
            return T.mean(forward_q(frames, params, cfg) * probe)

        _directional_check(loss_fn, [frames] + list(params.values()))

    def test_cnn_backbone_end_to_end(self):
        cfg = CnnConfig(num_actions=3)
        rng = np.random.default_rng(4)
        params = init_cnn_params(cfg, rng, dtype=np.float64)
        frames = Tensor(rng.standard_normal((1, 4, 84, 84)) * 0.1, requires_grad=True)
        probe = rng.standard_normal((1, 3))

        def loss_fn():
            return T.mean(forward_q_cnn(frames, params, cfg) * probe)

        _directional_check(loss_fn, [frames] + list(params.values()))


class TestCriterion3InverseAndLocality:
    def test_partition_merge_exact_inverse(self):
        rng = np.random.default_rng(5)
        grid = Tensor(rng.standard_normal((2, 14 * 14, 6)).astype(np.float32))
        for shift in (0, 3):
            windows = window_partition(grid, 14, 14, 7, shift)
            back = window_merge(windows, 14, 14, 7, shift)
            np.testing.assert_array_equal(back.data, grid.data)

    @pytest.mark.parametrize("shifts,expect_cross", [((0, 0), False), ((0, 3), True)])
    def test_cross_window_gradient_needs_shift(self, shifts, expect_cross):
        # Probe: gradient of the token at window (0, 0) w.r.t. the input.
        # Unshifted blocks confine it to one window; a shifted block leaks
        # across the window boundary.
        cfg = SwinConfig(num_actions=3, blocks_per_layer=(2,), heads_per_layer=(2,),
                         embed_dim=6, mlp_ratio=2, drop_path_rate=0.0, input_size=42)
        rng = np.random.default_rng(6)
        params = init_swin_params(cfg, rng, dtype=np.float64)
        for k, v in params.items():  # silence the channel MLP: pure mixer probe
            if "mlp.fc2" in k:
                v.data[...] = 0.0
        frames = Tensor(rng.standard_normal((1, 4, 42, 42)), requires_grad=True)

        tokens = patch_embed(frames, params, cfg)
        from swindqn.swin import swin_block

        x = tokens
        for b, shift in enumerate(shifts):
            x = swin_block(x, 14, 14, params, f"stage0.block{b}.", 2, shift, cfg,
                           training=False, rng=None)
        T.mean(T.index_select(T.transpose(x, (1, 0, 2)), np.array([0]))).backward()
        per_pixel = np.abs(frames.grad[0]).sum(axis=0).reshape(42, 42)
        inside = per_pixel[:21, :21].sum()  # window (0,0) covers 7x7 tokens = 21x21 px
        outside = per_pixel.sum() - inside
        assert inside > 0.0
        assert (outside > 1e-12) == expect_cross


class TestCriterion4DoubleTargetInequality:
    def test_thousand_random_batches(self):
        rng = np.random.default_rng(7)

        class Rows:
            def __init__(self, t):
                self.t = t
                self.num_actions = t.shape[1]

            def q_values(self, states):
                return self.t

        for _ in range(1000):
            n, k = 8, int(rng.integers(2, 6))
            qa, qb = rng.standard_normal((2, n, k)).astype(np.float32)
            batch = Batch(states=np.zeros((n, 4, 4, 4), np.float32),
                          actions=rng.integers(0, k, n),
                          rewards=rng.standard_normal(n).astype(np.float32),
                          next_states=np.zeros((n, 4, 4, 4), np.float32),
                          terminals=(rng.random(n) < 0.3).astype(np.float32))
            target = compute_target(batch, Rows(qa), Rows(qb), 0.99)
            upper = batch.rewards + 0.99 * qb.max(axis=1) * (1.0 - batch.terminals)
            assert np.all(target <= upper + 1e-6)
            mask = batch.terminals == 1.0
            np.testing.assert_array_equal(target[mask], batch.rewards[mask])


CHAIN = {
    (0, 0): (0, 0.0), (0, 1): (1, 0.0),
    (1, 0): (0, 0.0), (1, 1): (2, 0.0),
    (2, 0): (1, 0.0), (2, 1): (None, 1.0),
}


class TestCriterion5TabularConvergence:
    def test_chain_mdp_within_1e5_updates(self):
        gamma = 0.9
        q = np.zeros((3, 2))
        for _ in range(10_000):  # value-iteration oracle
            new = np.array([[r + (gamma * q[s2].max() if s2 is not None else 0.0)
                             for a, (s2, r) in ((a, CHAIN[(s, a)]) for a in (0, 1))]
                            for s in range(3)])
            if np.abs(new - q).max() < 1e-12:
                break
            q = new
        qa, qb = np.zeros((3, 2)), np.zeros((3, 2))
        rng = np.random.default_rng(8)
        for _ in range(100_000):
            s, a = int(rng.integers(0, 3)), int(rng.integers(0, 2))
            s2, r = CHAIN[(s, a)]
            tabular_double_q_update(qa, qb, s, a, r, s2, alpha=0.1, gamma=gamma,
                                    which="A" if rng.random() < 0.5 else "B")
        assert np.abs(qa - q).max() < 1e-3
        assert np.abs(qb - q).max() < 1e-3


class TestCriterion6MetricReproduction:
    def test_normalized_reference_rows(self):
        anchors = load_anchors()
        assert human_normalized(857.8, anchors, "breakout") == pytest.approx(29.73, abs=0.01)
        assert human_normalized(21.0, anchors, "pong") == pytest.approx(1.18, abs=0.01)
        assert human_normalized(34.0, anchors, "freeway") == pytest.approx(1.15, abs=0.01)


def desk_config(max_frames):
    """Catch-scale hyperparameters (all overridable via the config system)."""
    return TrainConfig(max_frames=max_frames, eps_decay_frames=60_000,
                       lr=2.5e-4, sync_frames=2_000, warmup_transitions=2_000,
                       steps_per_eval=2_500, replay_size=50_000, batch=32,
                       noop_max=1)


def run_desk_training(backbone, max_frames, seed=0):
    """Train on Catch until a 100-episode eval mean reaches +0.9, or the
    frame budget runs out. Returns (passed, best_mean, frames_used)."""
    agent = DoubleDQNAgent(backbone, 3, desk_config(max_frames), seed=seed)
    env = AgentEnv(CatchEnv(), noop_max=1, mode="train")
    result = {"passed": False, "best": -1.0, "frames": 0}

    def eval_hook(a):
        rng = np.random.default_rng(a.rng_env.integers(0, 2**31))
        probe = evaluate(a.policy, CatchEnv, rng, episodes=10, noop_max=1,
                         step=a.steps, frames=a.frames)
        result["best"] = max(result["best"], probe.mean)
        result["frames"] = a.frames
        print(f"[{backbone}] frames {a.frames}: probe mean {probe.mean:+.2f}", flush=True)
        if probe.mean >= 0.9:
            full = evaluate(a.policy, CatchEnv, rng, episodes=100, noop_max=1)
            print(f"[{backbone}] frames {a.frames}: 100-episode mean {full.mean:+.2f}",
                  flush=True)
            result["best"] = max(result["best"], full.mean)
            if full.mean >= 0.9:
                result["passed"] = True
                return False  # stop training
        return True

    train(agent, env, eval_hook=eval_hook)
    return result["passed"], result["best"], result["frames"]


@pytest.mark.slow
class TestCriterion7DeskScaleLearning:
    def test_cnn_catch_within_200k_frames(self):
        passed, best, frames = run_desk_training("cnn", 200_000)
        assert passed, f"best 100-episode mean {best:+.2f} by frame {frames}"

    def test_swin_catch_within_300k_frames(self):
        passed, best, frames = run_desk_training("swin", 300_000)
        assert passed, f"best 100-episode mean {best:+.2f} by frame {frames}"


class TestCriterion8StochasticDepth:
    def test_drop_frequency_and_inference_determinism(self):
        rng = np.random.default_rng(9)
        x = Tensor(np.ones((10_000, 1), dtype=np.float32))
        out = drop_path(x, 0.1, True, rng).data
        assert abs((out == 0.0).mean() - 0.1) < 0.01
        cfg = SwinConfig(num_actions=3)
        params = init_swin_params(cfg, np.random.default_rng(10))
        frames = Tensor(np.random.default_rng(11).random((1, 4, 84, 84), dtype=np.float32))
        a = forward_q(frames, params, cfg, training=False).data
        b = forward_q(frames, params, cfg, training=False).data
        np.testing.assert_array_equal(a, b)


class TestCriterion9DeterminismAndPersistence:
    def test_thousand_step_runs_bitwise_identical(self):
        logs = []
        for _ in range(2):
            cfg = TrainConfig(max_frames=4000, warmup_transitions=200, batch=16,
                              sync_frames=400, noop_max=1, replay_size=4000)
            agent = DoubleDQNAgent("cnn", 3, cfg, seed=17)
            logs.append(train(agent, AgentEnv(CatchEnv(), noop_max=1)))
        assert agent.steps == 1000
        assert logs[0] == logs[1]

    def test_checkpoint_round_trip_bitwise(self, tmp_path):
        agent = DoubleDQNAgent("swin", 3, TrainConfig(), seed=18)
        x = np.random.default_rng(12).random((2, 4, 84, 84), dtype=np.float32)
        before = agent.policy.q_values(x)
        path = tmp_path / "net.swdq"
        save(path, agent.policy.params, agent.optimizer, agent.frames)
        other = DoubleDQNAgent("swin", 3, TrainConfig(), seed=19)
        from swindqn.checkpoint import restore_into

        restore_into(load(path), other.policy.params)
        np.testing.assert_array_equal(other.policy.q_values(x), before)


class TestCriterion10NoopStartDistribution:
    def test_uniform_on_0_to_29(self):
        env = AgentEnv(CatchEnv(), noop_max=30)
        rng = np.random.default_rng(13)
        counts = np.zeros(30, dtype=np.int64)
        for _ in range(10_000):
            env.reset(int(rng.integers(0, 2**31)), rng)
            counts[env.last_noop_count] += 1
        freqs = counts / counts.sum()
        assert np.all(np.abs(freqs - 1 / 30) < 0.02)
