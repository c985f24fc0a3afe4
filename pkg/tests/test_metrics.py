import numpy as np
import pytest

from swindqn.agent import QNetwork
from swindqn.envs import CatchEnv
from swindqn.metrics import (
    EvalRecord,
    activation_maps,
    auc,
    evaluate,
    human_normalized,
    load_anchors,
    performance_profile,
)


class TestEvalRecord:
    def test_aggregates_recompute(self):
        rec = EvalRecord(step=10, frames=40, episode_scores=[1.0, 1.0, 3.0])
        assert rec.mean == pytest.approx(5 / 3)
        assert rec.std == pytest.approx(np.sqrt(8 / 9))
        assert rec.min == 1.0 and rec.max == 3.0

    def test_random_aggregates(self):
        rng = np.random.default_rng(0)
        scores = list(rng.standard_normal(20))
        rec = EvalRecord(step=0, frames=0, episode_scores=scores)
        assert rec.mean == pytest.approx(np.mean(scores))
        assert rec.std == pytest.approx(np.std(scores))


class FixedSeedCatch(CatchEnv):
    """Catch variant that ignores the reset seed: fully repeatable episodes."""

    def reset(self, seed=None):
        return super().reset(7)


class ConstantQNet:
    """Always prefers action 1 (stay put)."""

    num_actions = 3

    def q_values(self, states):
        return np.tile(np.array([[0.0, 1.0, 0.0]], np.float32), (len(states), 1))


class TestEvaluate:
    def test_default_episode_count(self):
        rec = evaluate(ConstantQNet(), CatchEnv, np.random.default_rng(1), noop_max=1)
        assert len(rec.episode_scores) == 5

    def test_deterministic_policy_fixed_env_zero_std(self):
        rec = evaluate(ConstantQNet(), FixedSeedCatch, np.random.default_rng(2),
                       episodes=4, eval_epsilon=0.0, noop_max=1)
        assert rec.std == 0.0

    def test_scores_are_terminal_rewards(self):
        # Catch pays exactly one +-1 at episode end, unclipped in eval mode.
        rec = evaluate(ConstantQNet(), CatchEnv, np.random.default_rng(3),
                       episodes=10, noop_max=1)
        assert all(s in (-1.0, 1.0) for s in rec.episode_scores)

    def test_rejects_zero_episodes(self):
        with pytest.raises(ValueError):
            evaluate(ConstantQNet(), CatchEnv, np.random.default_rng(4), episodes=0)


class TestNormalization:
    def test_reference_rows(self):
        anchors = load_anchors()
        assert human_normalized(857.8, anchors, "breakout") == pytest.approx(29.73, abs=0.01)
        assert human_normalized(21.0, anchors, "pong") == pytest.approx(1.18, abs=0.01)
        assert human_normalized(34.0, anchors, "freeway") == pytest.approx(1.15, abs=0.01)

    def test_anchor_fixed_points(self):
        anchors = load_anchors()
        for task, (lo, hi) in anchors.items():
            assert human_normalized(lo, anchors, task) == 0.0
            assert human_normalized(hi, anchors, task) == pytest.approx(1.0)

    def test_missing_task_raises(self):
        with pytest.raises(KeyError):
            human_normalized(1.0, load_anchors(), "no-such-task")

    def test_case_and_whitespace_insensitive(self):
        anchors = load_anchors()
        assert human_normalized(21.0, anchors, " Pong ") == human_normalized(
            21.0, anchors, "pong")

    def test_affine_invariance(self):
        # Rescaling score and both anchors by the same affine map is a no-op.
        rng = np.random.default_rng(5)
        for _ in range(20):
            lo, hi = sorted(rng.standard_normal(2) * 10)
            a, b = float(rng.uniform(0.5, 3.0)), float(rng.standard_normal())
            score = float(rng.standard_normal() * 5)
            plain = human_normalized(score, {"t": (lo, hi)}, "t")
            mapped = human_normalized(a * score + b, {"t": (a * lo + b, a * hi + b)}, "t")
            assert mapped == pytest.approx(plain)

    def test_custom_file_and_degenerate_anchor(self, tmp_path):
        good = tmp_path / "a.csv"
        good.write_text("# comment\nmytask, 1.0, 3.0\n")
        assert load_anchors(good) == {"mytask": (1.0, 3.0)}
        bad = tmp_path / "b.csv"
        bad.write_text("mytask, 2.0, 2.0\n")
        with pytest.raises(ValueError):
            load_anchors(bad)


class TestAuc:
    def test_constant_curve_is_one(self):
        curve = [(i, 4.0) for i in range(10)]
        assert auc(curve, 4.0) == pytest.approx(1.0)

    def test_half_reference(self):
        assert auc([(0, 0.0), (1, 4.0)], 4.0) == pytest.approx(0.5)

    def test_linear_ramp_closed_form(self):
        k, ref = 11, 3.0
        curve = [(i, ref * i / (k - 1)) for i in range(k)]
        assert auc(curve, ref) == pytest.approx(0.5)

    def test_linearity_in_scores(self):
        rng = np.random.default_rng(6)
        scores = rng.random(8)
        curve = [(i, float(s)) for i, s in enumerate(scores)]
        doubled = [(i, 2.0 * float(s)) for i, s in enumerate(scores)]
        assert auc(doubled, 1.0) == pytest.approx(2.0 * auc(curve, 1.0))

    def test_error_cases(self):
        with pytest.raises(ValueError):
            auc([], 1.0)
        with pytest.raises(ValueError):
            auc([(0, 1.0)], 0.0)


class TestPerformanceProfile:
    def test_saturation(self):
        assert performance_profile([1.0, 2.0, 3.0], [0.0]) == [1.0]
        assert performance_profile([1.0, 2.0, 3.0], [5.0]) == [0.0]

    def test_strict_threshold(self):
        # Scores exactly at tau do not count.
        assert performance_profile([0.5, 1.0, 1.5, 2.5], [1.0]) == [0.5]

    def test_monotone_non_increasing(self):
        rng = np.random.default_rng(7)
        scores = list(rng.standard_normal(40))
        taus = sorted(rng.standard_normal(15))
        profile = performance_profile(scores, taus)
        assert all(0.0 <= p <= 1.0 for p in profile)
        assert all(a >= b for a, b in zip(profile, profile[1:]))

    def test_unsorted_taus_rejected(self):
        with pytest.raises(ValueError):
            performance_profile([1.0], [2.0, 1.0])


class TestActivationMaps:
    def test_swin_shapes_and_block_structure(self):
        qnet = QNetwork("swin", 3, np.random.default_rng(8))
        stack = np.random.default_rng(9).integers(0, 256, (4, 84, 84)).astype(np.uint8)
        maps = activation_maps(qnet, stack)
        assert sorted(maps) == ["stage0", "stage1", "stage2"]
        for name, factor in [("stage0", 3), ("stage1", 6), ("stage2", 12)]:
            m = maps[name]
            assert m.shape == (84, 84)
            assert m.min() >= 0.0 and m.max() <= 1.0
            # Nearest upsampling: constant within each factor x factor block.
            blocks = m.reshape(84 // factor, factor, 84 // factor, factor)
            assert np.ptp(blocks, axis=(1, 3)).max() == 0.0

    def test_cnn_maps(self):
        qnet = QNetwork("cnn", 3, np.random.default_rng(10))
        stack = np.random.default_rng(11).integers(0, 256, (4, 84, 84)).astype(np.uint8)
        maps = activation_maps(qnet, stack)
        assert sorted(maps) == ["stage0", "stage1", "stage2"]
        assert all(m.shape == (84, 84) for m in maps.values())

    def test_zero_input_zero_guard(self):
        # A zero frame stack silences ReLU stages; the min-max guard must
        # produce flat zero maps instead of dividing by zero.
        qnet = QNetwork("cnn", 3, np.random.default_rng(12))
        for p in qnet.params.values():
            if p.data.ndim == 1:
                p.data[...] = 0.0
        maps = activation_maps(qnet, np.zeros((4, 84, 84), np.uint8))
        for m in maps.values():
            np.testing.assert_array_equal(m, np.zeros((84, 84)))
