"""Training a Double DQN on the Catch environment, small enough to watch:
a paddle catches a falling ball on an 84x84 pixel screen; the episode pays
+1 for a catch and -1 for a miss.

This runs a few thousand frames with the CNN backbone — enough to see the
loss move and evaluation scores change, not enough to master the game.
The full desk-scale run lives in the CLI (`swindqn train`).

Run with:  python3 demos/03_catch_training.py
"""

import numpy as np

from swindqn.agent import DoubleDQNAgent, TrainConfig, train
from swindqn.envs import AgentEnv, CatchEnv
from swindqn.metrics import evaluate

# ---------------------------------------------------------------------------
# 1. A fast-decay configuration for a short run. Every value here mirrors
# a key in the `key = value` config files the CLI reads.
# ---------------------------------------------------------------------------

cfg = TrainConfig(
    max_frames=20_000,
    eps_decay_frames=15_000,
    warmup_transitions=500,
    sync_frames=1_000,
    steps_per_eval=1_000,
    replay_size=10_000,
    batch=16,
    lr=2.5e-4,
    noop_max=1,
)

agent = DoubleDQNAgent("cnn", num_actions=3, cfg=cfg, seed=0)
env = AgentEnv(CatchEnv(), noop_max=cfg.noop_max, mode="train")

# ---------------------------------------------------------------------------
# 2. Train, evaluating every 1,000 agent steps. The evaluation runs whole
# episodes at a tiny epsilon and reports raw (unclipped) returns.
# ---------------------------------------------------------------------------


def eval_hook(a):
    rng = np.random.default_rng(a.rng_env.integers(0, 2**31))
    rec = evaluate(a.policy, CatchEnv, rng, episodes=10, noop_max=1,
                   step=a.steps, frames=a.frames)
    print(f"frames {a.frames:6d}  eval mean {rec.mean:+.2f}  "
          f"(min {rec.min:+.0f}, max {rec.max:+.0f})")
    return True


log = train(agent, env, eval_hook=eval_hook)

# ---------------------------------------------------------------------------
# 3. The returned log holds one row per gradient update.
# ---------------------------------------------------------------------------

losses = [row.loss for row in log]
print(f"\n{len(log)} updates; loss {losses[0]:.4f} -> {losses[-1]:.4f}")
print(f"final epsilon {log[-1].epsilon:.3f} at frame {log[-1].frames}")
