"""The Swin-MLP Q-network, stage by stage: patch embedding, windowed token
mixing with shifted windows, patch merging, and the pooled Q head.

Run with:  python3 demos/02_swin_backbone.py
"""

import numpy as np

from swindqn.swin import (
    SwinConfig,
    forward_q,
    init_swin_params,
    parameter_count,
    patch_embed,
    window_merge,
    window_partition,
)
from swindqn.tensor import Tensor

rng = np.random.default_rng(0)

# ---------------------------------------------------------------------------
# 1. Geometry. Four stacked 84x84 frames embed into a 28x28 token grid,
# then two patch mergings halve the grid and double the channels.
# ---------------------------------------------------------------------------

cfg = SwinConfig(num_actions=4)
for s, (h, w, c) in enumerate(cfg.stage_geometry()):
    print(f"stage {s}: {h}x{w} tokens, {c} channels")

params = init_swin_params(cfg, rng)
print("parameters:", parameter_count(params))

frames = Tensor(rng.random((1, 4, 84, 84), dtype=np.float32))
tokens = patch_embed(frames, params, cfg)
print("after patch embedding:", tokens.shape, "(tokens x channels)")

# ---------------------------------------------------------------------------
# 2. Window partition/merge are exact inverses, shifted or not. The shift
# is realized as a cyclic roll, so nothing is lost at the borders.
# ---------------------------------------------------------------------------

grid = Tensor(rng.standard_normal((1, 14 * 14, 6)).astype(np.float32))
for shift in (0, 3):
    windows = window_partition(grid, 14, 14, 7, shift)
    back = window_merge(windows, 14, 14, 7, shift)
    exact = np.array_equal(back.data, grid.data)
    print(f"shift {shift}: partition -> {windows.shape}, merge inverts exactly: {exact}")

# ---------------------------------------------------------------------------
# 3. Q-values. Training mode draws stochastic-depth masks; inference is
# deterministic. The two mixer flavors share the surrounding plumbing.
# ---------------------------------------------------------------------------

q = forward_q(frames, params, cfg)
print("Q-values:", np.round(q.data[0], 4))

attn_cfg = SwinConfig(num_actions=4, mixer_kind="windowed_attention")
attn_params = init_swin_params(attn_cfg, rng)
q_attn = forward_q(frames, attn_params, attn_cfg)
print("Q-values (attention mixer):", np.round(q_attn.data[0], 4))
