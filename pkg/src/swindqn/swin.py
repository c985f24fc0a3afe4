"""Swin-MLP Q-network: patch embedding, shifted-window token mixing,
patch merging, and a pooled Q-value head.

The network is a plain function of a flat ``{name: Tensor}`` parameter
dict, so policy/target copies and checkpointing are trivial. The token
mixer comes in two config-selectable flavors: the default per-head
spatial MLP (grouped kernel-1 1D convolution over token positions) and
windowed attention with a learned relative position bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor

MIXER_KINDS = ("spatial_mlp", "windowed_attention")


@dataclass
class SwinConfig:
    """Backbone hyperparameters; defaults follow the 84x84 pixel setup."""

    num_actions: int = 3
    blocks_per_layer: tuple[int, ...] = (2, 3, 2)
    heads_per_layer: tuple[int, ...] = (3, 3, 6)
    patch_size: int = 3
    window_size: int = 7
    embed_dim: int = 96
    mlp_ratio: int = 4
    drop_path_rate: float = 0.1
    mixer_kind: str = "spatial_mlp"
    input_size: int = 84
    in_channels: int = 4

    @property
    def layers(self) -> int:
        return len(self.blocks_per_layer)

    def stage_geometry(self) -> list[tuple[int, int, int]]:
        """(grid_h, grid_w, channels) per stage, after validation."""
        if self.input_size % self.patch_size != 0:
            raise ValueError(
                f"input size {self.input_size} not divisible by patch size {self.patch_size}"
            )
        if len(self.heads_per_layer) != self.layers:
            raise ValueError("heads_per_layer and blocks_per_layer lengths differ")
        if self.mixer_kind not in MIXER_KINDS:
            raise ValueError(f"unknown mixer kind {self.mixer_kind!r}; one of {MIXER_KINDS}")
        if not 0.0 <= self.drop_path_rate < 1.0:
            raise ValueError(f"drop path rate must be in [0, 1), got {self.drop_path_rate}")
        grid = self.input_size // self.patch_size
        dim = self.embed_dim
        out = []
        for s, heads in enumerate(self.heads_per_layer):
            if grid % self.window_size != 0:
                raise ValueError(
                    f"stage {s} grid {grid} not divisible by window {self.window_size}"
                )
            if dim % heads != 0:
                raise ValueError(f"stage {s} channels {dim} not divisible by {heads} heads")
            out.append((grid, grid, dim))
            if s < self.layers - 1:
                if grid % 2 != 0:
                    raise ValueError(f"stage {s} grid {grid} is odd; cannot patch-merge")
                grid //= 2
                dim *= 2
        return out

    def shift_for_block(self, stage: int, block_index: int) -> int:
        """Even blocks unshifted; odd blocks shifted by half a window.

        Degenerate case: when the window covers the whole stage grid there
        is a single window and shifting is disabled.
        """
        grid = self.stage_geometry()[stage][0]
        if block_index % 2 == 0 or grid == self.window_size:
            return 0
        return self.window_size // 2


# -- window bookkeeping -------------------------------------------------------


def window_partition(grid: Tensor, h: int, w: int, window: int, shift: int) -> Tensor:
    """Tile a [B, H*W, C] token grid into [B*nW, window^2, C] windows.

    A positive shift cyclically rolls the grid by (-shift, -shift) first.
    """
    if h % window != 0 or w % window != 0:
        raise ValueError(f"grid {h}x{w} not divisible by window {window}")
    if not 0 <= shift < window:
        raise ValueError(f"shift {shift} outside [0, {window})")
    b, l, c = grid.shape
    if l != h * w:
        raise ValueError(f"token count {l} != {h}x{w}")
    x = T.reshape(grid, (b, h, w, c))
    if shift > 0:
        x = T.roll2d(x, (-shift, -shift), axes=(1, 2))
    x = T.reshape(x, (b, h // window, window, w // window, window, c))
    x = T.transpose(x, (0, 1, 3, 2, 4, 5))
    return T.reshape(x, (b * (h // window) * (w // window), window * window, c))


def window_merge(windows: Tensor, h: int, w: int, window: int, shift: int) -> Tensor:
    """Exact inverse of :func:`window_partition`, including the reverse roll."""
    nbw, n, c = windows.shape
    nw = (h // window) * (w // window)
    if n != window * window or nbw % nw != 0:
        raise ValueError(
            f"window geometry {windows.shape} inconsistent with grid {h}x{w}, window {window}"
        )
    b = nbw // nw
    x = T.reshape(windows, (b, h // window, w // window, window, window, c))
    x = T.transpose(x, (0, 1, 3, 2, 4, 5))
    x = T.reshape(x, (b, h, w, c))
    if shift > 0:
        x = T.roll2d(x, (shift, shift), axes=(1, 2))
    return T.reshape(x, (b, h * w, c))


def relative_position_index(window: int) -> np.ndarray:
    """[N, N] map from a token pair to a bias-table row, N = window^2.

    The row depends only on the coordinate offset between the two tokens,
    so it takes one of (2*window-1)^2 values.
    """
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij"))
    flat = coords.reshape(2, -1)
    rel = flat[:, :, None] - flat[:, None, :]  # [2, N, N], offsets in (-w, w)
    rel = rel + (window - 1)
    return rel[0] * (2 * window - 1) + rel[1]


def drop_path(branch: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Stochastic depth on a residual branch, per sample.

    In training each sample's branch is zeroed with probability `rate` and
    survivors are scaled by 1/(1-rate); at inference the branch passes
    through unscaled.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"drop path rate must be in [0, 1), got {rate}")
    if rate == 0.0 or not training:
        return branch
    if rng is None:
        raise ValueError("training-mode drop_path needs an rng")
    keep = 1.0 - rate
    shape = (branch.shape[0],) + (1,) * (len(branch.shape) - 1)
    mask = (rng.random(shape) < keep).astype(branch.dtype.type) / keep
    return branch * mask


# -- mixers -------------------------------------------------------------------


def spatial_mlp_mix(windows: Tensor, heads: int, weight: Tensor) -> Tensor:
    """Per-head learned token mixing inside each window."""
    if windows.shape[-1] % heads != 0:
        raise ValueError(f"channels {windows.shape[-1]} not divisible by {heads} heads")
    return T.grouped_conv1d_mix(windows, weight)


def windowed_attention(
    windows: Tensor,
    heads: int,
    qkv_weight: Tensor,
    qkv_bias: Tensor,
    proj_weight: Tensor,
    proj_bias: Tensor,
    bias_table: Tensor,
    bias_index: np.ndarray,
) -> Tensor:
    """Multi-head self-attention inside each window with relative position bias."""
    m, n, c = windows.shape
    if c % heads != 0:
        raise ValueError(f"channels {c} not divisible by {heads} heads")
    d = c // heads
    qkv = T.matmul(windows, qkv_weight) + qkv_bias  # [M, N, 3C]
    qkv = T.reshape(qkv, (m, n, 3, heads, d))
    qkv = T.transpose(qkv, (2, 0, 3, 1, 4))  # [3, M, heads, N, d]
    # Split q, k, v via row gathers on the leading axis.
    q, k, v = (
        T.reshape(T.index_select(qkv, np.array([i])), (m, heads, n, d)) for i in range(3)
    )
    scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(d))
    bias = T.index_select(bias_table, bias_index.reshape(-1))  # [N*N, heads]
    bias = T.transpose(T.reshape(bias, (n, n, heads)), (2, 0, 1))
    scores = scores + bias
    attn = T.softmax(scores, axis=-1)
    out = T.matmul(attn, v)  # [M, heads, N, d]
    out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (m, n, c))
    return T.matmul(out, proj_weight) + proj_bias


# -- parameter construction ---------------------------------------------------


def _trunc_normal(rng: np.random.Generator, shape, std=0.02, dtype=np.float32):
    """Normal(0, std) truncated to two standard deviations."""
    x = rng.standard_normal(shape)
    while True:
        bad = np.abs(x) > 2.0
        if not bad.any():
            break
        x[bad] = rng.standard_normal(int(bad.sum()))
    return (x * std).astype(dtype)


def init_swin_params(
    config: SwinConfig, rng: np.random.Generator, dtype=np.float32
) -> dict[str, Tensor]:
    """Build the full parameter dict for :func:`forward_q`."""
    geometry = config.stage_geometry()
    n = config.window_size * config.window_size
    p: dict[str, np.ndarray] = {}
    p["patch_embed.weight"] = _trunc_normal(
        rng, (config.embed_dim, config.in_channels, config.patch_size, config.patch_size), dtype=dtype
    )
    p["patch_embed.bias"] = np.zeros(config.embed_dim, dtype=dtype)
    for s, (gh, gw, c) in enumerate(geometry):
        heads = config.heads_per_layer[s]
        for b in range(config.blocks_per_layer[s]):
            pre = f"stage{s}.block{b}."
            p[pre + "norm1.gain"] = np.ones(c, dtype=dtype)
            p[pre + "norm1.bias"] = np.zeros(c, dtype=dtype)
            if config.mixer_kind == "spatial_mlp":
                p[pre + "mix.weight"] = _trunc_normal(rng, (heads, n, n), dtype=dtype)
            else:
                p[pre + "attn.qkv.weight"] = _trunc_normal(rng, (c, 3 * c), dtype=dtype)
                p[pre + "attn.qkv.bias"] = np.zeros(3 * c, dtype=dtype)
                p[pre + "attn.proj.weight"] = _trunc_normal(rng, (c, c), dtype=dtype)
                p[pre + "attn.proj.bias"] = np.zeros(c, dtype=dtype)
                p[pre + "attn.relpos.table"] = np.zeros(
                    ((2 * config.window_size - 1) ** 2, heads), dtype=dtype
                )
            p[pre + "norm2.gain"] = np.ones(c, dtype=dtype)
            p[pre + "norm2.bias"] = np.zeros(c, dtype=dtype)
            hidden = config.mlp_ratio * c
            p[pre + "mlp.fc1.weight"] = _trunc_normal(rng, (c, hidden), dtype=dtype)
            p[pre + "mlp.fc1.bias"] = np.zeros(hidden, dtype=dtype)
            p[pre + "mlp.fc2.weight"] = _trunc_normal(rng, (hidden, c), dtype=dtype)
            p[pre + "mlp.fc2.bias"] = np.zeros(c, dtype=dtype)
        if s < config.layers - 1:
            p[f"merge{s}.norm.gain"] = np.ones(4 * c, dtype=dtype)
            p[f"merge{s}.norm.bias"] = np.zeros(4 * c, dtype=dtype)
            p[f"merge{s}.reduce.weight"] = _trunc_normal(rng, (4 * c, 2 * c), dtype=dtype)
    c_final = geometry[-1][2]
    p["head.norm.gain"] = np.ones(c_final, dtype=dtype)
    p["head.norm.bias"] = np.zeros(c_final, dtype=dtype)
    p["head.weight"] = _trunc_normal(rng, (c_final, config.num_actions), dtype=dtype)
    p["head.bias"] = np.zeros(config.num_actions, dtype=dtype)
    return {name: Tensor(arr, requires_grad=True) for name, arr in p.items()}


def parameter_count(params: dict[str, Tensor]) -> int:
    return sum(p.size for p in params.values())


# -- forward pass -------------------------------------------------------------


def patch_embed(frames: Tensor, params: dict[str, Tensor], config: SwinConfig) -> Tensor:
    """Non-overlapping strided convolution producing [B, H*W, C] tokens."""
    if frames.shape[2] % config.patch_size != 0 or frames.shape[3] % config.patch_size != 0:
        raise ValueError(
            f"input extent {frames.shape[2:]} not divisible by patch {config.patch_size}"
        )
    x = T.conv2d(
        frames, params["patch_embed.weight"], params["patch_embed.bias"], stride=config.patch_size
    )
    b, c, gh, gw = x.shape
    x = T.reshape(x, (b, c, gh * gw))
    return T.transpose(x, (0, 2, 1))


def patch_merging(grid: Tensor, h: int, w: int, params: dict[str, Tensor], prefix: str) -> Tensor:
    """Concatenate 2x2 token neighborhoods (4C), normalize, project to 2C."""
    if h % 2 != 0 or w % 2 != 0:
        raise ValueError(f"cannot merge odd grid {h}x{w}")
    b, l, c = grid.shape
    x = T.reshape(grid, (b, h // 2, 2, w // 2, 2, c))
    x = T.transpose(x, (0, 1, 3, 2, 4, 5))
    x = T.reshape(x, (b, (h // 2) * (w // 2), 4 * c))
    x = T.layer_norm(x, params[prefix + "norm.gain"], params[prefix + "norm.bias"])
    return T.matmul(x, params[prefix + "reduce.weight"])


def _mix(windows: Tensor, params, prefix: str, heads: int, config: SwinConfig) -> Tensor:
    if config.mixer_kind == "spatial_mlp":
        return spatial_mlp_mix(windows, heads, params[prefix + "mix.weight"])
    return windowed_attention(
        windows,
        heads,
        params[prefix + "attn.qkv.weight"],
        params[prefix + "attn.qkv.bias"],
        params[prefix + "attn.proj.weight"],
        params[prefix + "attn.proj.bias"],
        params[prefix + "attn.relpos.table"],
        relative_position_index(config.window_size),
    )


def swin_block(
    grid: Tensor,
    h: int,
    w: int,
    params: dict[str, Tensor],
    prefix: str,
    heads: int,
    shift: int,
    config: SwinConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Token-mixing residual branch followed by a channel-MLP residual branch."""
    win = config.window_size
    y = T.layer_norm(grid, params[prefix + "norm1.gain"], params[prefix + "norm1.bias"])
    windows = window_partition(y, h, w, win, shift)
    mixed = _mix(windows, params, prefix, heads, config)
    y = window_merge(mixed, h, w, win, shift)
    grid = grid + drop_path(y, config.drop_path_rate, training, rng)
    z = T.layer_norm(grid, params[prefix + "norm2.gain"], params[prefix + "norm2.bias"])
    z = T.matmul(z, params[prefix + "mlp.fc1.weight"]) + params[prefix + "mlp.fc1.bias"]
    z = T.gelu(z)
    z = T.matmul(z, params[prefix + "mlp.fc2.weight"]) + params[prefix + "mlp.fc2.bias"]
    return grid + drop_path(z, config.drop_path_rate, training, rng)


def forward_q(
    frames: Tensor,
    params: dict[str, Tensor],
    config: SwinConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
    record: dict | None = None,
) -> Tensor:
    """Q-values [B, num_actions] for a stack of frames [B, 4, H, W].

    If `record` is given, each stage's output grid is stashed there as
    ``(grid_h, grid_w, values)`` for activation-map export.
    """
    geometry = config.stage_geometry()
    x = patch_embed(frames, params, config)
    for s, (gh, gw, _c) in enumerate(geometry):
        for b in range(config.blocks_per_layer[s]):
            x = swin_block(
                x,
                gh,
                gw,
                params,
                f"stage{s}.block{b}.",
                config.heads_per_layer[s],
                config.shift_for_block(s, b),
                config,
                training=training,
                rng=rng,
            )
        if record is not None:
            record[f"stage{s}"] = (gh, gw, x.data.copy())
        if s < config.layers - 1:
            x = patch_merging(x, gh, gw, params, f"merge{s}.")
    x = T.layer_norm(x, params["head.norm.gain"], params["head.norm.bias"])
    x = T.mean(x, axis=1)  # pool over tokens
    return T.matmul(x, params["head.weight"]) + params["head.bias"]
