"""Convolutional baseline Q-network: three conv layers, one hidden
fully-connected layer, and a linear output layer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class CnnConfig:
    """Layer sizes of the baseline; defaults are the classic Atari stack."""

    num_actions: int = 3
    conv_specs: tuple[tuple[int, int, int], ...] = ((32, 8, 4), (64, 4, 2), (64, 3, 1))
    fc_width: int = 512
    input_size: int = 84
    in_channels: int = 4

    def flatten_length(self) -> int:
        size = self.input_size
        channels = self.in_channels
        for out_c, kernel, stride in self.conv_specs:
            if kernel > size:
                raise ValueError(f"kernel {kernel} exceeds feature map {size}")
            size = (size - kernel) // stride + 1
            channels = out_c
        return channels * size * size


def init_cnn_params(
    config: CnnConfig, rng: np.random.Generator, dtype=np.float32
) -> dict[str, Tensor]:
    """He-initialized parameter dict for :func:`forward_q_cnn`."""
    p: dict[str, np.ndarray] = {}
    in_c = config.in_channels
    for i, (out_c, kernel, _stride) in enumerate(config.conv_specs):
        fan_in = in_c * kernel * kernel
        p[f"conv{i}.weight"] = (
            rng.standard_normal((out_c, in_c, kernel, kernel)) * np.sqrt(2.0 / fan_in)
        ).astype(dtype)
        p[f"conv{i}.bias"] = np.zeros(out_c, dtype=dtype)
        in_c = out_c
    flat = config.flatten_length()
    p["fc1.weight"] = (rng.standard_normal((flat, config.fc_width)) * np.sqrt(2.0 / flat)).astype(
        dtype
    )
    p["fc1.bias"] = np.zeros(config.fc_width, dtype=dtype)
    p["out.weight"] = (
        rng.standard_normal((config.fc_width, config.num_actions)) * np.sqrt(1.0 / config.fc_width)
    ).astype(dtype)
    p["out.bias"] = np.zeros(config.num_actions, dtype=dtype)
    return {name: Tensor(arr, requires_grad=True) for name, arr in p.items()}


def forward_q_cnn(
    frames: Tensor,
    params: dict[str, Tensor],
    config: CnnConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
    record: dict | None = None,
) -> Tensor:
    """Q-values [B, num_actions]; deterministic (no stochastic layers).

    `training`/`rng` are accepted for signature parity with the Swin
    backbone and ignored. `record` stashes each conv stage's activations.
    """
    x = frames
    for i, (_out_c, _kernel, stride) in enumerate(config.conv_specs):
        x = T.relu(T.conv2d(x, params[f"conv{i}.weight"], params[f"conv{i}.bias"], stride=stride))
        if record is not None:
            b, c, h, w = x.shape
            record[f"stage{i}"] = (h, w, x.data.reshape(b, c, h * w).transpose(0, 2, 1).copy())
    b = x.shape[0]
    flat = T.reshape(x, (b, config.flatten_length()))
    h = T.relu(T.matmul(flat, params["fc1.weight"]) + params["fc1.bias"])
    return T.matmul(h, params["out.weight"]) + params["out.bias"]
