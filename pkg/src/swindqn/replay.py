"""Fixed-capacity ring buffer of transitions plus 4-frame observation stacking.

Frames rest in the buffer as 8-bit grayscale and are dequantized to
[0, 1] float32 when sampled, keeping a desk-sized memory footprint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FRAME_STACK = 4


@dataclass
class Transition:
    """One replay record: (state, action, next_state, reward, terminal)."""

    state: np.ndarray  # [4, H, W] uint8
    action: int
    reward: float
    next_state: np.ndarray  # [4, H, W] uint8
    terminal: bool


@dataclass
class Batch:
    """A sampled minibatch, frames dequantized to [0, 1] float32."""

    states: np.ndarray  # [B, 4, H, W] float32
    actions: np.ndarray  # [B] int64
    rewards: np.ndarray  # [B] float32
    next_states: np.ndarray  # [B, 4, H, W] float32
    terminals: np.ndarray  # [B] float32 (0.0 / 1.0)


class BufferNotReady(Exception):
    """Raised when sampling is requested before enough transitions exist."""


class ReplayBuffer:
    """Uniform-sampling ring buffer; once full, each push evicts the oldest."""

    def __init__(self, capacity: int = 1_000_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._storage: list[Transition | None] = [None] * capacity
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, t: Transition) -> None:
        self._storage[self._cursor] = t
        self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def entries(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        if self._size < self.capacity:
            return [t for t in self._storage[: self._size]]
        return self._storage[self._cursor :] + self._storage[: self._cursor]

    def sample(self, batch: int, rng: np.random.Generator) -> Batch:
        """Uniform with replacement; raises BufferNotReady if too small."""
        if self._size < batch:
            raise BufferNotReady(f"buffer holds {self._size} < batch {batch}")
        idx = rng.integers(0, self._size, size=batch)
        picks = [self._storage[i] for i in idx]
        return Batch(
            states=np.stack([p.state for p in picks]).astype(np.float32) / 255.0,
            actions=np.array([p.action for p in picks], dtype=np.int64),
            rewards=np.array([p.reward for p in picks], dtype=np.float32),
            next_states=np.stack([p.next_state for p in picks]).astype(np.float32) / 255.0,
            terminals=np.array([float(p.terminal) for p in picks], dtype=np.float32),
        )


class FrameStacker:
    """Newest-last sliding window of 4 frames; episode start replicates."""

    def __init__(self):
        self._frames: list[np.ndarray] | None = None

    def reset(self, frame: np.ndarray) -> np.ndarray:
        self._frames = [frame] * FRAME_STACK
        return self.state()

    def push(self, frame: np.ndarray) -> np.ndarray:
        if self._frames is None:
            return self.reset(frame)
        self._frames = self._frames[1:] + [frame]
        return self.state()

    def state(self) -> np.ndarray:
        if self._frames is None:
            raise RuntimeError("stacker used before reset")
        return np.stack(self._frames)
