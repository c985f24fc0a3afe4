"""Desk-scale pixel environments and the standard DQN preprocessing stack:
frame skip with two-frame max, 84x84 grayscale, random no-op starts, and
reward clipping in training. Also a byte-stream protocol for plugging in
external emulators.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass

import numpy as np

from .replay import FrameStacker

FRAME_SIZE = 84
FRAME_SKIP = 4


@dataclass
class EnvStep:
    """One raw emulator step; the terminal step's frame is still valid."""

    frame: np.ndarray  # 2D uint8 grayscale
    reward: float
    terminal: bool


class EnvError(Exception):
    """Environment contract violations (e.g. stepping a finished episode)."""


class CatchEnv:
    """A ball falls through a 21x21 grid toward a 3-wide paddle.

    The ball drops one row per tick with a horizontal drift fixed at
    reset; it bounces off the side walls. Actions move the paddle left /
    stay / right. The episode lasts exactly 20 ticks and ends with +1 on
    a catch, -1 on a miss.
    """

    GRID = 21
    PADDLE_HALF = 1  # paddle width 3
    ACTIONS = ("left", "stay", "right")
    num_actions = 3
    noop_action = 1

    def __init__(self):
        self._rng = np.random.default_rng()
        self._done = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        self._rng = np.random.default_rng(seed)
        self._ball_row = 0
        self._ball_col = int(self._rng.integers(0, self.GRID))
        self._drift = int(self._rng.integers(-1, 2))
        self._paddle = self.GRID // 2
        self._done = False
        return self._render()

    def step(self, action: int) -> EnvStep:
        if self._done:
            raise EnvError("step() on a terminal episode; call reset() first")
        if not 0 <= action < self.num_actions:
            raise EnvError(f"action {action} outside [0, {self.num_actions})")
        self._paddle = int(np.clip(self._paddle + (action - 1), self.PADDLE_HALF,
                                   self.GRID - 1 - self.PADDLE_HALF))
        self._ball_row += 1
        col = self._ball_col + self._drift
        if col < 0 or col >= self.GRID:  # bounce off the wall
            self._drift = -self._drift
            col = self._ball_col + self._drift
        self._ball_col = col
        reward = 0.0
        if self._ball_row == self.GRID - 1:
            self._done = True
            caught = abs(self._ball_col - self._paddle) <= self.PADDLE_HALF
            reward = 1.0 if caught else -1.0
        return EnvStep(self._render(), reward, self._done)

    def _render(self) -> np.ndarray:
        frame = np.zeros((self.GRID, self.GRID), dtype=np.uint8)
        frame[self.GRID - 1, self._paddle - self.PADDLE_HALF : self._paddle + self.PADDLE_HALF + 1] = 255
        frame[self._ball_row, self._ball_col] = 255
        return frame


def preprocess(frame: np.ndarray) -> np.ndarray:
    """Raw frame -> 84x84 grayscale uint8 (luminance + nearest resampling)."""
    frame = np.asarray(frame)
    if frame.ndim == 3:  # RGB -> luminance
        frame = 0.299 * frame[..., 0] + 0.587 * frame[..., 1] + 0.114 * frame[..., 2]
    h, w = frame.shape
    rows = (np.arange(FRAME_SIZE) * h // FRAME_SIZE).astype(np.intp)
    cols = (np.arange(FRAME_SIZE) * w // FRAME_SIZE).astype(np.intp)
    out = frame[np.ix_(rows, cols)]
    return np.clip(out, 0, 255).astype(np.uint8)


def clip_reward(r: float, mode: str) -> float:
    """Training clips to [-1, 1]; evaluation reports raw scores."""
    if mode == "train":
        return float(np.clip(r, -1.0, 1.0))
    if mode == "eval":
        return float(r)
    raise ValueError(f"unknown reward mode {mode!r}")


class AgentEnv:
    """Agent-level view of a raw emulator.

    Each agent step repeats the action for 4 emulator frames, sums the
    rewards, and observes the elementwise max of the last two raw frames
    (flicker guard). Episodes start with a random number of no-op steps
    and a replicated initial frame stack.
    """

    def __init__(self, raw_env, noop_max: int = 30, mode: str = "train"):
        if noop_max < 1:
            raise ValueError("noop_max must be >= 1")
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        self.raw = raw_env
        self.noop_max = noop_max
        self.mode = mode
        self.num_actions = raw_env.num_actions
        self.frames = 0  # emulator-frame counter: 4 per agent step
        self.last_noop_count = -1
        self._stacker = FrameStacker()
        self._last_raw: np.ndarray | None = None
        self._terminal = True

    def reset(self, seed: int, rng: np.random.Generator) -> np.ndarray:
        """Seed the emulator, apply k ~ U[0, noop_max) no-ops, build the stack."""
        raw_frame = self.raw.reset(seed)
        k = int(rng.integers(0, self.noop_max))
        self.last_noop_count = k
        self._stacker.reset(preprocess(raw_frame))
        self._last_raw = raw_frame
        for _ in range(k):
            step = self.raw.step(self.raw.noop_action)
            if step.terminal:
                raw_frame = self.raw.reset(int(rng.integers(0, 2**31)))
                self._stacker.reset(preprocess(raw_frame))
                self._last_raw = raw_frame
                continue
            self._stacker.push(preprocess(step.frame))
            self._last_raw = step.frame
        self._terminal = False
        return self._stacker.state()

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        """Returns (stacked state, mode-clipped summed reward, terminal)."""
        if self._terminal:
            raise EnvError("step() on a terminal episode; call reset() first")
        total = 0.0
        prev = self._last_raw
        frame = self._last_raw
        terminal = False
        for _ in range(FRAME_SKIP):
            step = self.raw.step(action)
            total += step.reward
            prev, frame = frame, step.frame
            if step.terminal:
                terminal = True
                break
        self.frames += FRAME_SKIP
        obs = np.maximum(prev, frame)
        self._last_raw = frame
        self._terminal = terminal
        state = self._stacker.push(preprocess(obs))
        return state, clip_reward(total, self.mode), terminal


# -- byte-stream env protocol -------------------------------------------------
#
# Little-endian framing: u32 length prefix over [opcode u8 | payload].
# Opcodes: 0=RESET (payload seed u32), 1=STEP (payload action u8),
# 2=OBS (width u16, height u16, pixels, reward f32, terminal u8),
# 3=ERR (UTF-8 message).

OP_RESET, OP_STEP, OP_OBS, OP_ERR = 0, 1, 2, 3


class TransportError(Exception):
    """Connection loss, timeouts, and framing-level failures."""


class ProtocolError(TransportError):
    """Peer spoke the framing but violated the message contract."""


class RemoteEnvError(EnvError):
    """The remote environment itself reported an error (ERR message)."""


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except socket.timeout as e:
            raise TransportError("timeout waiting for peer") from e
        except OSError as e:
            raise TransportError(f"connection failure: {e}") from e
        if not chunk:
            raise TransportError("connection closed mid-message")
        buf += chunk
    return buf


def _send_message(sock: socket.socket, opcode: int, payload: bytes) -> None:
    body = struct.pack("<B", opcode) + payload
    try:
        sock.sendall(struct.pack("<I", len(body)) + body)
    except OSError as e:
        raise TransportError(f"connection failure: {e}") from e


def _recv_message(sock: socket.socket) -> tuple[int, bytes]:
    (length,) = struct.unpack("<I", _recv_exact(sock, 4))
    if length < 1:
        raise ProtocolError("empty message body")
    body = _recv_exact(sock, length)
    return body[0], body[1:]


class RemoteEnv:
    """Raw-env handle proxied over the byte-stream protocol."""

    def __init__(self, address: str, num_actions: int, noop_action: int = 0,
                 timeout: float = 10.0):
        host, _, port = address.rpartition(":")
        self.num_actions = num_actions
        self.noop_action = noop_action
        try:
            self._sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=timeout)
        except OSError as e:
            raise TransportError(f"cannot connect to {address}: {e}") from e

    def close(self) -> None:
        self._sock.close()

    def _obs(self) -> EnvStep:
        opcode, payload = _recv_message(self._sock)
        if opcode == OP_ERR:
            raise RemoteEnvError(payload.decode("utf-8", "replace"))
        if opcode != OP_OBS:
            raise ProtocolError(f"expected OBS, got opcode {opcode}")
        if len(payload) < 9:
            raise ProtocolError("truncated OBS payload")
        w, h = struct.unpack("<HH", payload[:4])
        need = 4 + w * h + 5
        if len(payload) != need:
            raise ProtocolError(f"OBS payload length {len(payload)} != {need}")
        pixels = np.frombuffer(payload[4 : 4 + w * h], dtype=np.uint8).reshape(h, w)
        reward, terminal = struct.unpack("<fB", payload[4 + w * h :])
        return EnvStep(pixels.copy(), float(reward), bool(terminal))

    def reset(self, seed: int | None = None) -> np.ndarray:
        _send_message(self._sock, OP_RESET, struct.pack("<I", (seed or 0) & 0xFFFFFFFF))
        return self._obs().frame

    def step(self, action: int) -> EnvStep:
        _send_message(self._sock, OP_STEP, struct.pack("<B", action))
        return self._obs()


def serve_env(env, conn: socket.socket) -> None:
    """Serve one connection: answer RESET/STEP with OBS, faults with ERR."""

    def send_obs(frame: np.ndarray, reward: float, terminal: bool) -> None:
        h, w = frame.shape
        payload = (
            struct.pack("<HH", w, h)
            + frame.astype(np.uint8).tobytes()
            + struct.pack("<fB", reward, int(terminal))
        )
        _send_message(conn, OP_OBS, payload)

    while True:
        try:
            opcode, payload = _recv_message(conn)
        except TransportError:
            return
        try:
            if opcode == OP_RESET:
                (seed,) = struct.unpack("<I", payload)
                send_obs(env.reset(int(seed)), 0.0, False)
            elif opcode == OP_STEP:
                (action,) = struct.unpack("<B", payload)
                step = env.step(int(action))
                send_obs(step.frame, step.reward, step.terminal)
            else:
                _send_message(conn, OP_ERR, f"unknown opcode {opcode}".encode())
        except (EnvError, struct.error) as e:
            _send_message(conn, OP_ERR, str(e).encode())


def make_env(name: str) -> CatchEnv:
    """Raw environment by registry name."""
    if name == "catch":
        return CatchEnv()
    raise ValueError(f"unknown environment {name!r}; known: catch")
