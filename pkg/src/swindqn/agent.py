"""Double Q-learning: epsilon-greedy acting, decoupled-argmax targets with
the (1 - terminal) mask, Smooth L1 updates, and periodic target-network
synchronization. Includes a tabular reference implementation of the paired
update equations.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .cnn import CnnConfig, forward_q_cnn, init_cnn_params
from .replay import Batch, BufferNotReady, ReplayBuffer, Transition
from .swin import SwinConfig, forward_q, init_swin_params
from .tensor import AdamState, Tensor, adam_step


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults mirror the reference table except
    max_frames, which defaults to desk scale."""

    gamma: float = 0.99
    eps_initial: float = 1.0
    eps_final: float = 0.01
    eps_decay_frames: int = 1_000_000
    sync_frames: int = 40_000
    frames_per_step: int = 4
    steps_per_update: int = 4
    steps_per_eval: int = 250_000
    max_frames: int = 400_000
    replay_size: int = 1_000_000
    batch: int = 32
    lr: float = 0.0000625
    adam_epsilon: float = 1.5e-4
    warmup_transitions: int = 20_000
    eval_episodes: int = 5
    eval_epsilon: float = 0.001
    noop_max: int = 30

    def validate(self) -> "TrainConfig":
        if self.eps_final > self.eps_initial:
            raise ValueError("eps_final must not exceed eps_initial")
        if self.sync_frames % self.frames_per_step != 0:
            raise ValueError("sync_frames must be a multiple of frames_per_step")
        return self


class QNetwork:
    """A backbone-agnostic parameterized state -> Q-value function."""

    def __init__(self, backbone: str, num_actions: int, rng: np.random.Generator,
                 mixer: str = "spatial_mlp", input_size: int = 84):
        self.backbone = backbone
        self.num_actions = num_actions
        if backbone == "cnn":
            self.config = CnnConfig(num_actions=num_actions, input_size=input_size)
            self.params = init_cnn_params(self.config, rng)
        elif backbone == "swin":
            self.config = SwinConfig(num_actions=num_actions, mixer_kind=mixer,
                                     input_size=input_size)
            self.config.stage_geometry()
            self.params = init_swin_params(self.config, rng)
        else:
            raise ValueError(f"unknown backbone {backbone!r}; one of cnn, swin")

    def forward(self, states: np.ndarray, training: bool = False,
                rng: np.random.Generator | None = None,
                record: dict | None = None) -> Tensor:
        x = Tensor(np.asarray(states, dtype=np.float32))
        fn = forward_q_cnn if self.backbone == "cnn" else forward_q
        return fn(x, self.params, self.config, training=training, rng=rng, record=record)

    def q_values(self, states: np.ndarray) -> np.ndarray:
        return self.forward(states).data

    def clone(self) -> "QNetwork":
        other = copy.copy(self)
        other.params = {k: Tensor(v.data.copy(), requires_grad=True)
                        for k, v in self.params.items()}
        return other

    def copy_from(self, other: "QNetwork") -> None:
        for name, p in self.params.items():
            p.data[...] = other.params[name].data

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad = None


def epsilon_at(frame: int, cfg: TrainConfig) -> float:
    """Linear decay from eps_initial to eps_final over eps_decay_frames."""
    if frame < 0:
        raise ValueError("frame must be non-negative")
    frac = min(frame / cfg.eps_decay_frames, 1.0)
    return cfg.eps_initial + frac * (cfg.eps_final - cfg.eps_initial)


def select_action(qnet: QNetwork, state: np.ndarray, eps: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy with lowest-index tie-break on the greedy branch."""
    if rng.random() < eps:
        return int(rng.integers(0, qnet.num_actions))
    q = qnet.q_values(state[None].astype(np.float32) / 255.0)[0]
    return int(np.argmax(q))


def compute_target(batch: Batch, policy: QNetwork, target: QNetwork,
                   gamma: float) -> np.ndarray:
    """r + gamma * Q_B(s', argmax_a Q_A(s', a)) * (1 - terminal), no gradient."""
    qa = policy.q_values(batch.next_states)
    qb = target.q_values(batch.next_states)
    a_star = np.argmax(qa, axis=1)
    boot = qb[np.arange(len(a_star)), a_star]
    return (batch.rewards + gamma * boot * (1.0 - batch.terminals)).astype(np.float32)


@dataclass
class LogRow:
    """One training-log entry, written at every gradient update."""

    step: int
    frames: int
    loss: float
    epsilon: float


class DoubleDQNAgent:
    """Policy/target network pair plus optimizer and rng streams."""

    def __init__(self, backbone: str, num_actions: int, cfg: TrainConfig,
                 seed: int, mixer: str = "spatial_mlp", input_size: int = 84):
        cfg.validate()
        self.cfg = cfg
        root = np.random.SeedSequence(seed)
        init_ss, action_ss, drop_ss, sample_ss, env_ss = root.spawn(5)
        self.policy = QNetwork(backbone, num_actions, np.random.default_rng(init_ss),
                               mixer=mixer, input_size=input_size)
        self.target = self.policy.clone()
        self.rng_action = np.random.default_rng(action_ss)
        self.rng_drop = np.random.default_rng(drop_ss)
        self.rng_sample = np.random.default_rng(sample_ss)
        self.rng_env = np.random.default_rng(env_ss)
        self.optimizer = AdamState(learning_rate=cfg.lr, epsilon=cfg.adam_epsilon)
        self.frames = 0
        self.steps = 0

    def act(self, state: np.ndarray) -> int:
        eps = epsilon_at(self.frames, self.cfg)
        return select_action(self.policy, state, eps, self.rng_action)

    def update_step(self, batch: Batch) -> float:
        """One gradient step on the Smooth L1 loss against double targets."""
        targets = compute_target(batch, self.policy, self.target, self.cfg.gamma)
        self.policy.zero_grads()
        q = self.policy.forward(batch.states, training=True, rng=self.rng_drop)
        chosen = T.gather(q, batch.actions)
        loss = T.smooth_l1(chosen, targets)
        loss.backward()
        adam_step(self.policy.params, self.optimizer)
        return loss.item()

    def sync_target(self) -> None:
        self.target.copy_from(self.policy)


def train(agent: DoubleDQNAgent, env, eval_hook=None,
          update_hook=None) -> list[LogRow]:
    """The main training loop at the configured cadence.

    `env` is an agent-level environment (4-frame steps). `eval_hook(agent)`
    fires every `steps_per_eval` agent steps; `update_hook(row)` after
    every gradient update. Returns the per-update log.
    """
    cfg = agent.cfg
    buffer = ReplayBuffer(cfg.replay_size)
    log: list[LogRow] = []
    state = env.reset(int(agent.rng_env.integers(0, 2**31)), agent.rng_env)
    while agent.frames < cfg.max_frames:
        action = agent.act(state)
        next_state, reward, terminal = env.step(action)
        agent.frames += cfg.frames_per_step
        agent.steps += 1
        buffer.push(Transition(state, action, reward, next_state, terminal))
        state = env.reset(int(agent.rng_env.integers(0, 2**31)), agent.rng_env) if terminal else next_state
        if len(buffer) >= cfg.warmup_transitions and agent.steps % cfg.steps_per_update == 0:
            try:
                batch = buffer.sample(cfg.batch, agent.rng_sample)
            except BufferNotReady:
                continue
            loss = agent.update_step(batch)
            row = LogRow(agent.steps, agent.frames, loss, epsilon_at(agent.frames, cfg))
            log.append(row)
            if update_hook is not None:
                update_hook(row)
        if agent.frames % cfg.sync_frames == 0:
            agent.sync_target()
        if eval_hook is not None and agent.steps % cfg.steps_per_eval == 0:
            if eval_hook(agent) is False:
                break
    return log


# -- tabular reference --------------------------------------------------------


def tabular_double_q_update(qa: np.ndarray, qb: np.ndarray, s: int, a: int,
                            r: float, s_next: int | None, alpha: float,
                            gamma: float, which: str) -> None:
    """One tabular double-Q update in place; `which` selects the table.

    Updating table A bootstraps from B at A's argmax action (and vice
    versa). `s_next is None` marks a terminal transition.
    """
    if which == "A":
        upd, other = qa, qb
    elif which == "B":
        upd, other = qb, qa
    else:
        raise ValueError(f"which must be 'A' or 'B', got {which!r}")
    boot = 0.0
    if s_next is not None:
        best = int(np.argmax(upd[s_next]))
        boot = gamma * other[s_next, best]
    upd[s, a] += alpha * (r + boot - upd[s, a])
