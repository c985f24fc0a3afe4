"""Evaluation machinery: periodic evaluation runs, human-normalized
scores, AUC summaries, performance profiles, and activation-map export.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .agent import QNetwork, select_action
from .envs import AgentEnv


@dataclass
class EvalRecord:
    """One evaluation checkpoint: raw per-episode returns and aggregates."""

    step: int
    frames: int
    episode_scores: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.episode_scores))

    @property
    def std(self) -> float:
        return float(np.std(self.episode_scores))

    @property
    def min(self) -> float:
        return float(np.min(self.episode_scores))

    @property
    def max(self) -> float:
        return float(np.max(self.episode_scores))


def evaluate(qnet: QNetwork, env_factory, rng: np.random.Generator,
             episodes: int = 5, eval_epsilon: float = 0.001,
             noop_max: int = 30, step: int = 0, frames: int = 0) -> EvalRecord:
    """Run full episodes with fresh random seeds; raw (unclipped) returns."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    scores = []
    for _ in range(episodes):
        env = AgentEnv(env_factory(), noop_max=noop_max, mode="eval")
        state = env.reset(int(rng.integers(0, 2**31)), rng)
        total, terminal = 0.0, False
        while not terminal:
            action = select_action(qnet, state, eval_epsilon, rng)
            state, reward, terminal = env.step(action)
            total += reward
        scores.append(total)
    return EvalRecord(step=step, frames=frames, episode_scores=scores)


# -- score normalization ------------------------------------------------------


def load_anchors(path: str | Path | None = None) -> dict[str, tuple[float, float]]:
    """Anchor table `task,random_score,human_score`, one record per line.

    Without a path, the bundled reference baseline table is used.
    """
    if path is None:
        text = resources.files("swindqn").joinpath("data/anchors.csv").read_text()
    else:
        text = Path(path).read_text()
    anchors: dict[str, tuple[float, float]] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        task, random_score, human_score = line.split(",")
        lo, hi = float(random_score), float(human_score)
        if lo == hi:
            raise ValueError(f"anchor for {task!r} has human_score == random_score")
        anchors[task.strip().lower()] = (lo, hi)
    return anchors


def human_normalized(score: float, anchors: dict[str, tuple[float, float]],
                     task: str) -> float:
    """(score - random) / (human - random) for the given task."""
    key = task.strip().lower()
    if key not in anchors:
        raise KeyError(f"no anchors for task {task!r}")
    random_score, human_score = anchors[key]
    return (score - random_score) / (human_score - random_score)


def auc(curve: list[tuple[int, float]], final_reference: float) -> float:
    """Mean of evaluation scores normalized by a reference final score."""
    if not curve:
        raise ValueError("curve must be nonempty")
    if final_reference == 0.0:
        raise ValueError("final_reference must be nonzero")
    return float(np.mean([score for _step, score in curve]) / final_reference)


def performance_profile(normalized_scores: list[float],
                        taus: list[float]) -> list[float]:
    """Fraction of scores strictly greater than each threshold."""
    if any(b < a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be sorted ascending")
    scores = np.asarray(normalized_scores, dtype=np.float64)
    return [float((scores > tau).mean()) for tau in taus]


# -- activation maps ----------------------------------------------------------


def activation_maps(qnet: QNetwork, frame_stack: np.ndarray,
                    out_size: int = 84) -> dict[str, np.ndarray]:
    """Per-stage heatmaps: channelwise mean |activation|, min-max scaled
    to [0, 1], nearest-upsampled to the input resolution."""
    record: dict = {}
    qnet.forward(frame_stack[None].astype(np.float32) / 255.0, record=record)
    maps = {}
    for name, (h, w, values) in sorted(record.items()):
        grid = np.abs(values[0]).mean(axis=-1).reshape(h, w)
        span = grid.max() - grid.min()
        if span > 0:
            grid = (grid - grid.min()) / span
        else:
            grid = np.zeros_like(grid)
        rows = (np.arange(out_size) * h // out_size).astype(np.intp)
        cols = (np.arange(out_size) * w // out_size).astype(np.intp)
        maps[name] = grid[np.ix_(rows, cols)]
    return maps
