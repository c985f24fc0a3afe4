"""Command-line harness: train / eval / inspect / export subcommands over
the agent, environments, checkpoints, and metrics modules.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from PIL import Image

from . import checkpoint as ckpt_mod
from .agent import DoubleDQNAgent, QNetwork, epsilon_at, train
from .checkpoint import CheckpointError
from .config import ConfigError, RunManifest, config_snapshot, load_config
from .envs import AgentEnv, RemoteEnv, make_env
from .metrics import activation_maps, auc, evaluate, performance_profile

EVAL_CSV_HEADER = ["step", "frames", "mean_score", "std_score", "min", "max", "epsilon"]
PROFILE_TAUS = [0.0, 0.25, 0.5, 0.75, 1.0]


def _out_dir(args) -> Path:
    root = args.out or os.environ.get("SWINDQN_OUT_DIR") or "."
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _raw_env_factory(args):
    """A zero-argument raw-environment constructor for the CLI selection."""
    probe = make_env(args.env)  # validates the name, provides action metadata
    if args.remote:
        return lambda: RemoteEnv(args.remote, probe.num_actions, probe.noop_action)
    return lambda: make_env(args.env)


def _write_csv_atomic(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    ckpt_mod.atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def cmd_train(args) -> int:
    overrides = {"max_frames": args.max_frames, "mixer_kind": args.mixer}
    train_cfg, swin_cfg = load_config(args.config, overrides)
    out = _out_dir(args)
    factory = _raw_env_factory(args)
    raw = factory()
    swin_cfg.num_actions = raw.num_actions
    manifest = RunManifest(config=config_snapshot(train_cfg, swin_cfg),
                           seed=args.seed, backbone=args.backbone,
                           env_name=args.env, started_at=_now(),
                           extra={"remote": args.remote or ""})
    agent = DoubleDQNAgent(args.backbone, raw.num_actions, train_cfg,
                           seed=args.seed, mixer=swin_cfg.mixer_kind,
                           input_size=swin_cfg.input_size)
    env = AgentEnv(raw, noop_max=train_cfg.noop_max, mode="train")
    rows: list[list] = []
    ckpt_path = out / "checkpoint.swdq"

    def eval_hook(a) -> bool:
        rng = np.random.default_rng(a.rng_env.integers(0, 2**31))
        rec = evaluate(a.policy, factory, rng, episodes=train_cfg.eval_episodes,
                       eval_epsilon=train_cfg.eval_epsilon,
                       noop_max=train_cfg.noop_max, step=a.steps, frames=a.frames)
        rows.append([rec.step, rec.frames, rec.mean, rec.std, rec.min, rec.max,
                     epsilon_at(a.frames, train_cfg)])
        _write_csv_atomic(out / "eval_log.csv", EVAL_CSV_HEADER, rows)
        ckpt_mod.save(ckpt_path, a.policy.params, a.optimizer, a.frames,
                      manifest.to_json())
        print(f"eval @ step {rec.step}: mean {rec.mean:+.3f} std {rec.std:.3f}")
        return True

    train(agent, env, eval_hook=eval_hook)
    manifest.finished_at = _now()
    ckpt_mod.save(ckpt_path, agent.policy.params, agent.optimizer, agent.frames,
                  manifest.to_json())
    _write_csv_atomic(out / "eval_log.csv", EVAL_CSV_HEADER, rows)
    ckpt_mod.atomic_write_bytes(out / "manifest.json",
                                manifest.to_json().encode("utf-8"))
    return 0


def _network_from_checkpoint(path: Path) -> tuple[QNetwork, ckpt_mod.Checkpoint, RunManifest]:
    ckpt = ckpt_mod.load(path)
    manifest = RunManifest.from_json(ckpt.manifest_json)
    cfg = manifest.config
    qnet = QNetwork(manifest.backbone, int(cfg["num_actions"]),
                    np.random.default_rng(0), mixer=cfg["mixer_kind"],
                    input_size=int(cfg["input_size"]))
    ckpt_mod.restore_into(ckpt, qnet.params)
    return qnet, ckpt, manifest


def cmd_eval(args) -> int:
    qnet, _, manifest = _network_from_checkpoint(Path(args.checkpoint))
    args.env = args.env or manifest.env_name
    factory = _raw_env_factory(args)
    cfg = manifest.config
    rec = evaluate(qnet, factory, np.random.default_rng(args.seed),
                   episodes=args.episodes,
                   eval_epsilon=float(cfg["eval_epsilon"]),
                   noop_max=int(cfg["noop_max"]))
    print(f"episodes {len(rec.episode_scores)}  mean {rec.mean:+.4f}  "
          f"std {rec.std:.4f}  min {rec.min:+.4f}  max {rec.max:+.4f}")
    out = _out_dir(args)
    _write_csv_atomic(out / "eval_result.csv", EVAL_CSV_HEADER,
                      [[0, 0, rec.mean, rec.std, rec.min, rec.max, ""]])
    return 0


def cmd_inspect(args) -> int:
    qnet, _, manifest = _network_from_checkpoint(Path(args.checkpoint))
    args.env = args.env or manifest.env_name
    factory = _raw_env_factory(args)
    env = AgentEnv(factory(), noop_max=1, mode="eval")
    state = env.reset(args.seed, np.random.default_rng(args.seed))
    out = _out_dir(args)
    maps = activation_maps(qnet, state)
    for name, grid in maps.items():
        image = Image.fromarray((grid * 255).astype(np.uint8), mode="L")
        buf = io.BytesIO()
        image.save(buf, format="PNG")
        ckpt_mod.atomic_write_bytes(out / f"activation_{name}.png", buf.getvalue())
    q = qnet.q_values(state[None].astype(np.float32) / 255.0)[0]
    _write_csv_atomic(out / "q_values.csv", ["action", "q_value"],
                      [[i, float(v)] for i, v in enumerate(q)])
    print(f"wrote {len(maps)} activation maps and a {len(q)}-action Q dump to {out}")
    return 0


def cmd_export(args) -> int:
    run_dir = Path(args.out or os.environ.get("SWINDQN_OUT_DIR") or ".")
    curves = sorted(run_dir.glob("eval_log*.csv"))
    if not curves:
        raise FileNotFoundError(f"no eval CSVs (eval_log*.csv) in {run_dir}")
    rows = []
    for path in curves:
        with path.open() as handle:
            rows.extend(list(csv.DictReader(handle)))
    if not rows:
        raise ValueError(f"eval CSVs in {run_dir} contain no rows")
    episodes = 5
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        episodes = int(RunManifest.from_json(
            manifest_path.read_text()).config.get("eval_episodes", 5))
    half_width = 1.96 / np.sqrt(episodes)
    curve_rows, curve = [], []
    for row in rows:
        mean, std = float(row["mean_score"]), float(row["std_score"])
        ci = half_width * std
        curve.append((int(row["step"]), mean))
        curve_rows.append([row["step"], row["frames"], mean, std,
                           mean - ci, mean + ci])
    final_reference = curve[-1][1]
    summary = auc(curve, final_reference)
    normalized = [score / final_reference for _step, score in curve]
    profile = performance_profile(normalized, PROFILE_TAUS)
    _write_csv_atomic(run_dir / "curve.csv",
                      ["step", "frames", "mean_score", "std_score", "ci_lo", "ci_hi"],
                      curve_rows)
    _write_csv_atomic(run_dir / "auc.csv", ["final_reference", "auc"],
                      [[final_reference, summary]])
    _write_csv_atomic(run_dir / "profile.csv", ["tau", "fraction"],
                      [[tau, frac] for tau, frac in zip(PROFILE_TAUS, profile)])
    print(f"exported curve.csv, auc.csv (auc={summary:.4f}), profile.csv to {run_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swindqn",
                                     description="Double DQN training harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--backbone", choices=["cnn", "swin"], default="cnn")
        p.add_argument("--mixer", choices=["spatial_mlp", "attention"], default=None)
        p.add_argument("--env", default=None, help="environment name (e.g. catch)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--max-frames", type=int, default=None)
        p.add_argument("--out", default=None,
                       help="output dir (default: $SWINDQN_OUT_DIR or .)")
        p.add_argument("--episodes", type=int, default=5)
        p.add_argument("--remote", default=None, metavar="HOST:PORT",
                       help="proxy the environment over the byte-stream protocol")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)

    p_train = sub.add_parser("train", help="run a training loop")
    common(p_train)
    p_train.set_defaults(func=cmd_train)
    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p_eval, checkpoint=True)
    p_eval.set_defaults(func=cmd_eval)
    p_inspect = sub.add_parser("inspect", help="activation maps + Q dump")
    common(p_inspect, checkpoint=True)
    p_inspect.set_defaults(func=cmd_inspect)
    p_export = sub.add_parser("export", help="plot-ready CSVs from a run dir")
    common(p_export)
    p_export.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.env is None and args.command == "train":
        args.env = "catch"
    if getattr(args, "mixer", None) == "attention":
        args.mixer = "windowed_attention"
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
