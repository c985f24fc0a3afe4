"""The evaluation toolkit: human-normalized scores against the standard
random/human anchor table, area under the learning curve, and performance
profiles.

Run with:  python3 demos/05_evaluation_metrics.py
"""

import numpy as np

from swindqn.metrics import auc, human_normalized, load_anchors, performance_profile

# ---------------------------------------------------------------------------
# 1. Human-normalized scores: 0 is a random policy, 1 is human level.
# The bundled anchor table covers the standard 49-game benchmark set.
# ---------------------------------------------------------------------------

anchors = load_anchors()
print(f"anchor table: {len(anchors)} tasks")
for task, score in [("breakout", 857.8), ("pong", 21.0), ("freeway", 34.0)]:
    lo, hi = anchors[task]
    norm = human_normalized(score, anchors, task)
    print(f"  {task:10s} score {score:7.1f}  (random {lo:6.1f}, human {hi:6.1f})"
          f"  -> normalized {norm:5.2f}")

# ---------------------------------------------------------------------------
# 2. AUC condenses a learning curve into one number: the mean evaluation
# score over checkpoints, divided by a reference final score. Early
# learners score high even when two curves end at the same place.
# ---------------------------------------------------------------------------

steps = np.arange(10)
early = [(int(s), float(1 - np.exp(-s))) for s in steps]   # fast riser
late = [(int(s), float((s / 9) ** 3)) for s in steps]      # slow starter
print(f"\nAUC fast riser   {auc(early, early[-1][1]):.3f}")
print(f"AUC slow starter {auc(late, late[-1][1]):.3f}")

# ---------------------------------------------------------------------------
# 3. Performance profiles: for each threshold tau, the fraction of runs
# whose normalized score strictly beats it. Always non-increasing in tau.
# ---------------------------------------------------------------------------

rng = np.random.default_rng(0)
scores = list(np.clip(rng.normal(0.8, 0.5, 30), 0, None))
taus = [0.0, 0.25, 0.5, 0.75, 1.0, 1.5]
profile = performance_profile(scores, taus)
for tau, frac in zip(taus, profile):
    bar = "#" * int(40 * frac)
    print(f"tau {tau:4.2f}  {frac:4.2f}  {bar}")
