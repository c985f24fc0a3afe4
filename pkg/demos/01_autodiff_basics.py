"""A walk through the tensor engine: building a computation, running the
reverse pass, and checking a gradient against finite differences by hand.

Run with:  python3 demos/01_autodiff_basics.py
"""

import numpy as np

from swindqn import tensor as T
from swindqn.tensor import AdamState, Tensor, adam_step

rng = np.random.default_rng(0)

# ---------------------------------------------------------------------------
# 1. A tiny computation graph.
#
# Tensors wrap numpy arrays; operations record how to push gradients back
# to their inputs. Only a scalar can start the reverse pass.
# ---------------------------------------------------------------------------

w = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
x = Tensor(rng.standard_normal((5, 3)))
loss = T.mean(T.relu(T.matmul(x, w)))
loss.backward()

print("loss:", loss.item())
print("dloss/dw:\n", w.grad)

# ---------------------------------------------------------------------------
# 2. Spot-check one entry with central differences.
# ---------------------------------------------------------------------------

eps = 1e-5
w.data[0, 0] += eps
hi = T.mean(T.relu(T.matmul(x, w))).item()
w.data[0, 0] -= 2 * eps
lo = T.mean(T.relu(T.matmul(x, w))).item()
w.data[0, 0] += eps
numeric = (hi - lo) / (2 * eps)
print(f"analytic {w.grad[0, 0]:+.6f}  vs  numeric {numeric:+.6f}")

# ---------------------------------------------------------------------------
# 3. A few optimization steps with Adam.
#
# Gradients accumulate across backward passes, so the caller clears them
# before each new pass — exactly what the training loop does.
# ---------------------------------------------------------------------------

target = rng.standard_normal((5, 2)).astype(np.float32)
params = {"w": w}
opt = AdamState(learning_rate=0.05)
for step in range(20):
    w.grad = None
    pred = T.matmul(x, w)
    loss = T.smooth_l1(T.reshape(pred, (10,)), target.reshape(10))
    loss.backward()
    adam_step(params, opt)
    if step % 5 == 0:
        print(f"step {step:2d}  smooth-L1 {loss.item():.4f}")
print("final loss:", loss.item())
