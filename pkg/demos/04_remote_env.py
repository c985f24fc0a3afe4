"""The byte-stream environment protocol: serving Catch over a socket and
driving it through the RemoteEnv proxy, bit-exactly equivalent to the
in-process environment.

Run with:  python3 demos/04_remote_env.py
"""

import socket
import threading

import numpy as np

from swindqn.envs import CatchEnv, RemoteEnv, serve_env

# ---------------------------------------------------------------------------
# 1. Serve one environment on a loopback socket. Each message is a u32
# length prefix followed by an opcode byte and payload; RESET carries a
# seed, STEP an action, and the reply is an OBS frame with reward and
# terminal flag (or a typed ERR).
# ---------------------------------------------------------------------------

listener = socket.socket()
listener.bind(("127.0.0.1", 0))
listener.listen(1)
port = listener.getsockname()[1]


def serve_once():
    conn, _ = listener.accept()
    with conn:
        serve_env(CatchEnv(), conn)


thread = threading.Thread(target=serve_once, daemon=True)
thread.start()

# ---------------------------------------------------------------------------
# 2. A remote episode next to a local one, same seed: identical pixels,
# rewards, and termination.
# ---------------------------------------------------------------------------

remote = RemoteEnv(f"127.0.0.1:{port}", num_actions=3)
local = CatchEnv()

frame_r = remote.reset(seed=42)
frame_l = local.reset(seed=42)
print("reset frames identical:", np.array_equal(frame_r, frame_l))

rng = np.random.default_rng(0)
ticks = 0
while True:
    action = int(rng.integers(0, 3))
    step_r = remote.step(action)
    step_l = local.step(action)
    assert np.array_equal(step_r.frame, step_l.frame)
    assert step_r.reward == step_l.reward and step_r.terminal == step_l.terminal
    ticks += 1
    if step_r.terminal:
        break

print(f"episode ran {ticks} ticks, final reward {step_r.reward:+.0f}, "
      "remote == local at every step")
remote.close()
listener.close()
