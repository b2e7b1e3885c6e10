"""Reverse-mode gradients on a tape, checked against finite differences,
then a few Adam steps on a small least-squares problem.

    python3 demos/01_autodiff_and_adam.py
"""

import numpy as np

from cvse import numeric as nm
from cvse.optim import Adam

rng = np.random.default_rng(0)
X = rng.normal(size=(32, 4))
w_true = np.array([1.5, -2.0, 0.5, 0.0])
y = X @ w_true + 0.01 * rng.normal(size=32)


def loss_fn(w):
    # every op below is recorded on the tape when w is a tracked Var
    residual = nm.matmul(X, w) - y
    return (residual * residual).mean()


# One gradient, compared entry by entry with central differences.
w = np.zeros(4)
tape = nm.Tape()
wv = tape.watch(w, "w")
grad = tape.gradient(loss_fn(wv), wv)

h = 1e-6
numeric = np.array([(loss_fn(w + h * e) - loss_fn(w - h * e)) / (2 * h) for e in np.eye(4)])
print("analytic :", np.round(grad, 6))
print("numeric  :", np.round(numeric, 6))
print("max abs difference:", float(np.abs(grad - numeric).max()))

# Untracked inputs skip the tape entirely and return plain arrays.
print("plain call returns", type(nm.softmax(np.array([1.0, 2.0]))).__name__)

# Adam updates the parameter dict in place.
params = {"w": np.zeros(4)}
opt = Adam(lr=0.05)
for step in range(1, 301):
    tape = nm.Tape()
    tracked = nm.watch_all(tape, params)
    loss = loss_fn(tracked["w"])
    opt.step(params, tape.gradient(loss, tracked))
    if step in (1, 10, 100, 300):
        print(f"step {step:3d}  loss {float(nm.value(loss)):.6f}")
print("recovered w:", np.round(params["w"], 3), "true w:", w_true)
