"""Tour of the tensor engine: building a loss, backprop, and checking the
analytic gradients against finite differences.

Run: python3 demos/01_autodiff_and_gradcheck.py
"""

import numpy as np

from mimkd import tensor as T
from mimkd.tensor import Tensor, check_gradient

rng = np.random.default_rng(0)

# A tiny computation: conv -> relu -> mean, differentiated by the tape.
x = Tensor(rng.standard_normal((2, 3, 8, 8)), requires_grad=True)
w = Tensor(rng.standard_normal((4, 3, 3, 3)) * 0.3, requires_grad=True)
loss = T.tmean(T.relu(T.conv2d(x, w, stride=2, padding=1)))
loss.backward()
print(f"loss = {loss.item():.6f}")
print(f"|dL/dx| max = {np.abs(x.grad).max():.6f}")
print(f"|dL/dw| max = {np.abs(w.grad).max():.6f}")

# The same gradient, verified against a central finite difference.
err = check_gradient(
    lambda t: T.tmean(T.relu(T.conv2d(t, Tensor(w.data), stride=2, padding=1))),
    x.data,
)
print(f"finite-difference rel. error: {err:.2e}")

# f64 mode tightens the oracle further.
with T.use_dtype(np.float64):
    err64 = check_gradient(lambda t: T.softplus(t).mean(), rng.standard_normal(16))
print(f"softplus rel. error in f64:   {err64:.2e}")
