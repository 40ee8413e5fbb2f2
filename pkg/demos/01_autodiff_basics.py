"""A tour of the tiny reverse-mode engine behind every controller here.

Builds a few expressions, backpropagates, and cross-checks one gradient
against central finite differences.
"""

import numpy as np

from selfreward import (
    DiffTensor,
    SgdSettings,
    backward,
    conv1d,
    cross_entropy_self,
    fully_connected,
    no_grad,
    parameter,
    sgd_step,
    threshold_activation,
)
from selfreward.autodiff import total

# -- scalars -----------------------------------------------------------------

x = parameter(3.0)
backward(x * x)
print(f"d(x^2)/dx at x=3: {float(x.grad)}  (expect 6)")

# -- a no-gradient region acts as a constant -----------------------------------

x = parameter(4.0)
with no_grad():
    frozen = x * x  # recorded nowhere; downstream sees a plain number
backward(x * frozen)
print(f"d(x * const16)/dx at x=4: {float(x.grad)}  (expect 16, not 48)")

# -- a small network with conv, dense, and activation layers --------------------

rng = np.random.default_rng(0)
signal = DiffTensor(rng.normal(size=10))
kernel = parameter(rng.normal(size=3) * 0.5)
w = parameter(rng.normal(size=(3, 8)) * 0.4)
b = parameter(np.zeros(3))


def net_loss():
    hidden = threshold_activation(conv1d(signal, kernel))
    logits = fully_connected(hidden, w, b)
    return cross_entropy_self(logits)


backward(net_loss())
analytic = kernel.grad.copy()

step = 1e-5
numeric = np.zeros(3)
for i in range(3):
    kernel.values[i] += step
    hi = net_loss().item()
    kernel.values[i] -= 2 * step
    lo = net_loss().item()
    kernel.values[i] += step
    numeric[i] = (hi - lo) / (2 * step)

print("analytic kernel grad:", analytic.round(8))
print("numeric  kernel grad:", numeric.round(8))
print("max abs difference:  ", float(np.max(np.abs(analytic - numeric))))

# -- gradient descent on a quadratic bowl ---------------------------------------

theta = parameter(np.array([1.0, -2.0, 0.5]))
for _ in range(25):
    backward(total(theta * theta))
    sgd_step([theta], SgdSettings(learning_rate=0.2))
print("after 25 SGD steps on |theta|^2:", theta.values.round(5))
