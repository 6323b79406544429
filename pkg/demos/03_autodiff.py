"""
The autodiff engine
===================

Operations record themselves on the active ``Graph``; ``backward`` replays the
tape in reverse. Here a tiny conv net is differentiated and one gradient entry
is cross-checked by finite differences.
"""

import numpy as np

from densesr.netcore import Graph, Tensor, backward, concat_channels, conv2d, logcosh_loss, relu
from densesr.netcore.gradcheck import composition_checks, op_checks

rng = np.random.default_rng(0)
x = Tensor(rng.standard_normal((1, 1, 6, 6)), dtype=np.float64)
w1 = Tensor(rng.standard_normal((4, 1, 3, 3)) * 0.5, requires_grad=True, dtype=np.float64)
w2 = Tensor(rng.standard_normal((1, 5, 1, 1)) * 0.5, requires_grad=True, dtype=np.float64)
target = Tensor(np.zeros((1, 1, 6, 6)), dtype=np.float64)


def loss_fn():
    h = relu(conv2d(x, w1))
    return logcosh_loss(conv2d(concat_channels([x, h]), w2), target)


with Graph() as g:
    loss = loss_fn()
print("ops on the tape:", [n.op for n in g.nodes])
backward(g, loss)
print("loss", round(loss.item(), 6), " dL/dw2 =", np.round(w2.grad.ravel(), 5))

# finite-difference check of one weight
h = 1e-5
w2.data[0, 2, 0, 0] += h
up = loss_fn().item()
w2.data[0, 2, 0, 0] -= 2 * h
down = loss_fn().item()
w2.data[0, 2, 0, 0] += h
print("analytic", w2.grad[0, 2, 0, 0], " numeric", (up - down) / (2 * h))

# the same check, run over every op and a batch of random chains
results = op_checks() + composition_checks(10)
print(f"\n{sum(r.passed() for r in results)}/{len(results)} finite-difference checks pass;",
      f"worst relative error {max(r.rel_err for r in results):.1e}")
