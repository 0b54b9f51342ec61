"""
Checking the tape against finite differences
============================================

Every differentiable piece of the model runs on a small reverse-mode tape.
Here we build a few expressions by hand and compare the backward pass with
central differences.
"""

import numpy as np

from snscl import autodiff as ad
from snscl.autodiff import Tensor

rng = np.random.default_rng(0)

# a two-layer network with a softmax cross-entropy on top
x = rng.normal(size=(5, 3))
W1 = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
W2 = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
targets = np.eye(6)[rng.integers(0, 6, 5)]


def loss_of(w1, w2):
    h = ad.relu(ad.matmul(Tensor(x), w1))
    return ad.softmax_cross_entropy(ad.matmul(h, w2), targets)[0]


loss = loss_of(W1, W2)
loss.backward()
print("loss", loss.item())


def central_diff(f, arr, h=1e-5):
    g = np.zeros_like(arr)
    for i in np.ndindex(arr.shape):
        old = arr[i]
        arr[i] = old + h
        up = f()
        arr[i] = old - h
        down = f()
        arr[i] = old
        g[i] = (up - down) / (2 * h)
    return g


num = central_diff(lambda: loss_of(Tensor(W1.data), Tensor(W2.data)).item(), W1.data)
print("max |analytic - numeric| for W1:", np.abs(W1.grad - num).max())

# unit-norm embeddings feed the contrastive losses; their gradient is
# orthogonal to the embedding itself
v = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
ad.sum(ad.mul(ad.l2_normalize(v, axis=1), rng.normal(size=(1, 4)))).backward()
print("grad . v =", float((v.grad * v.data).sum()))

# non-finite values stop the computation early
try:
    ad.log(Tensor(np.array([1.0, -1.0])))
except ValueError as exc:
    print("log rejected:", exc)
