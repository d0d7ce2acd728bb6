"""The cross-frame contrastive loss on tiny hand-built inputs, then a gradient check.

    python demos/02_loss_and_gradients.py
"""
import numpy as np

from stsc import StclConfig, stcl, stcl_per_anchor
from stsc.gradcheck import grad_check

# One anchor, one positive, one negative.
a = np.array([1.0, 0.0])
print("no negatives      ", stcl_per_anchor(a, np.array([[1.0, 0.0]]), np.zeros((0, 2)), 0.07)[0])
print("symmetric pos/neg ", stcl_per_anchor(a, np.array([[0.0, 1.0]]), np.array([[0.0, 1.0]]), 0.07)[0],
      "vs ln 2 =", np.log(2))
print("s+=1, s-=0, tau=1 ", stcl_per_anchor(a, np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]), 1.0)[0],
      "vs", np.log1p(np.exp(-1)))

# Two 4x4 embedding maps: aligned classes give a lower loss than shuffled ones.
rng = np.random.default_rng(0)
labels = np.repeat(np.array([[0, 0, 1, 1]]), 4, axis=0)
centers = np.eye(8)[:2]
aligned = centers[labels].transpose(2, 0, 1) + 0.05 * rng.standard_normal((8, 4, 4))
aligned /= np.linalg.norm(aligned, axis=0, keepdims=True)
shuffled = rng.permutation(aligned.reshape(8, -1).T).T.reshape(8, 4, 4)
cfg = StclConfig(dense_mode=True)
print("aligned embeddings ", stcl(aligned, aligned, labels, labels, cfg).value)
print("shuffled embeddings", stcl(shuffled, shuffled, labels, labels, cfg).value)

rep = grad_check(seed=0)
worst = max(rep.per_param, key=rep.per_param.get)
print(f"gradient check: worst relative error {rep.max_relative_error:.2e} ({worst})")
