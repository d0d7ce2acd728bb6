"""Finite-difference check of the model's analytic gradients."""
from dataclasses import dataclass

import numpy as np

from .losses import StclConfig
from .model import ModelConfig, SegNet
from .trainer import joint_objective


@dataclass
class GradCheckReport:
    seed: int
    eps: float
    max_relative_error: float
    max_abs_error: float
    per_param: dict
    num_checked: int

    def to_json(self):
        return {
            "seed": self.seed,
            "eps": self.eps,
            "max_relative_error": self.max_relative_error,
            "max_abs_error": self.max_abs_error,
            "num_checked": self.num_checked,
            "per_param": self.per_param,
        }


def relative_error(analytic, numeric, floor=1e-8):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def grad_check(seed=0, eps=1e-5, lambda1=1.0, lambda2=0.2, tau=0.07, height=8, width=8,
               in_channels=3, num_classes=3, proj_dim=8, widths=(4, 6), feature_dim=8,
               floor=1e-8):
    """Compare every analytic gradient of the joint loss with central differences.

    Builds a random model and a random query/reference pair of
    ``height x width`` frames; the contrastive term runs in dense mode.
    """
    rng = np.random.default_rng([seed, 17])
    cfg = ModelConfig(in_channels=in_channels, num_classes=num_classes, widths=tuple(widths),
                      feature_dim=feature_dim, proj_dim=proj_dim)
    model = SegNet(cfg, seed=seed)
    for name, p in model.params.items():
        if name.endswith(".b") or name.startswith("bn."):
            model.params[name] = p + rng.normal(0.0, 0.1, size=p.shape)
    frames = rng.normal(size=(2, in_channels, height, width))
    labels = rng.integers(0, num_classes, size=(2, height, width))
    stcl_cfgs = [StclConfig(tau=tau, dense_mode=True)]

    def loss_value():
        losses, _ = joint_objective(model, frames, labels[:1], labels[1:], lambda1, lambda2, stcl_cfgs)
        return losses.loss

    _, analytic = joint_objective(model, frames, labels[:1], labels[1:], lambda1, lambda2, stcl_cfgs)
    per_param, worst_rel, worst_abs, count = {}, 0.0, 0.0, 0
    for name, p in model.params.items():
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            plus = loss_value()
            p[idx] = old - eps
            minus = loss_value()
            p[idx] = old
            numeric[idx] = (plus - minus) / (2 * eps)
        rel = relative_error(analytic[name], numeric, floor)
        abs_err = float(np.max(np.abs(analytic[name] - numeric)))
        per_param[name] = float(rel.max())
        worst_rel = max(worst_rel, per_param[name])
        worst_abs = max(worst_abs, abs_err)
        count += p.size
    return GradCheckReport(seed, eps, worst_rel, worst_abs, per_param, count)
