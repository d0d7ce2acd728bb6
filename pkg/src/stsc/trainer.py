"""Joint training of segmentation and cross-frame consistency.

Each step draws ``batch_clips`` clips, picks a labeled query frame and a
labeled reference frame at most ``max_frame_gap`` frames away in each,
runs both frames through the network, and minimises

    lambda1 * cross_entropy(query) + lambda2 * contrastive(query, reference)

with SGD (momentum, weight decay on weight tensors only).
"""
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, TrainingError
from .losses import StclConfig, cross_entropy, downsample_labels, stcl, total_loss
from .model import ModelConfig, SegNet, save_checkpoint
from .video import dump_json, load_dataset


@dataclass(frozen=True)
class TrainConfig:
    lambda1: float = 1.0
    lambda2: float = 0.2
    tau: float = 0.07
    proj_dim: int = 32
    feature_dim: int = 32
    widths: tuple = (16, 16)
    max_frame_gap: int = 3
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    iterations: int = 1500
    batch_clips: int = 2
    seed: int = 0
    max_anchors_per_class: int = 64
    max_positives_per_anchor: int = 128
    max_negatives_per_anchor: int = 512
    dense_stcl: bool = False
    detach_reference: bool = False
    pseudo_dirs: tuple = ()

    def __post_init__(self):
        if self.max_frame_gap < 1:
            raise ConfigError("max_frame_gap must be >= 1")
        if not self.learning_rate > 0 and self.learning_rate != 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.iterations < 0 or self.batch_clips < 1:
            raise ConfigError("iterations must be >= 0 and batch_clips >= 1")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
        d = dict(d)
        for key in ("widths", "pseudo_dirs"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def stcl_config(self, sampling_seed=0):
        return StclConfig(
            tau=self.tau,
            max_anchors_per_class=self.max_anchors_per_class,
            max_positives_per_anchor=self.max_positives_per_anchor,
            max_negatives_per_anchor=self.max_negatives_per_anchor,
            sampling_seed=sampling_seed,
            dense_mode=self.dense_stcl,
            detach_reference=self.detach_reference,
        )

    def model_config(self, in_channels, num_classes):
        return ModelConfig(in_channels=in_channels, num_classes=num_classes, widths=tuple(self.widths),
                           feature_dim=self.feature_dim, proj_dim=self.proj_dim)


@dataclass
class StepLosses:
    l_seg: float
    l_stcl: float
    loss: float
    anchors: int


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def to_json(self):
        return {"records": self.records}


# -- pair sampling -----------------------------------------------------------

def valid_offsets(labeled, t, max_gap):
    n = len(labeled)
    return [k for k in range(-max_gap, max_gap + 1)
            if k != 0 and 0 <= t + k < n and labeled[t + k]]


def sample_pair(clip, max_gap, rng):
    """(query index, reference index), or ``None`` when the clip has no valid pair.

    The query is uniform over labeled frames that have at least one labeled
    partner; the offset is uniform over that frame's valid offsets.
    """
    labeled = clip.labeled if hasattr(clip, "labeled") else np.asarray(clip, dtype=bool)
    candidates = [t for t in np.flatnonzero(labeled) if valid_offsets(labeled, t, max_gap)]
    if not candidates:
        return None
    t = int(candidates[rng.integers(len(candidates))])
    offsets = valid_offsets(labeled, t, max_gap)
    return t, t + offsets[rng.integers(len(offsets))]


# -- objective ---------------------------------------------------------------

def joint_objective(model, frames, labels_q, labels_r, lambda1, lambda2, stcl_cfgs):
    """Forward + backward of the joint loss on a batch of query/reference pairs.

    ``frames`` stacks the B query frames followed by the B reference frames;
    labels are full-resolution ``(B, H, W)`` maps. Returns
    ``(StepLosses, grads)``; the model's forward cache is left in place.
    """
    b = len(labels_q)
    logits, emb = model.forward(frames, train=True)
    h, w = logits.shape[2:]
    lq = downsample_labels(labels_q, h, w)
    lr = downsample_labels(labels_r, h, w)
    seg = cross_entropy(logits[:b], lq)
    d_logits = np.zeros_like(logits)
    d_logits[:b] = lambda1 * seg.grads[0]
    d_emb = np.zeros_like(emb)
    values, anchors = [], 0
    results = [stcl(emb[i], emb[b + i], lq[i], lr[i], stcl_cfgs[i]) for i in range(b)]
    active = [r for r in results if r.anchor_count > 0]
    if active:
        scale = lambda2 / len(active)
        for i, r in enumerate(results):
            if r.anchor_count == 0:
                continue
            d_emb[i] += scale * r.grads[0]
            d_emb[b + i] += scale * r.grads[1]
            values.append(r.value)
            anchors += r.anchor_count
    l_stcl = float(np.mean(values)) if values else 0.0
    loss = total_loss(seg.value, l_stcl, lambda1, lambda2)
    grads = model.backward(d_logits, d_emb)
    return StepLosses(seg.value, l_stcl, loss, anchors), grads


class Trainer:
    """Holds the model, optimiser state and data stream of one training run."""

    def __init__(self, clips, config, model=None):
        self.config = config
        pool = [c for c in clips if sample_pair(c, config.max_frame_gap, np.random.default_rng(0)) is not None]
        if not pool:
            raise ConfigError("dataset has no clip with a labeled query/reference pair")
        self.clips = pool
        first = pool[0]
        num_classes = first.num_classes or int(max(c.labels[c.labeled].max() for c in pool)) + 1
        self.model = model or SegNet(config.model_config(first.frames.shape[1], num_classes), seed=config.seed)
        self.velocity = {k: np.zeros_like(v) for k, v in self.model.params.items()}
        self.rng = np.random.default_rng([config.seed, 5])
        self.step_index = 0
        self.history = TrainHistory()

    def next_batch(self):
        picks = []
        for _ in range(self.config.batch_clips):
            clip = self.clips[int(self.rng.integers(len(self.clips)))]
            t, r = sample_pair(clip, self.config.max_frame_gap, self.rng)
            picks.append((clip, t, r))
        return picks

    def step(self, picks=None):
        cfg = self.config
        picks = picks or self.next_batch()
        frames = np.concatenate([np.stack([c.frames[t] for c, t, _ in picks]),
                                 np.stack([c.frames[r] for c, _, r in picks])]).astype(np.float64)
        labels_q = np.stack([c.labels[t] for c, t, _ in picks])
        labels_r = np.stack([c.labels[r] for c, _, r in picks])
        seeds = np.random.SeedSequence([cfg.seed, self.step_index]).generate_state(len(picks))
        stcl_cfgs = [cfg.stcl_config(int(s)) for s in seeds]
        losses, grads = joint_objective(self.model, frames, labels_q, labels_r,
                                        cfg.lambda1, cfg.lambda2, stcl_cfgs)
        if not all(math.isfinite(v) for v in (losses.l_seg, losses.l_stcl, losses.loss)):
            raise TrainingError(f"non-finite loss at step {self.step_index}: {losses}")
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for {name} at step {self.step_index}")
        self.model.update_running_stats()
        self.apply_update(grads)
        self.history.records.append({
            "step": self.step_index,
            "l_seg": losses.l_seg,
            "l_stcl": losses.l_stcl,
            "loss": losses.loss,
            "anchors": losses.anchors,
            "learning_rate": cfg.learning_rate,
            "pairs": [[c.clip_id, int(t), int(r)] for c, t, r in picks],
        })
        self.step_index += 1
        return losses

    def apply_update(self, grads):
        cfg = self.config
        for name, param in self.model.params.items():
            g = grads[name]
            if name.endswith(".w"):
                g = g + cfg.weight_decay * param
            v = cfg.momentum * self.velocity[name] + g
            self.velocity[name] = v
            self.model.params[name] = param - cfg.learning_rate * v

    def run(self, iterations=None):
        for _ in range(self.config.iterations if iterations is None else iterations):
            self.step()
        return self.model, self.history


def train_step(trainer, picks=None):
    """One optimisation step; returns the step's losses."""
    return trainer.step(picks)


def fit(clips, config, model=None):
    return Trainer(clips, config, model).run()


def train(data_dir, config, out_dir, pseudo_dirs=None):
    """Train on a dataset directory (plus pseudo-labeled ones) and write results.

    Writes ``out_dir/checkpoint/`` and ``out_dir/history.json``; returns
    ``(checkpoint path, history)``.
    """
    clips = load_dataset(data_dir)
    if not any(c.labeled.any() for c in clips):
        raise ConfigError(f"no labeled clip in {data_dir}")
    for d in (config.pseudo_dirs if pseudo_dirs is None else pseudo_dirs):
        clips += load_dataset(d)
    model, history = fit(clips, config)
    os.makedirs(out_dir, exist_ok=True)
    ckpt = save_checkpoint(model, os.path.join(out_dir, "checkpoint"), step=len(history),
                           extra={"train_config": _jsonable(asdict(config))})
    dump_json(history.to_json(), os.path.join(out_dir, "history.json"))
    return ckpt, history


def _jsonable(obj):
    return json.loads(json.dumps(obj))
