"""Hard pseudo labels from a (possibly ensembled) teacher.

A pixel keeps the teacher's top class only when that class's probability
strictly exceeds the threshold; everything else becomes IGNORE.
"""
import os
from dataclasses import dataclass

import numpy as np

from .errors import StscIOError
from .losses import upsample_labels
from .model import load_checkpoint
from .video import IGNORE, dump_json, list_dataset, load_clip, save_clip


@dataclass(frozen=True)
class PseudoLabelConfig:
    threshold: float = 0.5
    ignore: int = IGNORE

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")


@dataclass
class PseudoLabelStats:
    total_pixels: int
    labeled_pixels: int
    per_class_counts: list

    @property
    def coverage(self):
        return self.labeled_pixels / self.total_pixels if self.total_pixels else 0.0

    def to_json(self):
        return {"total_pixels": self.total_pixels, "labeled_pixels": self.labeled_pixels,
                "coverage": self.coverage, "per_class_counts": self.per_class_counts}


def harden(probs, cfg=PseudoLabelConfig()):
    """Argmax labels over the class axis (axis -3), IGNORE where not confident.

    ``probs`` is ``(K, h, w)`` or ``(B, K, h, w)``. Ties go to the lowest
    class index.
    """
    probs = np.asarray(probs, dtype=np.float64)
    top = np.argmax(probs, axis=-3)
    conf = np.max(probs, axis=-3)
    return np.where(conf > cfg.threshold, top, cfg.ignore).astype(np.uint8)


def teacher_proba(teachers, frames):
    """Uniform average of each teacher's per-frame probabilities."""
    return sum(t.predict_proba(frames) for t in teachers) / len(teachers)


def pseudo_label_clip(teachers, clip, cfg=PseudoLabelConfig()):
    """Replace a clip's labels with teacher pseudo labels on every frame."""
    probs = teacher_proba(teachers, clip.frames)
    hard = harden(probs, cfg)
    t, _, h, w = clip.frames.shape
    labels = upsample_labels(hard, h, w).astype(np.uint8)
    num_classes = probs.shape[1]
    return clip.replace(labels=labels, labeled=np.ones(t, dtype=bool), pseudo=True,
                        num_classes=num_classes)


def _stats(clips, num_classes, ignore):
    total = labeled = 0
    counts = np.zeros(num_classes, dtype=np.int64)
    for c in clips:
        lab = c.labels
        total += lab.size
        keep = lab != ignore
        labeled += int(keep.sum())
        counts += np.bincount(lab[keep].astype(np.int64), minlength=num_classes)[:num_classes]
    return PseudoLabelStats(total, labeled, [int(x) for x in counts])


def generate(teachers, clips, cfg=PseudoLabelConfig()):
    """Pseudo-label in-memory clips; returns ``(clips, stats)``."""
    out = [pseudo_label_clip(teachers, c, cfg) for c in clips]
    num_classes = teachers[0].config.num_classes
    return out, _stats(out, num_classes, cfg.ignore)


def generate_dir(teacher_dirs, in_dir, out_dir, cfg=PseudoLabelConfig()):
    """Pseudo-label every clip of a dataset directory into ``out_dir``."""
    teachers = []
    for d in teacher_dirs:
        model, _ = load_checkpoint(d)
        teachers.append(model)
    if not teachers:
        raise StscIOError("at least one teacher checkpoint is required")
    os.makedirs(out_dir, exist_ok=True)
    ids, labeled = [], []
    for cid in list_dataset(in_dir):
        clip = pseudo_label_clip(teachers, load_clip(os.path.join(in_dir, cid)), cfg)
        save_clip(clip, os.path.join(out_dir, cid))
        ids.append(cid)
        labeled.append(clip)
    dump_json({"format": "stsc-dataset/1", "clips": ids}, os.path.join(out_dir, "index.json"))
    return _stats(labeled, teachers[0].config.num_classes, cfg.ignore)
