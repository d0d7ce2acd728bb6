"""Pseudo labels from a teacher: coverage against threshold, then a student run.

    python demos/04_pseudo_labels.py
"""
from dataclasses import replace

import numpy as np

from stsc import ClipConfig, PseudoLabelConfig, TrainConfig, fit
from stsc.pseudo import generate
from stsc.synthetic import drop_labels, generate_dataset

clip_cfg = ClipConfig(height=32, width=32, num_frames=8, background_change_frame=4)
train = generate_dataset(clip_cfg, 6, seed=1, keep_every=2)
labeled, unlabeled = train[:3], [drop_labels(c) for c in train[3:]]

cfg = TrainConfig(iterations=100)
teacher, _ = fit(labeled, cfg)

for theta in (0.0, 0.25, 0.5, 0.75, 1.0):
    _, stats = generate([teacher], unlabeled, PseudoLabelConfig(theta))
    print(f"threshold {theta:.2f}: coverage {stats.coverage:.3f}")

pseudo, stats = generate([teacher], unlabeled, PseudoLabelConfig(0.5))
print("pseudo-labeled frames per clip:", [int(c.labeled.sum()) for c in pseudo])
student, hist = fit(labeled + pseudo, replace(cfg, seed=1))
print("student final loss", round(hist.records[-1]["loss"], 4))
print("ignored pixels in first pseudo clip:", float(np.mean(pseudo[0].labels == 255)))
