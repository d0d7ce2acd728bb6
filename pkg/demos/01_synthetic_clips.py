"""A look at the changing-background clips.

Each clip has moving foreground shapes over a textured background whose class
and texture switch partway through. Per-frame classifiers that lean on
surrounding context tend to flip their answer for the shapes at that switch;
that is the failure the consistency loss is meant to fix.

    python demos/01_synthetic_clips.py
"""
import numpy as np

from stsc import ClipConfig, generate_clip, sparsify_labels

cfg = ClipConfig(height=32, width=32, num_frames=8, background_change_frame=4, seed=7)
clip = generate_clip(cfg)
print(f"{clip.clip_id}: frames {clip.frames.shape}, classes {clip.class_names}")

for t in range(clip.num_frames):
    counts = np.bincount(clip.labels[t].ravel(), minlength=clip.num_classes)
    print(f"  frame {t}: pixels per class {counts.tolist()}")

sparse = sparsify_labels(clip, keep_every=2)
print("labeled frames after sparsifying:", np.flatnonzero(sparse.labeled).tolist())

# Camouflaged foregrounds share the background colour and differ only in texture.
cam = generate_clip(ClipConfig(height=32, width=32, num_frames=8, background_change_frame=4,
                               palette="camouflage", seed=7))
for c in range(cam.num_classes):
    mask = cam.labels[0] == c
    if mask.any():
        print(f"  camouflage class {c}: mean colour {cam.frames[0][:, mask].mean(axis=1).round(2)}")

try:
    import matplotlib.pyplot as plt
except ImportError:
    print("(install matplotlib to see the frames)")
else:
    fig, axes = plt.subplots(2, clip.num_frames, figsize=(2 * clip.num_frames, 4))
    for t in range(clip.num_frames):
        axes[0, t].imshow(np.clip(clip.frames[t].transpose(1, 2, 0), 0, 1))
        axes[1, t].imshow(clip.labels[t], vmin=0, vmax=clip.num_classes - 1)
        for ax in axes[:, t]:
            ax.axis("off")
    plt.show()
