"""mIoU, weighted IoU and video consistency on small hand-made examples.

    python demos/05_metrics.py
"""
import numpy as np

from stsc.metrics import miou, per_class_iou, video_consistency, wiou

cm = np.array([[1, 1], [0, 2]])
print("per-class IoU", per_class_iou(cm), "mIoU", miou(cm), "WIoU", wiou(cm))

# Two frames of a static scene: the prediction flips on one of the two pixels.
gt = np.array([[[0, 1]], [[0, 1]]])
pred = np.array([[[0, 1]], [[0, 0]]])
print("VC over 2 frames:", video_consistency(pred, gt, 2))

# A flicker in the middle of a longer clip hurts every window that covers it.
gt = np.zeros((10, 4, 4), dtype=np.uint8)
pred = gt.copy()
pred[5, :2] = 1
for n in (2, 4, 8):
    print(f"VC{n}: {video_consistency(pred, gt, n):.3f}")
