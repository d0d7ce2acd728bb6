"""Segmentation and video-consistency metrics.

* confusion matrix: rows ground truth, columns prediction, IGNORE pixels skipped
* mIoU: mean IoU over classes with a non-empty union
* WIoU: IoU weighted by ground-truth pixel frequency
* VC_n: over sliding windows of n frames, the fraction of pixels with a
  constant ground-truth label whose prediction is also constant and correct
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError
from .video import IGNORE

METRICS_VERSION = "stsc-metrics/1 (wiou=gt-frequency weighted; vc=static-gt, pred constant and correct)"


def confusion(pred, gt, num_classes, ignore=IGNORE):
    pred = np.asarray(pred).astype(np.int64)
    gt = np.asarray(gt).astype(np.int64)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and ground truth {gt.shape} disagree")
    keep = gt != ignore
    g, p = gt[keep], pred[keep]
    if g.size and (g.min() < 0 or g.max() >= num_classes):
        raise DataError("ground-truth label out of range")
    if p.size and (p.min() < 0 or p.max() >= num_classes):
        raise DataError("predicted label out of range")
    return np.bincount(g * num_classes + p, minlength=num_classes ** 2).reshape(num_classes, num_classes)


def per_class_iou(cm):
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    union = cm.sum(axis=0) + cm.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, tp / union, np.nan)


def miou(cm):
    iou = per_class_iou(cm)
    present = ~np.isnan(iou)
    if not present.any():
        raise DataError("mIoU undefined: no class present in ground truth or prediction")
    return float(np.mean(iou[present]))


def wiou(cm):
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise DataError("WIoU undefined: no evaluated pixels")
    weights = cm.sum(axis=1) / total
    iou = np.nan_to_num(per_class_iou(cm))
    return float(np.sum(weights * iou))


def _vc_windows(preds, gts, n, ignore):
    """(consistent-and-correct count, static-gt count) per window."""
    t = len(gts)
    out = []
    for s in range(t - n + 1):
        g = gts[s:s + n]
        p = preds[s:s + n]
        static = np.all(g == g[0], axis=0) & (g[0] != ignore)
        good = static & np.all(p == p[0], axis=0) & (p[0] == g[0])
        out.append((int(good.sum()), int(static.sum())))
    return out


def video_consistency(preds, gts, n, ignore=IGNORE):
    """Mean over windows of n consecutive frames; windows without static pixels are skipped.

    Returns ``None`` when every window is skipped.
    """
    preds = np.asarray(preds)
    gts = np.asarray(gts)
    if preds.shape != gts.shape:
        raise DimensionError(f"prediction {preds.shape} and ground truth {gts.shape} disagree")
    if n < 1 or len(gts) < n:
        raise DataError(f"need at least {n} frames for VC{n}, got {len(gts)}")
    scores = [num / den for num, den in _vc_windows(preds, gts, n, ignore) if den > 0]
    return float(np.mean(scores)) if scores else None


@dataclass
class MetricsReport:
    miou: float
    wiou: float
    vc: dict
    per_class_iou: list
    pixel_counts: list
    confusion: np.ndarray = field(repr=False, default=None)

    def to_json(self, ndigits=6):
        def r(x):
            return None if x is None or (isinstance(x, float) and np.isnan(x)) else round(float(x), ndigits)
        out = {
            "version": METRICS_VERSION,
            "miou": r(self.miou),
            "wiou": r(self.wiou),
            "per_class": [r(x) for x in self.per_class_iou],
            "pixels": [int(x) for x in self.pixel_counts],
        }
        for n, v in sorted(self.vc.items()):
            out[f"vc{n}"] = r(v)
        return out

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def evaluate(pairs, num_classes, vc_lengths=(8, 16), ignore=IGNORE):
    """Evaluate ``(pred labels, gt labels, clip_id)`` triples or ``(pred, gt)`` pairs.

    Label sequences are ``(T, H, W)`` arrays. The confusion matrix is
    accumulated over all clips; VC is computed per clip and averaged over
    clips long enough for the window.
    """
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    vc_scores = {n: [] for n in vc_lengths}
    for i, item in enumerate(pairs):
        pred, gt = np.asarray(item[0]), np.asarray(item[1])
        clip_id = item[2] if len(item) > 2 else f"#{i}"
        try:
            cm += confusion(pred, gt, num_classes, ignore)
            for n in vc_lengths:
                if len(gt) >= n:
                    v = video_consistency(pred, gt, n, ignore)
                    if v is not None:
                        vc_scores[n].append(v)
        except (DataError, DimensionError) as exc:
            raise type(exc)(f"clip {clip_id}: {exc}") from exc
    iou = per_class_iou(cm)
    return MetricsReport(
        miou=miou(cm),
        wiou=wiou(cm),
        vc={n: (float(np.mean(v)) if v else None) for n, v in vc_scores.items()},
        per_class_iou=[float(x) for x in iou],
        pixel_counts=[int(x) for x in cm.sum(axis=1)],
        confusion=cm,
    )
