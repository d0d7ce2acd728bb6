"""Training objectives: pixel cross-entropy and the cross-frame contrastive loss.

The contrastive loss pulls every query-frame pixel embedding (anchor)
towards same-class pixels of the query and reference frames (positives)
and away from different-class pixels of both frames (negatives)::

    L(i) = 1/|P_i| * sum_{p in P_i} -log( e^{i.p/tau} / (e^{i.p/tau} + sum_{n in N_i} e^{i.n/tau}) )

and the map-level value is the mean of L(i) over retained anchors. Other
positives do not appear in the denominator. Gradients are exact.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError
from .numerics import log_softmax, log_sum_exp, sigmoid, softmax, softplus
from .video import IGNORE


@dataclass(frozen=True)
class StclConfig:
    tau: float = 0.07
    max_anchors_per_class: int = 64
    max_positives_per_anchor: int = 128
    max_negatives_per_anchor: int = 512
    sampling_seed: int = 0
    dense_mode: bool = False
    detach_reference: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if min(self.max_anchors_per_class, self.max_positives_per_anchor,
               self.max_negatives_per_anchor) < 1:
            raise ValueError("sampling limits must be >= 1")


@dataclass
class LossResult:
    value: float
    grads: tuple
    anchor_count: int = 0


@dataclass
class AnchorSets:
    """Anchor pixel indices into the query map plus per-anchor masks.

    Mask columns index the concatenation of query pixels then reference
    pixels (both flattened row-major).
    """
    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray


def downsample_labels(labels, h, w):
    """Nearest-neighbour resize of (..., H, W) integer labels to (..., h, w)."""
    labels = np.asarray(labels)
    big_h, big_w = labels.shape[-2:]
    rows = np.minimum(((np.arange(h) + 0.5) * big_h / h).astype(int), big_h - 1)
    cols = np.minimum(((np.arange(w) + 0.5) * big_w / w).astype(int), big_w - 1)
    return labels[..., rows[:, None], cols[None, :]]


def upsample_labels(labels, big_h, big_w):
    labels = np.asarray(labels)
    h, w = labels.shape[-2:]
    rows = np.arange(big_h) * h // big_h
    cols = np.arange(big_w) * w // big_w
    return labels[..., rows[:, None], cols[None, :]]


def cross_entropy(logits, labels, ignore=IGNORE):
    """Mean pixel cross-entropy over non-ignored pixels.

    ``logits`` is ``(K, h, w)`` or ``(B, K, h, w)``; ``labels`` drops the
    class axis. An all-ignored map gives value 0 and zero gradient.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    single = logits.ndim == 3
    if single:
        logits, labels = logits[None], labels[None]
    k = logits.shape[1]
    if labels.shape != logits.shape[:1] + logits.shape[2:]:
        raise DimensionError(f"logits {logits.shape} and labels {labels.shape} disagree")
    valid = labels != ignore
    if np.any(labels[valid] >= k) or np.any(labels[valid] < 0):
        raise DataError(f"label outside [0, {k}) that is not the ignore value")
    count = int(valid.sum())
    grad = np.zeros_like(logits)
    if count == 0:
        return LossResult(0.0, (grad[0] if single else grad,), 0)
    lab = np.where(valid, labels, 0).astype(np.int64)
    logp = log_softmax(logits, axis=1)
    picked = np.take_along_axis(logp, lab[:, None], axis=1)[:, 0]
    value = -float(np.sum(picked[valid])) / count
    onehot = np.zeros_like(logits)
    np.put_along_axis(onehot, lab[:, None], 1.0, axis=1)
    grad = (softmax(logits, axis=1) - onehot) * valid[:, None] / count
    return LossResult(value, (grad[0] if single else grad,), count)


def _subsample(rng, population, limit):
    if population.size <= limit:
        return population
    return np.sort(rng.choice(population, size=limit, replace=False))


def build_anchor_sets(labels_q, labels_r, cfg=StclConfig(), ignore=IGNORE):
    """Pick anchors from the query map and their positive/negative sets.

    Positives of an anchor are the other pixels of its class in both maps;
    negatives are the non-ignored pixels of any other class in both maps.
    In dense mode nothing is subsampled. Anchors left without positives
    are dropped.
    """
    lq = np.asarray(labels_q).ravel().astype(np.int64)
    lr = np.asarray(labels_r).ravel().astype(np.int64)
    pool = np.concatenate([lq, lr])
    m = pool.size
    valid = pool != ignore
    if cfg.dense_mode:
        big = m + 1
        lim_a = lim_p = lim_n = big
    else:
        lim_a = cfg.max_anchors_per_class
        lim_p = cfg.max_positives_per_anchor
        lim_n = cfg.max_negatives_per_anchor
    rng = np.random.default_rng([cfg.sampling_seed, 3])

    chosen = []
    for c in np.unique(lq[lq != ignore]):
        chosen.append(_subsample(rng, np.flatnonzero(lq == c), lim_a))
    anchors = np.sort(np.concatenate(chosen)) if chosen else np.zeros(0, dtype=np.int64)

    keep, pos_rows, neg_rows = [], [], []
    for a in anchors:
        c = lq[a]
        same = valid & (pool == c)
        same[a] = False
        pos_idx = _subsample(rng, np.flatnonzero(same), lim_p)
        neg_idx = _subsample(rng, np.flatnonzero(valid & (pool != c)), lim_n)
        if pos_idx.size == 0:
            continue
        prow = np.zeros(m, dtype=bool)
        prow[pos_idx] = True
        nrow = np.zeros(m, dtype=bool)
        nrow[neg_idx] = True
        keep.append(a)
        pos_rows.append(prow)
        neg_rows.append(nrow)
    if not keep:
        empty = np.zeros((0, m), dtype=bool)
        return AnchorSets(np.zeros(0, dtype=np.int64), empty, empty.copy())
    return AnchorSets(np.asarray(keep, dtype=np.int64), np.stack(pos_rows), np.stack(neg_rows))


def stcl_per_anchor(anchor, positives, negatives, tau):
    """Loss of one anchor and its gradients w.r.t. anchor, positives, negatives."""
    a = np.asarray(anchor, dtype=np.float64)
    pos = np.asarray(positives, dtype=np.float64).reshape(-1, a.size)
    neg = np.asarray(negatives, dtype=np.float64).reshape(-1, a.size)
    if pos.shape[0] == 0:
        raise ValueError("an anchor needs at least one positive")
    sp = pos @ a / tau
    if neg.shape[0]:
        sn = neg @ a / tau
        lse_neg = log_sum_exp(sn)
    else:
        sn = np.zeros(0)
        lse_neg = -np.inf
    npos = pos.shape[0]
    value = float(np.sum(softplus(lse_neg - sp))) / npos
    wp = sigmoid(lse_neg - sp) / npos
    gsp = -wp
    gsn = np.exp(sn - lse_neg) * wp.sum() if neg.shape[0] else sn
    g_anchor = (gsp @ pos + gsn @ neg) / tau
    return value, g_anchor, gsp[:, None] * a / tau, gsn[:, None] * a / tau


def _as_pixels(emb):
    emb = np.asarray(emb, dtype=np.float64)
    if emb.ndim != 3:
        raise DimensionError(f"embedding map must be (D, h, w), got {emb.shape}")
    return emb.reshape(emb.shape[0], -1).T


def stcl(emb_q, emb_r, labels_q, labels_r, cfg=StclConfig(), ignore=IGNORE):
    """Cross-frame contrastive loss for one query/reference pair.

    Embedding maps are ``(D, h, w)``; label maps ``(h, w)`` at the same
    resolution. Returns gradients for both maps (the reference gradient is
    zero when ``cfg.detach_reference`` is set).
    """
    emb_q, emb_r = np.asarray(emb_q, dtype=np.float64), np.asarray(emb_r, dtype=np.float64)
    eq, er = _as_pixels(emb_q), _as_pixels(emb_r)
    if eq.shape[1] != er.shape[1]:
        raise DimensionError("query and reference embeddings differ in dimension")
    if np.shape(labels_q) != emb_q.shape[1:] or np.shape(labels_r) != emb_r.shape[1:]:
        raise DimensionError("label maps must match embedding spatial size")
    sets = build_anchor_sets(labels_q, labels_r, cfg, ignore)
    n_anchor = sets.anchors.size
    if n_anchor == 0:
        return LossResult(0.0, (np.zeros_like(emb_q), np.zeros_like(emb_r)), 0)

    pix = np.concatenate([eq, er])
    qa = eq[sets.anchors]
    s = qa @ pix.T / cfg.tau
    pos, neg = sets.positives, sets.negatives
    lse_neg = log_sum_exp(s, axis=1, where=neg)
    npos = pos.sum(axis=1)
    gap = np.where(pos, lse_neg[:, None] - s, 0.0)
    per_anchor = np.sum(np.where(pos, softplus(gap), 0.0), axis=1) / npos
    value = float(np.sum(per_anchor)) / n_anchor

    w = np.where(pos, sigmoid(gap), 0.0) / npos[:, None]
    has_neg = np.isfinite(lse_neg)
    safe_lse = np.where(has_neg, lse_neg, 0.0)
    soft_neg = np.where(neg, np.exp(np.where(neg, s - safe_lse[:, None], 0.0)), 0.0)
    g = (soft_neg * w.sum(axis=1, keepdims=True) - w) / (cfg.tau * n_anchor)
    g_pix = g.T @ qa
    g_pix[sets.anchors] += g @ pix
    nq = eq.shape[0]
    g_q = g_pix[:nq].T.reshape(emb_q.shape)
    g_r = g_pix[nq:].T.reshape(emb_r.shape)
    if cfg.detach_reference:
        g_r = np.zeros_like(g_r)
    return LossResult(value, (g_q, g_r), n_anchor)


def total_loss(l_seg, l_stcl, lambda1=1.0, lambda2=0.2):
    return lambda1 * l_seg + lambda2 * l_stcl


def scale_grads(result, weight):
    return tuple(weight * g for g in result.grads)
