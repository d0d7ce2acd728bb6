"""Tiny segmentation network with hand-written forward and backward passes.

Layout: three 3x3 convolutions (ReLU) with 2x2 average pooling after the
first two, giving features at 1/4 resolution. Two heads read the features:
a 1x1 classifier with per-pixel softmax and a projection head
(1x1 conv -> batch norm -> ReLU -> per-pixel L2 normalisation).

Public arrays are channel-first: frames ``(B, C, H, W)``, features
``(B, F, h, w)``, logits ``(B, K, h, w)``, embeddings ``(B, D, h, w)``.
Internally everything is channels-last.
"""
import json
import os
import shutil
import tempfile
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, DimensionError, StateError, StscIOError
from .numerics import softmax

CHECKPOINT_FORMAT = "stsc-checkpoint/1"


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 3
    num_classes: int = 4
    widths: tuple = (16, 16)
    feature_dim: int = 32
    proj_dim: int = 32
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    norm_eps: float = 1e-12

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["widths"] = tuple(d.get("widths", cls.widths))
        return cls(**d)


# -- layer kernels (channels-last) -------------------------------------------

def _im2col(x):
    b, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (b, h, w, c, 3, 3)
    return win.reshape(b * h * w, c * 9)


def conv3x3(x, weight, bias):
    b, h, w, _ = x.shape
    cols = _im2col(x)
    out = cols @ weight.reshape(weight.shape[0], -1).T + bias
    return out.reshape(b, h, w, -1), cols


def conv3x3_backward(dout, cols, weight, x_shape, need_dx=True):
    b, h, w, c = x_shape
    d2 = dout.reshape(-1, weight.shape[0])
    dw = (d2.T @ cols).reshape(weight.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (d2 @ weight.reshape(weight.shape[0], -1)).reshape(b, h, w, c, 3, 3)
    dxp = np.zeros((b, h + 2, w + 2, c))
    for ky in range(3):
        for kx in range(3):
            dxp[:, ky:ky + h, kx:kx + w, :] += dcols[..., ky, kx]
    return dxp[:, 1:-1, 1:-1, :], dw, db


def _pool_counts(h, w):
    ones = np.zeros((h + h % 2, w + w % 2))
    ones[:h, :w] = 1.0
    return ones.reshape(ones.shape[0] // 2, 2, ones.shape[1] // 2, 2).sum(axis=(1, 3))


def avg_pool(x):
    """2x2 average pooling, ceil mode: edge windows average only real pixels."""
    b, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (0, h % 2), (0, w % 2), (0, 0)))
    s = xp.reshape(b, xp.shape[1] // 2, 2, xp.shape[2] // 2, 2, c).sum(axis=(2, 4))
    return s / _pool_counts(h, w)[None, :, :, None]


def avg_pool_backward(dout, x_shape):
    b, h, w, c = x_shape
    g = dout / _pool_counts(h, w)[None, :, :, None]
    g = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2)
    return g[:, :h, :w, :]


def feature_size(n):
    half = (n + 1) // 2
    return (half + 1) // 2


class SegNet:
    """Encoder + classifier head + projection head.

    Parameters live in ``self.params`` (ordered dict of float64 arrays) and
    the batch-norm running statistics in ``self.buffers``.
    """

    def __init__(self, config=None, seed=0):
        self.config = config or ModelConfig()
        self.params = init_params(self.config, seed)
        p = self.config.proj_dim
        self.buffers = {"bn.running_mean": np.zeros(p), "bn.running_var": np.ones(p)}
        self._cache = None

    # -- forward pieces ------------------------------------------------------

    def _check_frames(self, frames):
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim == 3:
            frames = frames[None]
        if frames.ndim != 4 or frames.shape[1] != self.config.in_channels:
            raise DimensionError(
                f"expected frames (B, {self.config.in_channels}, H, W), got {frames.shape}")
        return frames

    def _encode(self, x, cache=None):
        p = self.params
        z1, c1 = conv3x3(x, p["conv1.w"], p["conv1.b"])
        a1 = np.maximum(z1, 0.0)
        p1 = avg_pool(a1)
        z2, c2 = conv3x3(p1, p["conv2.w"], p["conv2.b"])
        a2 = np.maximum(z2, 0.0)
        p2 = avg_pool(a2)
        z3, c3 = conv3x3(p2, p["conv3.w"], p["conv3.b"])
        feat = np.maximum(z3, 0.0)
        if cache is not None:
            cache.update(x_shape=x.shape, z1=z1, c1=c1, a1_shape=a1.shape, p1_shape=p1.shape,
                         z2=z2, c2=c2, a2_shape=a2.shape, p2_shape=p2.shape, z3=z3, c3=c3)
        return feat

    def _logits(self, feat):
        return feat @ self.params["cls.w"].T + self.params["cls.b"]

    def _project(self, feat, train, cache=None):
        cfg = self.config
        u = feat.reshape(-1, feat.shape[-1]) @ self.params["proj.w"].T
        if train:
            mean = u.mean(axis=0)
            var = u.var(axis=0)
        else:
            mean = self.buffers["bn.running_mean"]
            var = self.buffers["bn.running_var"]
        inv_std = 1.0 / np.sqrt(var + cfg.bn_eps)
        xhat = (u - mean) * inv_std
        y = self.params["bn.gamma"] * xhat + self.params["bn.beta"]
        r = np.maximum(y, 0.0)
        norm = np.sqrt(np.sum(r * r, axis=1, keepdims=True))
        emb = r / np.maximum(norm, cfg.norm_eps)
        if cache is not None:
            cache.update(bn_mean=mean, bn_var=var, inv_std=inv_std, xhat=xhat, y=y,
                         norm=norm, emb=emb, u=u)
        return emb.reshape(feat.shape[:-1] + (cfg.proj_dim,))

    # -- public surface ------------------------------------------------------

    def encode(self, frames):
        x = self._check_frames(frames).transpose(0, 2, 3, 1)
        return self._encode(x).transpose(0, 3, 1, 2)

    def classify(self, features):
        f = _features_last(features, self.config.feature_dim)
        return softmax(self._logits(f), axis=-1).transpose(0, 3, 1, 2)

    def project(self, features, mode="eval"):
        if mode not in ("train", "eval"):
            raise ValueError("mode must be 'train' or 'eval'")
        f = _features_last(features, self.config.feature_dim)
        return self._project(f, mode == "train").transpose(0, 3, 1, 2)

    def predict_proba(self, frames):
        """Per-pixel class probabilities; every frame is processed on its own."""
        frames = self._check_frames(frames)
        out = [self.classify(self.encode(f[None]))[0] for f in frames]
        return np.stack(out)

    def predict(self, frames):
        return np.argmax(self.predict_proba(frames), axis=1)

    def forward(self, frames, train=True):
        """Full forward pass that caches what ``backward`` needs.

        Returns ``(logits, embeddings)``. In train mode batch norm uses the
        statistics of the whole batch; running averages are left alone until
        ``update_running_stats`` is called.
        """
        x = self._check_frames(frames).transpose(0, 2, 3, 1)
        cache = {}
        feat = self._encode(x, cache)
        logits = self._logits(feat)
        emb = self._project(feat, train, cache)
        cache.update(feat=feat, train=train)
        self._cache = cache
        return logits.transpose(0, 3, 1, 2), emb.transpose(0, 3, 1, 2)

    def update_running_stats(self):
        if self._cache is None or not self._cache["train"]:
            raise StateError("no train-mode forward pass cached")
        m = self.config.bn_momentum
        c = self._cache
        self.buffers["bn.running_mean"] = m * self.buffers["bn.running_mean"] + (1 - m) * c["bn_mean"]
        self.buffers["bn.running_var"] = m * self.buffers["bn.running_var"] + (1 - m) * c["bn_var"]

    def backward(self, d_logits=None, d_emb=None):
        """Gradients of every parameter given upstream gradients at both heads."""
        c = self._cache
        if c is None:
            raise StateError("backward called before forward")
        p, cfg = self.params, self.config
        feat = c["feat"]
        b, h, w, f = feat.shape
        n = b * h * w
        grads = {}
        feat_flat = feat.reshape(n, f)

        if d_logits is None:
            dl = np.zeros((n, cfg.num_classes))
        else:
            dl = np.asarray(d_logits, dtype=np.float64).transpose(0, 2, 3, 1).reshape(n, -1)
        grads["cls.w"] = dl.T @ feat_flat
        grads["cls.b"] = dl.sum(axis=0)
        d_feat = dl @ p["cls.w"]

        if d_emb is None:
            de = np.zeros((n, cfg.proj_dim))
        else:
            de = np.asarray(d_emb, dtype=np.float64).transpose(0, 2, 3, 1).reshape(n, -1)
        emb, norm = c["emb"], c["norm"]
        big = norm >= cfg.norm_eps
        dr = np.where(big, (de - emb * np.sum(emb * de, axis=1, keepdims=True)) / np.where(big, norm, 1.0),
                      de / cfg.norm_eps)
        dy = dr * (c["y"] > 0)
        xhat = c["xhat"]
        grads["bn.gamma"] = np.sum(dy * xhat, axis=0)
        grads["bn.beta"] = dy.sum(axis=0)
        dxhat = dy * p["bn.gamma"]
        if c["train"]:
            du = c["inv_std"] / n * (n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0))
        else:
            du = dxhat * c["inv_std"]
        grads["proj.w"] = du.T @ feat_flat
        d_feat = d_feat + du @ p["proj.w"]

        dz3 = d_feat.reshape(b, h, w, f) * (c["z3"] > 0)
        dp2, grads["conv3.w"], grads["conv3.b"] = conv3x3_backward(dz3, c["c3"], p["conv3.w"], c["p2_shape"])
        dz2 = avg_pool_backward(dp2, c["a2_shape"]) * (c["z2"] > 0)
        dp1, grads["conv2.w"], grads["conv2.b"] = conv3x3_backward(dz2, c["c2"], p["conv2.w"], c["p1_shape"])
        dz1 = avg_pool_backward(dp1, c["a1_shape"]) * (c["z1"] > 0)
        _, grads["conv1.w"], grads["conv1.b"] = conv3x3_backward(dz1, c["c1"], p["conv1.w"], c["x_shape"],
                                                           need_dx=False)
        return {k: grads[k] for k in p}

    def copy(self):
        other = SegNet.__new__(SegNet)
        other.config = self.config
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.buffers = {k: v.copy() for k, v in self.buffers.items()}
        other._cache = None
        return other


def _features_last(features, feature_dim):
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 3:
        f = f[None]
    if f.ndim != 4 or f.shape[1] != feature_dim:
        raise DimensionError(f"expected features (B, {feature_dim}, h, w), got {f.shape}")
    return f.transpose(0, 2, 3, 1)


def param_shapes(config):
    c1, c2 = config.widths
    f, k, d = config.feature_dim, config.num_classes, config.proj_dim
    return {
        "conv1.w": (c1, config.in_channels, 3, 3), "conv1.b": (c1,),
        "conv2.w": (c2, c1, 3, 3), "conv2.b": (c2,),
        "conv3.w": (f, c2, 3, 3), "conv3.b": (f,),
        "cls.w": (k, f), "cls.b": (k,),
        "proj.w": (d, f),
        "bn.gamma": (d,), "bn.beta": (d,),
    }


def init_params(config, seed):
    """Uniform fan-in initialisation; biases and BN shift start at zero."""
    rng = np.random.default_rng([seed, 11])
    params = {}
    for name, shape in param_shapes(config).items():
        if name == "bn.gamma":
            params[name] = np.ones(shape)
        elif name.endswith(".b") or name == "bn.beta":
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            # ReLU layers get the He bound, the linear classifier the plain one
            bound = np.sqrt((3.0 if name == "cls.w" else 6.0) / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(model, directory, step=0, extra=None):
    """Write ``checkpoint.json`` + ``params.bin`` (little-endian float64)."""
    directory = os.path.abspath(directory)
    parent = os.path.dirname(directory)
    os.makedirs(parent, exist_ok=True)
    layers = [{"name": k, "shape": list(v.shape), "kind": "param"} for k, v in model.params.items()]
    layers += [{"name": k, "shape": list(v.shape), "kind": "buffer"} for k, v in model.buffers.items()]
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "model_config": asdict(model.config),
        "layers": layers,
        "bn": {"momentum": model.config.bn_momentum, "eps": model.config.bn_eps,
               "running_stats": ["bn.running_mean", "bn.running_var"]},
        "step": int(step),
        "dtype": "<f8",
    }
    if extra:
        manifest.update(extra)
    tmp = tempfile.mkdtemp(prefix=".tmp-", dir=parent)
    try:
        with open(os.path.join(tmp, "checkpoint.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        blob = np.concatenate([np.ravel(v) for v in model.params.values()]
                              + [np.ravel(v) for v in model.buffers.values()])
        blob.astype("<f8").tofile(os.path.join(tmp, "params.bin"))
        if os.path.exists(directory):
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return directory


def load_checkpoint(directory):
    path = os.path.join(directory, "checkpoint.json")
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        blob = np.fromfile(os.path.join(directory, "params.bin"), dtype="<f8")
    except OSError as exc:
        raise StscIOError(f"cannot read checkpoint at {directory}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"malformed checkpoint manifest {path}: {exc}") from exc
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: unknown checkpoint format {manifest.get('format')!r}")
    model = SegNet(ModelConfig.from_dict(manifest["model_config"]))
    offset = 0
    for layer in manifest["layers"]:
        size = int(np.prod(layer["shape"]))
        if offset + size > blob.size:
            raise DataError(f"{directory}: params.bin is shorter than the manifest declares")
        arr = blob[offset:offset + size].astype(np.float64).reshape(layer["shape"])
        target = model.params if layer["kind"] == "param" else model.buffers
        target[layer["name"]] = arr
        offset += size
    if offset != blob.size:
        raise DataError(f"{directory}: params.bin has {blob.size - offset} trailing values")
    return model, manifest
