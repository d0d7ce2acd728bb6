"""Video clip container and its on-disk format.

A clip directory holds ``manifest.json`` plus two raw little-endian arrays:
``frames.bin`` (float32, shape T x C x H x W) and ``labels.bin`` (uint8,
shape T x H x W, IGNORE = 255). A dataset directory holds one clip
directory per clip and an ``index.json`` listing them in order.
"""
import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, DimensionError, StscIOError

IGNORE = 255
CLIP_FORMAT = "stsc-clip/1"
INDEX_FORMAT = "stsc-dataset/1"


@dataclass(frozen=True, eq=False)
class VideoClip:
    frames: np.ndarray  # (T, C, H, W) float32
    labels: np.ndarray  # (T, H, W) uint8
    labeled: np.ndarray  # (T,) bool
    clip_id: str = "clip"
    num_classes: int = 0
    class_names: tuple = ()
    seed: int | None = None
    config: dict = field(default_factory=dict)
    pseudo: bool = False

    def __post_init__(self):
        if self.frames.ndim != 4 or self.labels.ndim != 3:
            raise DimensionError("frames must be (T,C,H,W) and labels (T,H,W)")
        t, _, h, w = self.frames.shape
        if self.labels.shape != (t, h, w):
            raise DimensionError(
                f"frames {self.frames.shape} and labels {self.labels.shape} disagree")
        if self.labeled.shape != (t,):
            raise DimensionError("labeled flags must have one entry per frame")
        if self.num_classes:
            lab = self.labels[self.labeled]
            bad = (lab >= self.num_classes) & (lab != IGNORE)
            if bad.any():
                raise DataError(f"{self.clip_id}: label out of range")
        for arr in (self.frames, self.labels, self.labeled):
            arr.flags.writeable = False

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def labeled_indices(self):
        return [int(i) for i in np.flatnonzero(self.labeled)]

    def replace(self, **changes):
        return replace(self, **changes)


def _manifest(clip):
    t, c, h, w = clip.frames.shape
    return {
        "format": CLIP_FORMAT,
        "clip_id": clip.clip_id,
        "shape": {"frames": [t, c, h, w], "labels": [t, h, w]},
        "dtype": {"frames": "<f4", "labels": "|u1"},
        "num_classes": int(clip.num_classes),
        "class_names": list(clip.class_names),
        "labeled_frames": clip.labeled_indices,
        "ignore": IGNORE,
        "seed": clip.seed,
        "config": clip.config,
        "pseudo": bool(clip.pseudo),
    }


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_clip_files(clip, directory):
    dump_json(_manifest(clip), os.path.join(directory, "manifest.json"))
    np.ascontiguousarray(clip.frames, dtype="<f4").tofile(os.path.join(directory, "frames.bin"))
    labels = np.where(clip.labeled[:, None, None], clip.labels, IGNORE).astype("u1")
    np.ascontiguousarray(labels).tofile(os.path.join(directory, "labels.bin"))


def save_clip(clip, directory):
    """Write ``clip`` to ``directory`` atomically (temp dir + rename)."""
    directory = os.path.abspath(directory)
    parent = os.path.dirname(directory)
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".tmp-", dir=parent)
    try:
        _write_clip_files(clip, tmp)
        if os.path.exists(directory):
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return directory


def load_clip(directory):
    path = os.path.join(directory, "manifest.json")
    try:
        with open(path, encoding="utf-8") as fh:
            man = json.load(fh)
        if man.get("format") != CLIP_FORMAT:
            raise DataError(f"{path}: unknown clip format {man.get('format')!r}")
        fshape = tuple(man["shape"]["frames"])
        lshape = tuple(man["shape"]["labels"])
        frames = np.fromfile(os.path.join(directory, "frames.bin"), dtype="<f4")
        labels = np.fromfile(os.path.join(directory, "labels.bin"), dtype="u1")
    except OSError as exc:
        raise StscIOError(f"cannot read clip at {directory}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise DataError(f"malformed clip manifest {path}: {exc}") from exc
    if frames.size != int(np.prod(fshape)) or labels.size != int(np.prod(lshape)):
        raise DataError(f"{directory}: binary size does not match manifest shape")
    labeled = np.zeros(fshape[0], dtype=bool)
    labeled[man["labeled_frames"]] = True
    return VideoClip(
        frames=frames.reshape(fshape).astype(np.float32),
        labels=labels.reshape(lshape),
        labeled=labeled,
        clip_id=man["clip_id"],
        num_classes=man.get("num_classes", 0),
        class_names=tuple(man.get("class_names", ())),
        seed=man.get("seed"),
        config=man.get("config", {}),
        pseudo=bool(man.get("pseudo", False)),
    )


def save_dataset(clips, directory):
    os.makedirs(directory, exist_ok=True)
    ids = []
    for clip in clips:
        save_clip(clip, os.path.join(directory, clip.clip_id))
        ids.append(clip.clip_id)
    dump_json({"format": INDEX_FORMAT, "clips": ids}, os.path.join(directory, "index.json"))
    return directory


def list_dataset(directory):
    path = os.path.join(directory, "index.json")
    try:
        with open(path, encoding="utf-8") as fh:
            return list(json.load(fh)["clips"])
    except OSError as exc:
        raise StscIOError(f"cannot read dataset index {path}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise DataError(f"malformed dataset index {path}: {exc}") from exc


def load_dataset(directory):
    return [load_clip(os.path.join(directory, cid)) for cid in list_dataset(directory)]
