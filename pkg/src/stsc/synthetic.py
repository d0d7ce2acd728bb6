"""Synthetic clips where foreground objects persist while the background changes.

Foreground classes are drawn as flat-coloured rectangles (even class ids)
and circles (odd class ids) translating at constant velocity. The
background is a textured class region; at ``background_change_frame`` both
its class and its texture switch while the foreground is left untouched.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .video import IGNORE, VideoClip


@dataclass(frozen=True)
class ClipConfig:
    height: int = 64
    width: int = 64
    num_frames: int = 16
    channels: int = 3
    num_classes: int = 4
    shapes_per_clip: int = 3
    min_size: float = 6.0
    max_size: float = 11.0
    motion_speed: float = 1.0
    background_change_frame: int = 8
    noise_std: float = 0.1
    texture_amplitude: float = 0.2
    palette: str = "distinct"
    camouflage_offset: float = 0.08
    seed: int = 0

    def validate(self):
        if self.num_frames < 2:
            raise ConfigError("num_frames must be >= 2")
        if self.height < 16 or self.width < 16:
            raise ConfigError("height and width must be >= 16")
        if not 0 <= self.background_change_frame < self.num_frames:
            raise ConfigError("background_change_frame must lie in [0, num_frames)")
        if self.num_classes < 3 or self.num_classes >= IGNORE:
            raise ConfigError("num_classes must be in [3, 255)")
        if self.channels < 1 or self.shapes_per_clip < 0:
            raise ConfigError("channels must be >= 1 and shapes_per_clip >= 0")
        if not 0 < self.min_size <= self.max_size:
            raise ConfigError("need 0 < min_size <= max_size")
        if self.motion_speed < 0 or self.noise_std < 0:
            raise ConfigError("motion_speed and noise_std must be non-negative")
        if self.palette not in ("distinct", "camouflage"):
            raise ConfigError("palette must be 'distinct' or 'camouflage'")
        return self

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown clip config fields: {sorted(unknown)}")
        return cls(**d).validate()


@dataclass(frozen=True)
class Shape:
    cls: int
    kind: str  # "rect" or "circle"
    center: tuple  # (y, x) at frame 0
    velocity: tuple  # (dy, dx) per frame
    half_size: tuple  # (half height, half width); circles use half_size[0] as radius

    def center_at(self, t):
        return (self.center[0] + self.velocity[0] * t, self.center[1] + self.velocity[1] * t)

    def mask(self, t, height, width):
        cy, cx = self.center_at(t)
        yy, xx = np.mgrid[0:height, 0:width]
        if self.kind == "rect":
            return (np.abs(yy - cy) <= self.half_size[0]) & (np.abs(xx - cx) <= self.half_size[1])
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= self.half_size[0] ** 2


def class_layout(num_classes):
    """Split class ids into (foreground ids, background ids)."""
    num_bg = 2 if num_classes >= 4 else 1
    fg = list(range(num_classes - num_bg))
    return fg, list(range(num_classes - num_bg, num_classes))


def class_names(num_classes):
    fg, bg = class_layout(num_classes)
    names = [f"{'rect' if c % 2 == 0 else 'circle'}_{c}" for c in fg]
    return tuple(names + [f"background_{i}" for i in range(len(bg))])


def _base_color(cls, channels):
    rng = np.random.default_rng(7919 + 104729 * cls)
    return rng.uniform(0.2, 0.8, size=channels)


def class_color(cls, channels, num_classes=None, palette="distinct", offset=0.08):
    """Fixed base colour of a class, independent of the clip seed.

    With the ``camouflage`` palette foreground class ``c`` copies the colour
    of background class ``c mod #backgrounds`` shifted by ``offset``, so an
    object blends into one of the two backgrounds and only its lack of
    texture gives it away.
    """
    if palette == "distinct" or num_classes is None:
        return _base_color(cls, channels)
    fg, bg = class_layout(num_classes)
    if cls in bg:
        return _base_color(cls, channels)
    return _base_color(bg[cls % len(bg)], channels) + offset


def _axis_start(rng, lo, hi, v, steps):
    # start so that the whole trajectory stays in [lo, hi] when possible
    a = max(lo, lo - v * steps)
    b = min(hi, hi - v * steps)
    if a > b:
        return 0.5 * (lo + hi) - 0.5 * v * steps
    return rng.uniform(a, b)


def shape_tracks(config):
    """Foreground shapes and their motion, a pure function of ``config.seed``."""
    config.validate()
    rng = np.random.default_rng([config.seed, 1])
    fg, _ = class_layout(config.num_classes)
    steps = config.num_frames - 1
    shapes = []
    for _ in range(config.shapes_per_clip):
        cls = int(rng.integers(len(fg)))
        kind = "rect" if cls % 2 == 0 else "circle"
        r = rng.uniform(config.min_size, config.max_size)
        if kind == "rect":
            half = (r, r * rng.uniform(0.7, 1.3))
        else:
            half = (r, r)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        vy = config.motion_speed * math.sin(theta)
        vx = config.motion_speed * math.cos(theta)
        cy = _axis_start(rng, half[0], config.height - 1 - half[0], vy, steps)
        cx = _axis_start(rng, half[1], config.width - 1 - half[1], vx, steps)
        shapes.append(Shape(cls, kind, (cy, cx), (vy, vx), half))
    return shapes


def _texture(kind, phase, height, width):
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    if kind == 0:
        return np.sin(2 * math.pi * yy / 6.0 + phase)
    if kind == 1:
        return np.sign(np.sin(2 * math.pi * xx / 8.0 + phase) * np.sin(2 * math.pi * yy / 8.0 + phase))
    return np.sin(2 * math.pi * (xx + yy) / 7.0 + phase)


def generate_clip(config, clip_id=None):
    """Render one clip. Identical configs give byte-identical clips."""
    config.validate()
    rng = np.random.default_rng([config.seed, 2])
    h, w, t_total, ch = config.height, config.width, config.num_frames, config.channels
    _, bg = class_layout(config.num_classes)
    order = rng.permutation(len(bg))
    bg_before = bg[order[0]]
    bg_after = bg[order[-1]]
    # with a single background class only the texture switches
    tex_before, tex_after = (bg_before - bg[0], bg_after - bg[0])
    if bg_before == bg_after:
        tex_after = (tex_before + 1) % 3
    phase = rng.uniform(0.0, 2.0 * math.pi)
    shapes = shape_tracks(config)

    def color(c):
        return class_color(c, ch, config.num_classes, config.palette, config.camouflage_offset)

    frames = np.empty((t_total, ch, h, w), dtype=np.float64)
    labels = np.empty((t_total, h, w), dtype=np.uint8)
    for t in range(t_total):
        before = t < config.background_change_frame
        bcls = bg_before if before else bg_after
        tex = _texture(tex_before if before else tex_after, phase, h, w)
        img = color(bcls)[:, None, None] + config.texture_amplitude * tex[None]
        lab = np.full((h, w), bcls, dtype=np.uint8)
        for s in shapes:
            m = s.mask(t, h, w)
            img[:, m] = color(s.cls)[:, None]
            lab[m] = s.cls
        if config.noise_std > 0:
            img = img + rng.normal(0.0, config.noise_std, size=img.shape)
        frames[t] = img
        labels[t] = lab
    return VideoClip(
        frames=frames.astype(np.float32),
        labels=labels,
        labeled=np.ones(t_total, dtype=bool),
        clip_id=clip_id or f"clip_{config.seed:020d}",
        num_classes=config.num_classes,
        class_names=class_names(config.num_classes),
        seed=int(config.seed),
        config=asdict(config),
    )


def sparsify_labels(clip, keep_every):
    """Keep labels only on frames whose index is a multiple of ``keep_every``."""
    if keep_every < 1:
        raise ConfigError("keep_every must be >= 1")
    keep = (np.arange(clip.num_frames) % keep_every == 0) & clip.labeled
    labels = np.where(keep[:, None, None], clip.labels, IGNORE).astype(np.uint8)
    return clip.replace(labels=labels, labeled=keep)


def drop_labels(clip):
    """Mark every frame unlabeled."""
    t, h, w = clip.labels.shape
    return clip.replace(labels=np.full((t, h, w), IGNORE, dtype=np.uint8),
                        labeled=np.zeros(t, dtype=bool))


def clip_seeds(seed, n):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64) >> np.uint64(1)]


def generate_dataset(config, num_clips, seed=None, keep_every=1, prefix="clip"):
    """``num_clips`` clips whose seeds are derived from ``seed``."""
    seed = config.seed if seed is None else seed
    clips = []
    for i, s in enumerate(clip_seeds(seed, num_clips)):
        cfg = ClipConfig(**{**asdict(config), "seed": s})
        clip = generate_clip(cfg, clip_id=f"{prefix}_{i:04d}")
        if keep_every > 1:
            clip = sparsify_labels(clip, keep_every)
        clips.append(clip)
    return clips
