"""The changing-background benchmark used by the ablation experiments.

Train clips carry labels on every ``keep_every``-th frame; eval clips are
fully labeled. Predictions are made frame by frame and upsampled to input
resolution before scoring.
"""
from dataclasses import dataclass, replace

import numpy as np

from .losses import upsample_labels
from .metrics import evaluate
from .pseudo import PseudoLabelConfig, generate as pseudo_generate
from .synthetic import ClipConfig, drop_labels, generate_dataset
from .trainer import TrainConfig, fit


@dataclass(frozen=True)
class BenchmarkConfig:
    clip: ClipConfig = ClipConfig(height=64, width=64, num_frames=16, num_classes=4,
                                  palette="camouflage")
    train_clips: int = 20
    eval_clips: int = 10
    keep_every: int = 2
    data_seed: int = 0


def make_benchmark(cfg=BenchmarkConfig(), seed=None):
    seed = cfg.data_seed if seed is None else seed
    train = generate_dataset(cfg.clip, cfg.train_clips, seed=[seed, 0], keep_every=cfg.keep_every,
                             prefix="train")
    evals = generate_dataset(cfg.clip, cfg.eval_clips, seed=[seed, 1], prefix="eval")
    return train, evals


def predict_clip(model, clip):
    _, _, h, w = clip.frames.shape
    return upsample_labels(model.predict(clip.frames), h, w).astype(np.uint8)


def evaluate_model(model, clips, vc_lengths=(8, 16)):
    pairs = [(predict_clip(model, c), c.labels, c.clip_id) for c in clips]
    return evaluate(pairs, model.config.num_classes, vc_lengths)


def run_config(train, evals, config):
    model, history = fit(train, config)
    return model, history, evaluate_model(model, evals)


def ablation(seeds, train_config=TrainConfig(), bench=BenchmarkConfig(), lambda2=0.2):
    """Train with and without the consistency term on the same data and seeds.

    Returns ``{seed: {"baseline": (model, history, report), "stcl": ...}}``.
    """
    out = {}
    for s in seeds:
        train, evals = make_benchmark(bench, seed=s)
        base = run_config(train, evals, replace(train_config, lambda2=0.0, seed=s))
        ours = run_config(train, evals, replace(train_config, lambda2=lambda2, seed=s))
        out[s] = {"baseline": base, "stcl": ours}
    return out


def pseudo_label_experiment(seeds, train_config=TrainConfig(), bench=BenchmarkConfig(),
                            threshold=0.5, ensemble=True):
    """Labeled half alone vs labeled half + teacher pseudo labels on the other half.

    The labeled-only model doubles as a teacher. With ``ensemble`` it is
    joined by a twin trained without the consistency term (``lambda2=0``),
    and their probabilities are averaged.
    """
    out = {}
    for s in seeds:
        train, evals = make_benchmark(bench, seed=s)
        half = len(train) // 2
        labeled = train[:half]
        unlabeled = [drop_labels(c) for c in train[half:]]
        cfg = replace(train_config, seed=s)
        base, t_hist, t_report = run_config(labeled, evals, cfg)
        teachers = [base]
        if ensemble:
            teachers.append(fit(labeled, replace(cfg, lambda2=0.0))[0])
        pseudo, stats = pseudo_generate(teachers, unlabeled, PseudoLabelConfig(threshold))
        student, s_hist, s_report = run_config(labeled + pseudo, evals, cfg)
        out[s] = {"labeled_only": (base, t_hist, t_report),
                  "with_pseudo": (student, s_hist, s_report),
                  "teachers": teachers,
                  "stats": stats}
    return out
