"""Command-line entry point: ``stsc <subcommand> ...``.

Structured results go to stdout as JSON. Failures print
``{"error": <kind>, "message": ...}`` to stderr and exit non-zero.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, StscError, StscIOError
from .gradcheck import grad_check
from .metrics import evaluate
from .model import load_checkpoint
from .pseudo import PseudoLabelConfig, generate_dir
from .synthetic import ClipConfig, drop_labels, generate_dataset
from .trainer import TrainConfig, train
from .video import IGNORE, dump_json, list_dataset, load_clip, save_clip, save_dataset
from .losses import upsample_labels

log = logging.getLogger("stsc")


class UsageError(StscError):
    kind = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise StscIOError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _emit(obj):
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_gen_data(args):
    cfg = ClipConfig.from_dict(_read_json(args.config)) if args.config else ClipConfig()
    if args.seed is not None:
        cfg = ClipConfig(**{**cfg.__dict__, "seed": args.seed}).validate()
    clips = generate_dataset(cfg, args.clips, keep_every=args.keep_every, prefix=args.prefix)
    if args.unlabeled:
        clips = [drop_labels(c) for c in clips]
    save_dataset(clips, args.out)
    _emit({"out": args.out, "clips": [c.clip_id for c in clips], "seed": cfg.seed})


def cmd_train(args):
    raw = _read_json(args.config) if args.config else {}
    config = TrainConfig.from_dict(raw)
    pseudo = tuple(args.pseudo) if args.pseudo else config.pseudo_dirs
    ckpt, history = train(args.data, config, args.out, pseudo_dirs=pseudo)
    last = history.records[-1] if history.records else {}
    _emit({"checkpoint": ckpt, "history": os.path.join(args.out, "history.json"),
           "iterations": len(history), "final": {k: last[k] for k in ("l_seg", "l_stcl", "loss") if k in last}})


def cmd_eval(args):
    pred_ids, gt_ids = list_dataset(args.pred), list_dataset(args.gt)
    missing = sorted(set(gt_ids) - set(pred_ids))
    extra = sorted(set(pred_ids) - set(gt_ids))
    if missing or extra:
        raise DataError(f"unpaired clips: missing predictions for {missing}, no ground truth for {extra}")
    pairs, num_classes = [], args.classes
    for cid in gt_ids:
        gt = load_clip(os.path.join(args.gt, cid))
        pred = load_clip(os.path.join(args.pred, cid))
        if pred.labels.shape != gt.labels.shape:
            raise DataError(f"clip {cid}: prediction shape {pred.labels.shape} != {gt.labels.shape}")
        gt_labels = np.where(gt.labeled[:, None, None], gt.labels, IGNORE)
        pairs.append((pred.labels, gt_labels, cid))
        num_classes = num_classes or gt.num_classes
    if not num_classes:
        raise ConfigError("--classes is required when the manifests do not record it")
    report = evaluate(pairs, num_classes, tuple(args.vc))
    _emit(report.to_json())


def cmd_pseudo_label(args):
    teachers = [t for t in args.teacher.split(",") if t]
    stats = generate_dir(teachers, args.input, args.out, PseudoLabelConfig(args.threshold))
    _emit(stats.to_json())


def cmd_grad_check(args):
    seeds = args.seeds if args.seeds else [args.seed]
    reports = [grad_check(seed=s, eps=args.eps, lambda2=args.lambda2, tau=args.tau).to_json() for s in seeds]
    worst = max(r["max_relative_error"] for r in reports)
    _emit({"max_relative_error": worst, "reports": reports})


def cmd_infer(args):
    model, _ = load_checkpoint(args.checkpoint)
    ids = []
    for cid in list_dataset(args.input):
        clip = load_clip(os.path.join(args.input, cid))
        t, _, h, w = clip.frames.shape
        pred = upsample_labels(model.predict(clip.frames), h, w).astype(np.uint8)
        save_clip(clip.replace(labels=pred, labeled=np.ones(t, dtype=bool), pseudo=False,
                               num_classes=model.config.num_classes), os.path.join(args.out, cid))
        ids.append(cid)
    dump_json({"format": "stsc-dataset/1", "clips": ids}, os.path.join(args.out, "index.json"))
    _emit({"out": args.out, "clips": ids})


def _seed_list(text):
    if "-" in text:
        lo, hi = text.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",")]


def build_parser():
    p = _Parser(prog="stsc", description="Cross-frame consistency training for video scene parsing.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate synthetic clips")
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--clips", type=int, required=True, help="number of clips")
    g.add_argument("--config", help="clip config JSON (ClipConfig field names)")
    g.add_argument("--seed", type=int, help="dataset seed (overrides the config seed)")
    g.add_argument("--keep-every", type=int, default=1, help="keep labels on every k-th frame")
    g.add_argument("--unlabeled", action="store_true", help="mark every frame unlabeled")
    g.add_argument("--prefix", default="clip", help="clip id prefix")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--data", required=True, help="labeled dataset directory")
    t.add_argument("--pseudo", action="append", help="pseudo-labeled dataset directory (repeatable)")
    t.add_argument("--config", help="train config JSON (TrainConfig field names)")
    t.add_argument("--out", required=True, help="output directory for checkpoint/ and history.json")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--pred", required=True, help="predicted dataset directory")
    e.add_argument("--gt", required=True, help="ground-truth dataset directory")
    e.add_argument("--classes", type=int, help="number of classes (default: from manifests)")
    e.add_argument("--vc", type=int, nargs="+", default=[8, 16], help="VC window lengths")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("pseudo-label", help="pseudo-label clips with teacher checkpoint(s)")
    s.add_argument("--teacher", required=True, help="checkpoint dir, or comma-separated list to ensemble")
    s.add_argument("--in", dest="input", required=True, help="input dataset directory")
    s.add_argument("--out", required=True, help="output dataset directory")
    s.add_argument("--threshold", type=float, default=0.5, help="keep pixels with max prob > threshold")
    s.set_defaults(func=cmd_pseudo_label)

    c = sub.add_parser("grad-check", help="finite-difference gradient check")
    c.add_argument("--seed", type=int, default=0, help="single seed")
    c.add_argument("--seeds", type=_seed_list, help="seed list '0,1,2' or range '0-9'")
    c.add_argument("--eps", type=float, default=1e-5, help="central-difference step")
    c.add_argument("--lambda2", type=float, default=0.2, help="consistency loss weight")
    c.add_argument("--tau", type=float, default=0.07, help="temperature")
    c.set_defaults(func=cmd_grad_check)

    i = sub.add_parser("infer", help="per-frame predictions for a dataset")
    i.add_argument("--checkpoint", required=True, help="checkpoint directory")
    i.add_argument("--in", dest="input", required=True, help="input dataset directory")
    i.add_argument("--out", required=True, help="output dataset directory")
    i.set_defaults(func=cmd_infer)
    return p


def _thread_limit():
    raw = os.environ.get("STSC_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"STSC_THREADS must be an integer, got {raw!r}") from exc
    return max(n, 1)


def main(argv=None):
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
        limit = _thread_limit()
        if limit is None:
            args.func(args)
        else:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=limit):
                args.func(args)
    except StscError as exc:
        sys.stderr.write(json.dumps({"error": exc.kind, "message": str(exc)}) + "\n")
        return 2 if isinstance(exc, UsageError) else 1
    except (ValueError, TypeError) as exc:
        sys.stderr.write(json.dumps({"error": "config", "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
