"""Train with and without the consistency term and compare temporal consistency.

Runs one seed by default (a few minutes on one core); pass seeds as arguments
for more, e.g. ``python demos/03_ablation.py 0 1 2 3 4``.
"""
import sys

from stsc.benchmark import ablation

seeds = [int(s) for s in sys.argv[1:]] or [0]
for seed, runs in ablation(seeds).items():
    base, ours = runs["baseline"][2], runs["stcl"][2]
    print(f"seed {seed}: mIoU {base.miou:.4f} -> {ours.miou:.4f}   VC8 {base.vc[8]:.4f} -> {ours.vc[8]:.4f}")
