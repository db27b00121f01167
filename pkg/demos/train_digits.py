"""
Training an infomorphic network on digits
=========================================

Setup 1 with 100 hidden neurons, comparing the heuristic goal (redundancy
between feedforward and label) with the four-parameter optimized goal.

    python demos/train_digits.py /path/to/mnist [n_train] [epochs]

The directory must hold the four MNIST IDX files (gzipped or not).  The
defaults train on 5000 images for 30 epochs, a few minutes on a laptop.
"""
import sys

import numpy as np

from infomorph.dataset import load_mnist, split_train_validation
from infomorph.lattice import HEURISTIC_GOAL, goal_vector
from infomorph.network import NetworkConfig, train
from infomorph.search import load_reference_goal
from infomorph.svg import line_plot

root = sys.argv[1] if len(sys.argv) > 1 else None  # falls back to INFOMORPH_MNIST_DIR
n_train = int(sys.argv[2]) if len(sys.argv) > 2 else 5000
epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 30

full = load_mnist(root, "train")
test = load_mnist(root, "test")
full = full.subset(np.random.default_rng(0).permutation(len(full))[:n_train])

goals = {"heuristic": goal_vector(HEURISTIC_GOAL), "optimized": load_reference_goal()}
curves = {}
for name, gamma in goals.items():
    # smaller batches than the full-scale 1024 give more updates per epoch on a subset
    cfg = NetworkConfig(hidden_goal=tuple(gamma), epochs=epochs, batch_size=256, seed=0)
    tr, val = split_train_validation(full, cfg.validation_fraction, cfg.seed)
    net, report = train(cfg, tr, val, test, eval_train=False)
    curves[name] = [(e["epoch"], e["val_acc"]) for e in report.epochs]
    print(f"{name:10} test accuracy {report.test_accuracy:.4f}   "
          f"recurrence |p3 - p2| {net.recurrence_delta(test.images[:1000]):.1e}")

# Receptive fields settle: the self-cosine distance of consecutive epochs
# falls towards zero as training converges.
print("median self-cosine distance, last epochs:",
      ", ".join(f"{e['median_dc']:.1e}" for e in report.epochs[-3:]))

line_plot(curves, "train_digits.svg", "validation accuracy", "epoch", "accuracy")
print("wrote train_digits.svg")
