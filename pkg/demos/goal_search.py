"""
Searching and ablating goal vectors
===================================

A small CMA-ES search over the 18 free goal entries, scored by truncated
training on a subset of digits, followed by single-entry ablation of the
best vector found.  Real searches use the ``infomorph search`` command with
far larger budgets; this is the same machinery at toy scale.

    python demos/goal_search.py /path/to/mnist
"""
import sys

import numpy as np

from infomorph.dataset import load_mnist, split_train_validation
from infomorph.network import NetworkConfig
from infomorph.search import TrainingEvaluator, ablate_individual, cmaes_search, rows_to_csv

root = sys.argv[1] if len(sys.argv) > 1 else None
full = load_mnist(root, "train")
full = full.subset(np.random.default_rng(0).permutation(len(full))[:2000])

cfg = NetworkConfig(n_hidden=30, batch_size=128)
tr, val = split_train_validation(full, cfg.validation_fraction, 0)
evaluate = TrainingEvaluator(cfg, tr, val, epochs=3)

# two generations of the default population of 12
result = cmaes_search(evaluate, budget=24, seed=0,
                      sink=lambda t: print(f"trial {t.index:2d}  accuracy {t.objective:.3f}"))
print("best trial", result.best.index, "accuracy", round(result.best.objective, 3))

# Zero each entry of the best vector in turn and retrain.
baseline, rows = ablate_individual(result.best.gamma, evaluate)
rows.sort(key=lambda r: r.delta)
print(f"baseline {baseline:.3f}; the five entries whose removal hurts most:")
print(rows_to_csv(rows[:5]))
