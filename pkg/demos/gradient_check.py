"""
The local goal and its gradient
===============================

One trivariate neuron, a random goal vector, and a comparison of the
analytic weight gradient with central finite differences.
"""
import numpy as np

from infomorph import grad
from infomorph.estimator import BinningSpec
from infomorph.lattice import build_lattice
from infomorph.neuron import ActivationParams, Layer

rng = np.random.default_rng(1)
layer = Layer.create(1, {"F": 4, "C": 2, "L": 2}, ActivationParams("modulatory"), rng)
for w in layer.weights.values():
    w *= 10  # spread the aggregates across the bins

inputs = {"F": rng.normal(size=(64, 4)),
          "C": rng.choice([-1.0, 1.0], (64, 2)),
          "L": rng.choice([-1.0, 1.0], (64, 2))}
specs = [BinningSpec.fixed(-20, 20, 20)] * 3
gamma = rng.uniform(-1, 1, 19)

rec = grad.record(layer, inputs, specs)
bins = rec.bins.copy()
goal, atoms, g = grad.backward(rec, gamma)
print("goal value", float(goal[0]))
for lab, a in zip(build_lattice(3).labels + ["res"], atoms[0]):
    print(f"  {lab:14} {a:+.4f}")

# Bin assignments are constants of the goal, so the probes reuse them.
def local_goal():
    agg, p, _ = layer.forward(inputs, sample=False)
    r = grad.record(layer, inputs, specs, agg, p)
    r.bins = bins
    return float(grad.goal_terms(r, gamma)[0][0] @ gamma)

h = 1e-6
for name, w in layer.weights.items():
    for idx in np.ndindex(w.shape):
        orig = w[idx]
        w[idx] = orig + h
        up = local_goal()
        w[idx] = orig - h
        down = local_goal()
        w[idx] = orig
        print(f"{name}{idx}: analytic {g[name][idx]:+.6e}  finite difference {(up - down) / (2 * h):+.6e}")
