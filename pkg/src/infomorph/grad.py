"""Local goal gradients and the Adam update for a layer of neurons.

Each neuron's goal depends on its own weights only through its per-sample
firing probabilities.  The chain is

    weights -> aggregates -> activation -> p(y=+1 | sample)
            -> joint pmf -> shared-exclusion redundancies -> atoms -> goal

with bin assignments and the empirical source pmf held fixed per batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .estimator import BinningSpec, bin_values
from .lattice import atoms_from_redundancies, build_lattice, isx_kernel
from .neuron import CLASSES, Layer, activation_grad


class NumericalError(RuntimeError):
    """Non-finite goal or gradient; carries the offending neuron index."""

    def __init__(self, message: str, neuron: int | None = None):
        super().__init__(message if neuron is None else f"{message} (neuron {neuron})")
        self.neuron = neuron


@dataclass
class GoalRecord:
    """Everything a backward pass needs for one layer and one batch."""

    layer: Layer
    inputs: dict[str, np.ndarray | None]
    aggregates: dict[str, np.ndarray]
    prob: np.ndarray
    bins: np.ndarray  # (n_neurons, batch, n_sources)
    n_bins: tuple[int, ...]
    consumed: bool = field(default=False, repr=False)

    @property
    def n_sources(self) -> int:
        return self.bins.shape[-1]


def record(layer: Layer, inputs: Mapping[str, np.ndarray | None], specs: Sequence[BinningSpec],
           aggregates=None, prob=None) -> GoalRecord:
    """Run (or reuse) the forward pass and bin the aggregates.

    ``specs`` gives one binning per source; the sources are F, C and, for
    lateral layers, L.
    """
    if aggregates is None or prob is None:
        aggregates, prob, _ = layer.forward(inputs, sample=False)
    names = CLASSES[: len(specs)]
    bins = np.stack([bin_values(aggregates[n], s, axis=0).T for n, s in zip(names, specs)], axis=-1)
    return GoalRecord(layer, dict(inputs), aggregates, prob, bins, tuple(s.n_bins for s in specs))


def goal_terms(rec: GoalRecord, gamma: np.ndarray):
    """Atoms ``(n_neurons, n_atoms+1)`` and ``d goal / d prob`` ``(batch, n_neurons)``."""
    lattice = build_lattice(rec.n_sources)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape[-1] != lattice.n_atoms + 1:
        raise ValueError(f"goal vector needs {lattice.n_atoms + 1} entries, got {gamma.shape[-1]}")
    gamma = np.broadcast_to(gamma, (rec.layer.n_neurons, lattice.n_atoms + 1))
    batch = rec.prob.shape[0]
    mass = np.full((rec.layer.n_neurons, batch), 1.0 / batch)
    coef = gamma[:, :-1] @ lattice.inversion_matrix
    red, h_res, dprob = isx_kernel(rec.bins, mass, rec.prob.T, rec.n_bins, lattice, coef, gamma[:, -1])
    atoms = atoms_from_redundancies(red, lattice, h_res)
    return atoms, dprob.T


def backward(rec: GoalRecord, gamma) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
    """Goal values, atoms and weight gradients (same shapes as the layer's
    weights, masked; frozen classes omitted) for every neuron of the layer."""
    if rec.consumed:
        raise RuntimeError("backward called twice on the same record")
    rec.consumed = True
    atoms, dprob = goal_terms(rec, gamma)
    goals = np.einsum("ij,ij->i", atoms, np.broadcast_to(np.asarray(gamma, dtype=float), atoms.shape))
    agg = rec.aggregates
    q = rec.prob
    d_act = dprob * q * (1 - q)
    dF, dC, dL = activation_grad(agg["F"], agg["C"], agg["L"], rec.layer.params, rec.layer.lateral)
    partial = {"F": dF, "C": dC, "L": dL}
    grads = {}
    for name, w in rec.layer.weights.items():
        if name in rec.layer.frozen:
            continue
        x = rec.inputs.get(name)
        if x is None:
            grads[name] = np.zeros_like(w)
            continue
        g = np.asarray(x, dtype=float).T @ (d_act * partial[name])
        mask = rec.layer.masks.get(name)
        grads[name] = g * mask if mask is not None else g
    return goals, atoms, grads


@dataclass
class Adam:
    """Adam ascent with decoupled weight decay, one moment pair per weight."""

    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, weights: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        """Update ``weights`` in place to increase the goal."""
        for name, g in grads.items():
            bad = ~np.isfinite(g)
            if bad.any():
                raise NumericalError("non-finite gradient", int(np.argwhere(bad)[0][-1]))
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for name, g in grads.items():
            w = weights[name]
            m = self.m.setdefault(name, np.zeros_like(w))
            v = self.v.setdefault(name, np.zeros_like(w))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            w *= 1 - self.lr * self.weight_decay
            w += self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.m:
            out[f"m_{name}"] = self.m[name]
            out[f"v_{name}"] = self.v[name]
        return out
