"""Infomorphic neuron forward pass.

A layer of neurons shares one weight matrix per input class (``"F"``,
``"C"``, ``"L"``); column ``j`` holds neuron ``j``'s incoming weights.  A
boolean mask per class encodes sparse wiring (e.g. the lateral matrix never
connects a neuron to itself).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import expit

CLASSES = ("F", "C", "L")


@dataclass(frozen=True)
class ActivationParams:
    """``modulatory``: A = F[(1-a1-a2) + a1 s(b1 F C) + a2 s(b2 F L)];
    ``linear``: A = F + c C + l L.  Without a lateral class ``a2`` is dropped."""

    kind: str = "modulatory"
    alpha1: float = 0.1
    alpha2: float = 0.1
    beta1: float = 2.0
    beta2: float = 2.0
    linear_c: float = 0.1
    linear_l: float = 0.1

    def __post_init__(self):
        if self.kind not in ("modulatory", "linear"):
            raise ValueError(f"unknown activation kind {self.kind!r}")


def activation(F, C, L, params: ActivationParams, lateral: bool = True):
    F, C, L = (np.asarray(v, dtype=float) for v in (F, C, L))
    if params.kind == "linear":
        return F + params.linear_c * C + (params.linear_l * L if lateral else 0.0)
    a2 = params.alpha2 if lateral else 0.0
    return F * ((1 - params.alpha1 - a2) + params.alpha1 * expit(params.beta1 * F * C)
                + a2 * expit(params.beta2 * F * L))


def activation_grad(F, C, L, params: ActivationParams, lateral: bool = True):
    """Partial derivatives ``(dA/dF, dA/dC, dA/dL)``."""
    F, C, L = (np.asarray(v, dtype=float) for v in (F, C, L))
    if params.kind == "linear":
        one = np.ones_like(F)
        return one, params.linear_c * one, (params.linear_l if lateral else 0.0) * one
    a1, b1, b2 = params.alpha1, params.beta1, params.beta2
    a2 = params.alpha2 if lateral else 0.0
    s1 = expit(b1 * F * C)
    s2 = expit(b2 * F * L)
    ds1 = s1 * (1 - s1) * b1
    ds2 = s2 * (1 - s2) * b2
    dF = (1 - a1 - a2) + a1 * s1 + a2 * s2 + F * (a1 * ds1 * C + a2 * ds2 * L)
    dC = F * a1 * ds1 * F
    dL = F * a2 * ds2 * F
    return dF, dC, dL


def fire(act, rng: np.random.Generator | None = None, sample: bool = True):
    """Firing probability ``sigmoid(act)`` and, if ``sample``, a ``+-1`` state."""
    p = expit(np.asarray(act, dtype=float))
    if not sample:
        return p, None
    if rng is None:
        raise ValueError("sampling requires a random generator")
    states = np.where(rng.random(p.shape) < p, 1.0, -1.0)
    return p, states


@dataclass
class NeuronState:
    """Incoming weights of a single neuron, one vector per input class."""

    w_F: np.ndarray
    w_C: np.ndarray | None = None
    w_L: np.ndarray | None = None
    params: ActivationParams = field(default_factory=ActivationParams)

    def weights(self, cls: str):
        return {"F": self.w_F, "C": self.w_C, "L": self.w_L}[cls]


def aggregate(inputs: Mapping[str, np.ndarray], state: NeuronState):
    """Weighted sums ``(F, C, L)``; absent classes aggregate to 0."""
    out = []
    for cls in CLASSES:
        w = state.weights(cls)
        x = inputs.get(cls)
        if w is None or x is None:
            out.append(0.0)
            continue
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != len(w):
            raise ValueError(f"class {cls}: {x.shape[-1]} inputs for {len(w)} weights")
        out.append(x @ w)
    return tuple(out)


@dataclass
class Layer:
    """A layer of infomorphic neurons.

    ``weights[cls]`` has shape ``(fan_in, n_neurons)``; ``masks[cls]`` (same
    shape, optional) marks existing connections.  Classes listed in
    ``frozen`` keep their weights and receive no gradient.
    """

    n_neurons: int
    weights: dict[str, np.ndarray]
    masks: dict[str, np.ndarray]
    params: ActivationParams
    frozen: frozenset = frozenset()

    @classmethod
    def create(cls, n_neurons: int, fan_in: Mapping[str, int], params: ActivationParams,
               rng: np.random.Generator, masks: Mapping[str, np.ndarray] | None = None,
               fixed: Mapping[str, np.ndarray] | None = None) -> "Layer":
        """Uniform ``[-k, k]`` init with ``k = 1/sqrt(connections per neuron)``;
        ``fixed`` supplies frozen weight matrices for some classes."""
        masks = dict(masks or {})
        fixed = dict(fixed or {})
        weights = {}
        for name in CLASSES:
            if name in fixed:
                weights[name] = np.array(fixed[name], dtype=float)
                continue
            if name not in fan_in:
                continue
            shape = (fan_in[name], n_neurons)
            mask = masks.get(name)
            per_neuron = fan_in[name] if mask is None else max(int(mask.sum(0).max()), 1)
            k = 1.0 / np.sqrt(per_neuron)
            w = rng.uniform(-k, k, size=shape)
            if mask is not None:
                w = w * mask
            weights[name] = w
        return cls(n_neurons, weights, masks, params, frozenset(fixed))

    @property
    def lateral(self) -> bool:
        return "L" in self.weights

    def aggregate(self, inputs: Mapping[str, np.ndarray | None]):
        """Per-class aggregates, each ``(batch, n_neurons)``; missing input -> 0."""
        out = {}
        batch = next(np.shape(x)[0] for x in inputs.values() if x is not None)
        for name in CLASSES:
            x = inputs.get(name)
            if name not in self.weights or x is None:
                out[name] = np.zeros((batch, self.n_neurons))
            else:
                out[name] = np.asarray(x, dtype=float) @ self.weights[name]
        return out

    def forward(self, inputs, rng=None, sample=True):
        agg = self.aggregate(inputs)
        act = activation(agg["F"], agg["C"], agg["L"], self.params, self.lateral)
        p, states = fire(act, rng, sample)
        return agg, p, states

    def neuron(self, j: int) -> NeuronState:
        def col(name):
            if name not in self.weights:
                return None
            w = self.weights[name][:, j]
            mask = self.masks.get(name)
            return w[mask[:, j]] if mask is not None else w.copy()

        return NeuronState(col("F"), col("C"), col("L"), self.params)

    def copy(self) -> "Layer":
        return Layer(self.n_neurons, {k: v.copy() for k, v in self.weights.items()},
                     {k: v.copy() for k, v in self.masks.items()}, self.params, self.frozen)
