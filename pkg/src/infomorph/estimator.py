"""Binning and plug-in estimation of neuron joint distributions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattice import JointDistribution, build_lattice, isx_kernel


@dataclass(frozen=True)
class BinningSpec:
    """Equal-width binning, either over a fixed range or the batch range.

    ``lo``/``hi`` of ``None`` selects adaptive mode.
    """

    n_bins: int = 20
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValueError("n_bins must be at least 2")
        if (self.lo is None) != (self.hi is None):
            raise ValueError("fixed binning needs both lo and hi")
        if self.lo is not None and not self.lo < self.hi:
            raise ValueError("fixed binning needs lo < hi")

    @property
    def adaptive(self) -> bool:
        return self.lo is None

    @classmethod
    def fixed(cls, lo: float, hi: float, n_bins: int = 20) -> "BinningSpec":
        return cls(n_bins, lo, hi)

    @classmethod
    def parse(cls, text: str, n_bins: int = 20) -> "BinningSpec":
        """``"adaptive"`` or ``"lo,hi"``."""
        text = text.strip()
        if text == "adaptive":
            return cls(n_bins)
        lo, hi = (float(v) for v in text.strip("()").split(","))
        return cls(n_bins, lo, hi)

    def __str__(self):
        return "adaptive" if self.adaptive else f"{self.lo:g},{self.hi:g}"


def bin_values(values, spec: BinningSpec, axis: int = 0) -> np.ndarray:
    """Equal-width bin indices in ``[0, n_bins)``.

    Out-of-range values clamp to the edge bins.  In adaptive mode the range
    is the min/max along ``axis`` (each column of a 2-d array is binned
    independently when ``axis=0``); a constant input maps to bin 0.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot bin an empty array")
    if np.isnan(values).any():
        raise ValueError("NaN in values to be binned")
    if spec.adaptive:
        lo = values.min(axis=axis, keepdims=True)
        hi = values.max(axis=axis, keepdims=True)
    else:
        lo, hi = spec.lo, spec.hi
    width = np.asarray(hi - lo, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(width > 0, (values - lo) / np.where(width > 0, width, 1.0), 0.0)
    idx = np.floor(scaled * spec.n_bins)
    return np.clip(idx, 0, spec.n_bins - 1).astype(np.int64)


def estimate_joint(sources: Sequence[np.ndarray], firing_prob, specs: Sequence[BinningSpec]) -> JointDistribution:
    """Plug-in joint of a neuron's output and its binned aggregated inputs.

    ``sources`` holds one length-B vector per input class and
    ``firing_prob`` the per-sample ``p(y=+1)``.  Cells are merged over the
    observed bin tuples only; ``p(y=+1 | cell)`` is the mean firing
    probability of the samples in the cell.
    """
    if len(sources) != len(specs):
        raise ValueError("one binning spec per source required")
    q = np.asarray(firing_prob, dtype=float)
    if q.ndim != 1 or q.size < 1:
        raise ValueError("need a non-empty vector of firing probabilities")
    bins = np.stack([bin_values(s, spec) for s, spec in zip(sources, specs)], axis=1)
    cells, inverse, counts = np.unique(bins, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    cond = np.bincount(inverse, weights=q, minlength=len(cells)) / counts
    return JointDistribution(cells, counts / q.size, cond, tuple(s.n_bins for s in specs))


def sample_joint(bins: np.ndarray, firing_prob, n_bins: Sequence[int]) -> JointDistribution:
    """Per-sample pseudo-cell joint (no merging); same PID as ``estimate_joint``
    and gradients land directly on the per-sample firing probabilities."""
    q = np.asarray(firing_prob, dtype=float)
    return JointDistribution(bins, np.full(q.size, 1.0 / q.size), q, tuple(n_bins))


def residual_entropy(joint: JointDistribution) -> float:
    """``H(Y | all sources)`` in bits."""
    _, h_res, _ = isx_kernel(joint.cells[None], joint.source_mass[None], joint.conditional[None],
                             joint.alphabet_sizes, build_lattice(joint.n_sources))
    return float(h_res[0])
