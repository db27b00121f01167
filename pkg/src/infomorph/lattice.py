"""Antichain lattices and the shared-exclusion partial information decomposition.

Sources are indexed ``0 = F`` (feedforward), ``1 = C`` (context) and
``2 = L`` (lateral).  An atom is addressed by an antichain: a collection of
non-empty source subsets none of which contains another.

Canonical atom order (stable across runs and serializations)::

    key(alpha) = (largest inner-set size, number of inner sets,
                  inner-set sizes, inner-set indices)

which gives for two sources ``{F} {C} {F}{C} {FC}`` and for three sources::

    {F} {C} {L} {F}{C} {F}{L} {C}{L} {F}{C}{L}
    {FC} {FL} {CL} {F}{CL} {C}{FL} {L}{FC} {FC}{FL} {FC}{CL} {FL}{CL}
    {FC}{FL}{CL} {FCL}

Atom vectors carry one extra trailing entry, the residual entropy
``H(Y | all sources)``.  All quantities are in bits.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

SOURCE_NAMES = "FCL"
SCHEMA_VERSION = 1
_EPS = 1e-12
_LN2 = np.log(2.0)


@dataclass(frozen=True)
class Antichain:
    """Collection of pairwise incomparable, non-empty source-index sets."""

    sets: tuple[frozenset[int], ...]

    def __post_init__(self):
        sets = tuple(frozenset(a) for a in self.sets)
        if not sets or any(not a for a in sets):
            raise ValueError("antichain needs at least one non-empty inner set")
        for a, b in combinations(sets, 2):
            if a <= b or b <= a:
                raise ValueError(f"inner sets {set(a)} and {set(b)} are comparable")
        if any(i < 0 for a in sets for i in a):
            raise ValueError("source indices must be non-negative")
        object.__setattr__(self, "sets", tuple(sorted(sets, key=lambda s: (len(s), sorted(s)))))

    @property
    def max_index(self) -> int:
        return max(max(a) for a in self.sets)

    def sort_key(self):
        return (
            max(len(a) for a in self.sets),
            len(self.sets),
            tuple(len(a) for a in self.sets),
            tuple(tuple(sorted(a)) for a in self.sets),
        )

    @property
    def label(self) -> str:
        return "".join("{" + "".join(SOURCE_NAMES[i] for i in sorted(a)) + "}" for a in self.sets)

    @classmethod
    def from_label(cls, label: str) -> "Antichain":
        """Parse labels like ``"{F}{CL}"`` (commas and spaces are ignored)."""
        text = label.replace(",", "").replace(" ", "")
        if not (text.startswith("{") and text.endswith("}")):
            raise ValueError(f"malformed antichain label {label!r}")
        sets = []
        for chunk in text[1:-1].split("}{"):
            try:
                sets.append(frozenset(SOURCE_NAMES.index(ch) for ch in chunk))
            except ValueError:
                raise ValueError(f"unknown source in antichain label {label!r}") from None
        return cls(tuple(sets))

    def __str__(self):
        return self.label


def precedes(beta: Antichain, alpha: Antichain) -> bool:
    """Redundancy-lattice order: ``beta <= alpha`` iff every inner set of
    ``alpha`` contains some inner set of ``beta``."""
    return all(any(b <= a for b in beta.sets) for a in alpha.sets)


def _enumerate_antichains(n_sources: int) -> list[Antichain]:
    subsets = [frozenset(c) for r in range(1, n_sources + 1) for c in combinations(range(n_sources), r)]
    found = []
    for r in range(1, len(subsets) + 1):
        for combo in combinations(subsets, r):
            if all(not (a <= b or b <= a) for a, b in combinations(combo, 2)):
                found.append(Antichain(combo))
    return sorted(found, key=Antichain.sort_key)


def _integer_inverse_unitriangular(zeta: np.ndarray) -> np.ndarray:
    """Exact inverse of a unit lower-triangular integer matrix."""
    n = zeta.shape[0]
    z = [[int(v) for v in row] for row in zeta]
    inv = [[0] * n for _ in range(n)]
    for col in range(n):
        for row in range(n):
            acc = 1 if row == col else 0
            for k in range(row):
                acc -= z[row][k] * inv[k][col]
            inv[row][col] = acc  # diagonal of zeta is 1
    return np.array(inv, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class PidLattice:
    """Immutable redundancy lattice for 2 or 3 sources.

    ``order[b, a]`` is True iff antichain ``b`` precedes antichain ``a``;
    ``zeta[a, b] = order[b, a]`` maps atoms to redundancies and
    ``mobius`` is its exact integer inverse.
    """

    n_sources: int
    antichains: tuple[Antichain, ...]
    order: np.ndarray = field(repr=False)
    zeta: np.ndarray = field(repr=False)
    mobius: np.ndarray = field(repr=False)
    inversion_matrix: np.ndarray = field(repr=False)
    # ((subset, ...), (sign, ...)) per antichain: inclusion-exclusion terms of the
    # disjunction event, each conjunction expressed as a source subset bitmask.
    terms: tuple = field(repr=False)

    @property
    def n_atoms(self) -> int:
        return len(self.antichains)

    @property
    def labels(self) -> list[str]:
        return [a.label for a in self.antichains]

    def index(self, alpha: Antichain | str) -> int:
        if isinstance(alpha, str):
            alpha = Antichain.from_label(alpha)
        try:
            return self.antichains.index(alpha)
        except ValueError:
            raise KeyError(f"{alpha} is not in the {self.n_sources}-source lattice") from None

    def single(self, sources: Iterable[int]) -> int:
        """Index of the antichain with the single inner set ``sources``."""
        return self.index(Antichain((frozenset(sources),)))


@lru_cache(maxsize=None)
def build_lattice(n_sources: int) -> PidLattice:
    if n_sources not in (2, 3):
        raise ValueError(f"only 2 or 3 sources are supported, got {n_sources}")
    chains = _enumerate_antichains(n_sources)
    n = len(chains)
    order = np.array([[precedes(b, a) for a in chains] for b in chains], dtype=bool)
    zeta = order.T.astype(np.int64)
    # canonical order is not a linear extension; solve in a topological order
    topo = sorted(range(n), key=lambda i: order[:, i].sum())
    perm = np.array(topo)
    mob_perm = _integer_inverse_unitriangular(zeta[np.ix_(perm, perm)])
    mobius = np.empty_like(mob_perm)
    mobius[np.ix_(perm, perm)] = mob_perm
    if not np.array_equal(mobius @ zeta, np.eye(n, dtype=np.int64)):
        raise AssertionError("Moebius inversion failed")
    terms = []
    for alpha in chains:
        masks, signs = [], []
        for r in range(1, len(alpha.sets) + 1):
            for combo in combinations(alpha.sets, r):
                masks.append(sum(1 << i for i in frozenset().union(*combo)))
                signs.append(1 if r % 2 else -1)
        terms.append((tuple(masks), tuple(signs)))
    for arr in (order, zeta, mobius):
        arr.setflags(write=False)
    inv = mobius.astype(float)
    inv.setflags(write=False)
    return PidLattice(n_sources, tuple(chains), order, zeta, mobius, inv, tuple(terms))


# --------------------------------------------------------------------------
# joint distributions


@dataclass
class JointDistribution:
    """Sparse pmf ``p(y, s_1..s_n)`` for a binary target ``y in {+1, -1}``.

    Each row of ``cells`` holds the bin indices of one source cell;
    ``source_mass`` is ``p(s)`` and ``conditional`` is ``p(y=+1 | s)``.
    Rows may repeat (per-sample pseudo-cells); every computation here groups
    by value so the result is the same as for the merged cells.
    """

    cells: np.ndarray
    source_mass: np.ndarray
    conditional: np.ndarray
    alphabet_sizes: tuple[int, ...]

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int64)
        if self.cells.ndim != 2:
            raise ValueError("cells must be a (n_cells, n_sources) array")
        self.source_mass = np.asarray(self.source_mass, dtype=float)
        self.conditional = np.asarray(self.conditional, dtype=float)
        self.alphabet_sizes = tuple(int(a) for a in self.alphabet_sizes)
        if len(self.alphabet_sizes) != self.cells.shape[1]:
            raise ValueError("one alphabet size per source required")

    @property
    def n_sources(self) -> int:
        return self.cells.shape[1]

    @property
    def mass(self) -> np.ndarray:
        """Joint masses as an ``(n_cells, 2)`` array, columns ``y=+1, y=-1``."""
        return np.stack([self.source_mass * self.conditional, self.source_mass * (1 - self.conditional)], axis=1)

    def dense(self) -> np.ndarray:
        """Dense array ``p[y, s_1, ..., s_n]`` with ``y`` index 0 for +1."""
        out = np.zeros((2,) + self.alphabet_sizes)
        m = self.mass
        idx = tuple(self.cells.T)
        np.add.at(out[0], idx, m[:, 0])
        np.add.at(out[1], idx, m[:, 1])
        return out

    @classmethod
    def from_dense(cls, p: np.ndarray) -> "JointDistribution":
        """Build from a dense ``p[y, s_1, ..., s_n]`` array (y index 0 is +1)."""
        p = np.asarray(p, dtype=float)
        src = p.sum(axis=0)
        cells = np.argwhere(src > 0)
        ps = src[tuple(cells.T)]
        cond = p[0][tuple(cells.T)] / ps
        return cls(cells, ps, cond, p.shape[1:])


def _group_codes(cells: np.ndarray, alphabet_sizes: Sequence[int], mask: int) -> np.ndarray:
    """Mixed-radix code of the sources selected by ``mask`` for each row."""
    code = np.zeros(cells.shape[:-1], dtype=np.int64)
    for i, size in enumerate(alphabet_sizes):
        if mask >> i & 1:
            code = code * size + cells[..., i]
    return code


def _group_sizes(alphabet_sizes: Sequence[int], mask: int) -> int:
    out = 1
    for i, size in enumerate(alphabet_sizes):
        if mask >> i & 1:
            out *= size
    return out


class _Grouper:
    """Group sums over rows sharing a source-subset value, vectorised over
    independent joints (leading axis)."""

    def __init__(self, cells: np.ndarray, alphabet_sizes: Sequence[int], mask: int):
        n_joint, n_rows = cells.shape[:2]
        local = _group_codes(cells, alphabet_sizes, mask)
        space = _group_sizes(alphabet_sizes, mask)
        codes = local + space * np.arange(n_joint)[:, None]
        if n_joint * space > 8 * codes.size:
            _, codes = np.unique(codes, return_inverse=True)
            codes = codes.reshape(n_joint, n_rows)
            space_total = int(codes.max()) + 1
        else:
            space_total = n_joint * space
        self.codes = codes.ravel()
        self.size = space_total
        self.shape = (n_joint, n_rows)

    def sum(self, values: np.ndarray) -> np.ndarray:
        """For every row, the sum of ``values`` over rows in the same group."""
        totals = np.bincount(self.codes, weights=values.ravel(), minlength=self.size)
        return totals[self.codes].reshape(self.shape)


def isx_kernel(
    cells: np.ndarray,
    source_mass: np.ndarray,
    conditional: np.ndarray,
    alphabet_sizes: Sequence[int],
    lattice: PidLattice,
    coef: np.ndarray | None = None,
    coef_hres: np.ndarray | None = None,
):
    """Shared-exclusion redundancies for a stack of joints.

    ``cells`` is ``(J, K, n)``, ``source_mass`` and ``conditional`` are
    ``(J, K)``.  Returns ``(redundancies (J, n_atoms), h_res (J,), grad)``
    where ``grad`` is ``d/d conditional`` of
    ``sum_a coef[:, a] * I_a + coef_hres * H_res`` (``None`` when no
    coefficients are given).  Source masses are treated as constants.
    """
    n_joint, n_rows = cells.shape[:2]
    w_pos = source_mass * conditional
    w_neg = source_mass - w_pos
    groupers = {}
    marg_pos, marg_neg = {}, {}
    for alpha_terms in lattice.terms:
        for mask in alpha_terms[0]:
            if mask not in groupers:
                g = _Grouper(cells, alphabet_sizes, mask)
                groupers[mask] = g
                marg_pos[mask] = g.sum(w_pos)
                marg_neg[mask] = g.sum(w_neg)
    p_pos = w_pos.sum(axis=1, keepdims=True)
    p_neg = w_neg.sum(axis=1, keepdims=True)
    log_py_pos = np.log2(np.maximum(p_pos, _EPS))
    log_py_neg = np.log2(np.maximum(p_neg, _EPS))

    want_grad = coef is not None or coef_hres is not None
    if coef is None:
        coef = np.zeros((n_joint, lattice.n_atoms))
    if coef_hres is None:
        coef_hres = np.zeros(n_joint)
    coef = np.broadcast_to(coef, (n_joint, lattice.n_atoms))
    coef_hres = np.broadcast_to(coef_hres, (n_joint,))
    full = lattice.single(range(lattice.n_sources))
    # H_res = H(Y) - I_{full}; fold its I part into the redundancy coefficients
    eff = coef.copy()
    eff[:, full] -= coef_hres

    red = np.empty((n_joint, lattice.n_atoms))
    grad = np.zeros((n_joint, n_rows)) if want_grad else None
    back_pos = {m: np.zeros((n_joint, n_rows)) for m in groupers} if want_grad else None
    back_neg = {m: np.zeros((n_joint, n_rows)) for m in groupers} if want_grad else None
    for a, (masks, signs) in enumerate(lattice.terms):
        ev_pos = sum(s * marg_pos[m] for m, s in zip(masks, signs))
        ev_neg = sum(s * marg_neg[m] for m, s in zip(masks, signs))
        ev = ev_pos + ev_neg
        log_ev = np.log2(np.maximum(ev, _EPS))
        l_pos = np.log2(np.maximum(ev_pos, _EPS)) - log_ev - log_py_pos
        l_neg = np.log2(np.maximum(ev_neg, _EPS)) - log_ev - log_py_neg
        # zero-mass terms contribute exactly 0
        red[:, a] = np.where(w_pos > 0, w_pos * l_pos, 0.0).sum(1) + np.where(w_neg > 0, w_neg * l_neg, 0.0).sum(1)
        if want_grad:
            c = eff[:, a][:, None]
            if not np.any(c):
                continue
            grad += c * (l_pos - l_neg)
            r_pos = c * np.where(w_pos > 0, w_pos / np.maximum(ev_pos, _EPS), 0.0)
            r_neg = c * np.where(w_neg > 0, w_neg / np.maximum(ev_neg, _EPS), 0.0)
            for m, s in zip(masks, signs):
                back_pos[m] += s * r_pos
                back_neg[m] += s * r_neg

    h_y = -(p_pos * log_py_pos + p_neg * log_py_neg)[:, 0]
    h_res = h_y - red[:, full]
    if want_grad:
        for m, g in groupers.items():
            grad += (g.sum(back_pos[m]) - g.sum(back_neg[m])) / _LN2
        grad += coef_hres[:, None] * (log_py_neg - log_py_pos)
        grad *= source_mass
    return red, h_res, grad


def _as_stack(joint: JointDistribution):
    return joint.cells[None], joint.source_mass[None], joint.conditional[None]


def isx_redundancy(joint: JointDistribution, alpha: Antichain | str) -> float:
    """Shared-exclusion redundancy ``I_sx(Y : alpha)`` in bits."""
    lattice = build_lattice(joint.n_sources)
    a = lattice.index(alpha)
    masks, signs = lattice.terms[a]
    red = _single_redundancy(*_as_stack(joint), joint.alphabet_sizes, masks, signs)
    return float(red[0])


def _single_redundancy(cells, mass, cond, alphabet_sizes, masks, signs):
    w_pos = mass * cond
    w_neg = mass - w_pos
    ev_pos = 0.0
    ev_neg = 0.0
    for m, s in zip(masks, signs):
        g = _Grouper(cells, alphabet_sizes, m)
        ev_pos = ev_pos + s * g.sum(w_pos)
        ev_neg = ev_neg + s * g.sum(w_neg)
    ev = ev_pos + ev_neg
    p_pos = w_pos.sum(1, keepdims=True)
    p_neg = w_neg.sum(1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_pos = np.where(w_pos > 0, w_pos * np.log2(ev_pos / (ev * p_pos)), 0.0)
        t_neg = np.where(w_neg > 0, w_neg * np.log2(ev_neg / (ev * p_neg)), 0.0)
    return t_pos.sum(1) + t_neg.sum(1)


def isx_redundancies(joint: JointDistribution, lattice: PidLattice | None = None) -> np.ndarray:
    lattice = lattice or build_lattice(joint.n_sources)
    red, _, _ = isx_kernel(*_as_stack(joint), joint.alphabet_sizes, lattice)
    return red[0]


def atoms_from_redundancies(redundancies, lattice: PidLattice, h_res: float = 0.0) -> np.ndarray:
    redundancies = np.asarray(redundancies, dtype=float)
    if redundancies.shape[-1] != lattice.n_atoms:
        raise ValueError(f"expected {lattice.n_atoms} redundancies, got {redundancies.shape[-1]}")
    atoms = redundancies @ lattice.inversion_matrix.T
    h_res = np.broadcast_to(np.asarray(h_res, dtype=float), atoms.shape[:-1])
    return np.concatenate([atoms, h_res[..., None]], axis=-1)


def decompose(joint: JointDistribution) -> np.ndarray:
    """Atom vector (atoms in canonical order, then ``H_res``) of ``joint``."""
    lattice = build_lattice(joint.n_sources)
    red, h_res, _ = isx_kernel(*_as_stack(joint), joint.alphabet_sizes, lattice)
    return atoms_from_redundancies(red[0], lattice, h_res[0])


def mutual_information(joint: JointDistribution, sources: Iterable[int]) -> float:
    """Classical ``I(Y : S_sources)`` computed from the dense joint, in bits."""
    sources = sorted(set(sources))
    p = joint.dense()
    drop = tuple(i + 1 for i in range(joint.n_sources) if i not in sources)
    p_ys = p.sum(axis=drop) if drop else p
    p_s = p_ys.sum(axis=0, keepdims=True)
    p_y = p_ys.sum(axis=tuple(range(1, p_ys.ndim)), keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p_ys > 0, p_ys * np.log2(p_ys / (p_s * p_y)), 0.0)
    return float(terms.sum())


def consistency_residuals(atoms, joint: JointDistribution) -> np.ndarray:
    """Classical MI minus summed atoms, for every non-empty source subset.

    Subsets are ordered by size then index (``F, C, L, FC, FL, CL, FCL``).
    """
    lattice = build_lattice(joint.n_sources)
    atoms = np.asarray(atoms, dtype=float)
    out = []
    for r in range(1, lattice.n_sources + 1):
        for subset in combinations(range(lattice.n_sources), r):
            row = lattice.zeta[lattice.single(subset)]
            out.append(mutual_information(joint, subset) - row @ atoms[: lattice.n_atoms])
    return np.array(out)


def goal_value(atoms, gamma) -> float:
    atoms = np.asarray(atoms, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if atoms.shape[-1] != gamma.shape[-1]:
        raise ValueError(f"goal length {gamma.shape[-1]} does not match atom vector length {atoms.shape[-1]}")
    return atoms @ gamma


def goal_and_gradient(joint: JointDistribution, gamma) -> tuple[float, np.ndarray]:
    """Goal value and its derivative with respect to ``joint.conditional``."""
    lattice = build_lattice(joint.n_sources)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (lattice.n_atoms + 1,):
        raise ValueError(f"goal must have {lattice.n_atoms + 1} entries")
    coef = lattice.inversion_matrix.T @ gamma[:-1]
    red, h_res, grad = isx_kernel(*_as_stack(joint), joint.alphabet_sizes, lattice, coef[None], gamma[-1:])
    atoms = atoms_from_redundancies(red[0], lattice, h_res[0])
    return float(atoms @ gamma), grad[0]


# --------------------------------------------------------------------------
# goal vectors


def goal_vector(weights: Mapping[str, float], n_sources: int = 3, residual: float = 0.0) -> np.ndarray:
    """Goal vector from ``{antichain label: weight}``; ``"res"`` names H_res."""
    lattice = build_lattice(n_sources)
    gamma = np.zeros(lattice.n_atoms + 1)
    gamma[-1] = residual
    for label, value in weights.items():
        if label in ("res", "H_res"):
            gamma[-1] = value
        else:
            gamma[lattice.index(label)] = value
    return gamma


HEURISTIC_GOAL = {"{F}{C}": 1.0}
OPTIMIZED_GOAL = {"{F}{C}": 0.98, "{F}{L}": -0.99, "{F}{C}{L}": 0.33, "{FC}{FL}": -0.97}
OUTPUT_GOAL = (-0.2, 0.1, 1.0, 0.1, 0.0)


def vector_to_json(values, n_sources: int, kind: str = "goal") -> str:
    lattice = build_lattice(n_sources)
    values = [float(v) for v in values]
    if len(values) != lattice.n_atoms + 1:
        raise ValueError(f"expected {lattice.n_atoms + 1} values, got {len(values)}")
    return json.dumps({
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "n_sources": n_sources,
        "labels": lattice.labels + ["res"],
        "values": values,
    })


def vector_from_json(text: str) -> tuple[np.ndarray, int]:
    data = json.loads(text)
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {data.get('schema_version')!r}")
    n_sources = int(data["n_sources"])
    lattice = build_lattice(n_sources)
    if data.get("labels", lattice.labels + ["res"]) != lattice.labels + ["res"]:
        raise ValueError("atom labels are not in canonical order")
    values = np.asarray(data["values"], dtype=float)
    if values.shape != (lattice.n_atoms + 1,):
        raise ValueError("wrong number of values")
    return values, n_sources
