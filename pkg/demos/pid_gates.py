"""
Redundancy, uniqueness and synergy on logic gates
==================================================

Decompose the information two binary inputs carry about a gate's output,
then look at one three-source example.
"""
import numpy as np

from infomorph.lattice import JointDistribution, build_lattice, decompose, mutual_information

# a joint pmf p(y, s1, s2) with uniform inputs and a deterministic output
def gate(fn):
    p = np.zeros((2, 2, 2))
    for a in (0, 1):
        for b in (0, 1):
            p[fn(a, b), a, b] = 0.25
    return p

gates = {
    "XOR": lambda a, b: a ^ b,
    "AND": lambda a, b: a & b,
    "COPY": lambda a, b: a,
}
lattice = build_lattice(2)
print("gate  " + "  ".join(f"{lab:>8}" for lab in lattice.labels) + "   I(Y;S)")
for name, fn in gates.items():
    joint = JointDistribution.from_dense(gate(fn))
    atoms = decompose(joint)
    total = mutual_information(joint, range(joint.n_sources))
    print(f"{name:5} " + "  ".join(f"{a:8.4f}" for a in atoms[:-1]) + f"   {total:.4f}")

# The atoms add up to the joint mutual information; the last entry of the
# atom vector is the residual entropy H(Y | S1, S2), zero for these gates.
# Shared-exclusion redundancy can be negative: XOR has misinformative
# redundancy balanced by positive unique atoms, not the "pure synergy" of
# other measures.

# Three sources: y copies F, while C and L are noisy copies of F
p = np.zeros((2, 2, 2, 2))
for f in (0, 1):
    for c in (0, 1):
        for l in (0, 1):
            p[f, f, c, l] = 0.125 * (1 + 0.5 * (c == f)) * (1 + 0.5 * (l == f))
p /= p.sum()
atoms = decompose(JointDistribution.from_dense(p))
for lab, a in zip(build_lattice(3).labels, atoms):
    if abs(a) > 1e-9:
        print(f"{lab:14} {a:+.4f}")
