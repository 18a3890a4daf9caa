"""Building local Hamiltonians and querying the exact small-system oracles.

The XX chain with a transverse field is the running example: two-site
couplings J_i (X X + Y Y) plus one-site fields B_i Z.  Every term is a
dense Hermitian matrix on its few-qubit support; the full 2^n operator
only ever exists inside the exact-diagonalization oracle.
"""

import numpy as np

from certbound import build_xx, build_zz_graph, exact_ground_energy, term_min_eigenvalue

# a homogeneous periodic chain of six spins
h = build_xx(6, J=1.0, B=1.0, periodic=True)
print(f"n = {h.n}, terms = {h.m}")
for t in h.terms[:3]:
    print("  support", t.support, "min eigenvalue", term_min_eigenvalue(t))

# note: the coupling term J(XX + YY) has spectrum {-2J, 0, 0, 2J}; its
# minimal eigenvalue is -2J, which is what the trivial relaxation uses
xx_term = h.terms[0]
print("coupling spectrum:", np.round(np.linalg.eigvalsh(xx_term.matrix), 10))

print("exact E0:", exact_ground_energy(h))

# with the couplings off, the ground state is a product state and the
# energy is just the sum of the field minima
h_free = build_xx(6, J=0.0, B=[1.0, -0.5, 2.0, 1.0, 0.3, 0.7])
print("J=0 chain:", exact_ground_energy(h_free), "= -sum |B_i| =",
      -sum(abs(b) for b in [1.0, -0.5, 2.0, 1.0, 0.3, 0.7]))

# the frustrated triangle: three ZZ couplings that cannot all be satisfied
tri = build_zz_graph(3, [(0, 1), (1, 2), (0, 2)])
print("triangle E0:", exact_ground_energy(tri), "(classical brute force gives -1)")

# an inhomogeneous chain: J_i = i mod 3 disconnects every third bond,
# leaving isolated interacting triplets -- the benchmark model
h_triplets = build_xx(6, J=[i % 3 for i in range(6)], B=1.0)
bonds = sorted(t.support for t in h_triplets.terms if len(t.support) == 2)
print("active bonds for J_i = i mod 3:", bonds)
print("E0:", exact_ground_energy(h_triplets))
