"""Local Hamiltonians as weighted Pauli strings, plus exact small-system oracles.

A ``LocalHamiltonian`` is a plain sum of ``LocalTerm`` objects whose
supports may overlap.  Terms are kept as dense Hermitian matrices on
their (few-qubit) supports; the full 2^n operator is only ever formed
inside :func:`exact_ground_energy`, via sparse Kronecker embedding.

Note on the XX coupling: the minimal eigenvalue of the two-site coupling
J (XX + YY) is -2J for J > 0 (direct eigendecomposition of the 4x4
matrix; the spectrum is {-2J, 0, 0, 2J}).  Discussions of this model
sometimes quote -J for that quantity; this package always uses the
eigendecomposition value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg

from .pauli import PAULI, embed_into, is_hermitian, kron_all

MAX_TERM_QUBITS = 4
MAX_ORACLE_QUBITS = 12


@dataclass(frozen=True)
class PauliString:
    """A weighted Pauli string, e.g. 1.5 * X_0 Z_3.

    ``site_ops`` maps qubit index to one of "X", "Y", "Z"; identity
    sites are simply absent.
    """

    site_ops: dict
    coefficient: float

    def __post_init__(self):
        if not np.isfinite(self.coefficient):
            raise ValueError("coefficient must be finite")
        for q, op in self.site_ops.items():
            if q < 0:
                raise ValueError(f"negative qubit index {q}")
            if op not in ("X", "Y", "Z"):
                raise ValueError(f"invalid Pauli label {op!r}")

    @property
    def support(self) -> tuple:
        return tuple(sorted(self.site_ops))

    def matrix(self, block=None) -> np.ndarray:
        """Dense matrix on ``block`` (defaults to the string's support)."""
        block = self.support if block is None else tuple(block)
        labels = [self.site_ops.get(q, "I") for q in block]
        return self.coefficient * kron_all(PAULI[l] for l in labels)


@dataclass(frozen=True)
class LocalTerm:
    """One Hamiltonian term: a Hermitian matrix on a small sorted support."""

    support: tuple
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        support = tuple(sorted(self.support))
        object.__setattr__(self, "support", support)
        if len(support) != len(set(support)):
            raise ValueError("repeated sites in support")
        if len(support) > MAX_TERM_QUBITS:
            raise ValueError(f"term support {support} exceeds {MAX_TERM_QUBITS} qubits")
        d = 2 ** len(support)
        if self.matrix.shape != (d, d):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match support {support}")
        if not is_hermitian(self.matrix, 1e-12):
            raise ValueError("term matrix is not Hermitian to 1e-12")

    @property
    def k(self) -> int:
        return len(self.support)


@dataclass(frozen=True)
class LocalHamiltonian:
    """Sum of local terms on n qubits; supports may overlap."""

    n: int
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.n < 1:
            raise ValueError("n must be positive")
        for t in self.terms:
            if t.support and (t.support[0] < 0 or t.support[-1] >= self.n):
                raise ValueError(f"term support {t.support} outside [0, {self.n})")

    @property
    def m(self) -> int:
        return len(self.terms)


def from_pauli_strings(n: int, strings, group_by_support: bool = True) -> LocalHamiltonian:
    """Assemble a Hamiltonian from PauliString objects.

    Strings sharing the exact same support are summed into a single
    LocalTerm when ``group_by_support`` is set (this changes the trivial
    relaxation, which falls back on per-term minimal eigenvalues).
    """
    groups = {}
    order = []
    for s in strings:
        key = s.support if group_by_support else (s.support, id(s))
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(s)
    terms = []
    for key in order:
        members = groups[key]
        supp = members[0].support
        mat = sum(s.matrix(supp) for s in members)
        terms.append(LocalTerm(supp, mat))
    return LocalHamiltonian(n, tuple(terms))


def _as_list(x, n: int, name: str):
    if np.isscalar(x):
        return [float(x)] * n
    x = [float(v) for v in x]
    if len(x) != n:
        raise ValueError(f"{name} has length {len(x)}, expected {n}")
    return x


def build_xx(n: int, J, B, periodic: bool = True) -> LocalHamiltonian:
    """XX chain with transverse field:

        H = sum_i J_i (X_i X_{i+1} + Y_i Y_{i+1}) + sum_i B_i Z_i

    with the site index taken mod n when ``periodic``.  Couplings and
    fields may be scalars or length-n lists; zero-coefficient terms are
    dropped.  Coupling and field terms are kept as separate LocalTerms.
    """
    if n < 2:
        raise ValueError("need at least two sites")
    J = _as_list(J, n, "J")
    B = _as_list(B, n, "B")
    terms = []
    bonds = range(n) if periodic else range(n - 1)
    for i in bonds:
        if J[i] == 0.0:
            continue
        a, b = sorted((i, (i + 1) % n))
        xx = np.kron(PAULI["X"], PAULI["X"])
        yy = np.kron(PAULI["Y"], PAULI["Y"])
        terms.append(LocalTerm((a, b), J[i] * (xx + yy)))
    for i in range(n):
        if B[i] == 0.0:
            continue
        terms.append(LocalTerm((i,), B[i] * PAULI["Z"]))
    return LocalHamiltonian(n, tuple(terms))


def build_zz_graph(n: int, edges, weights=None) -> LocalHamiltonian:
    """Ising-type H = sum_{(i,j) in edges} w_ij Z_i Z_j."""
    edges = [tuple(sorted(e)) for e in edges]
    if weights is None:
        weights = [1.0] * len(edges)
    zz = np.kron(PAULI["Z"], PAULI["Z"])
    terms = []
    for (i, j), w in zip(edges, weights):
        if i == j:
            raise ValueError(f"self-edge ({i},{j})")
        if w == 0.0:
            continue
        terms.append(LocalTerm((i, j), float(w) * zz))
    return LocalHamiltonian(n, tuple(terms))


def term_min_eigenvalue(t: LocalTerm) -> float:
    """Smallest eigenvalue of a term, by dense eigendecomposition."""
    if t.k > MAX_TERM_QUBITS:
        raise ValueError(f"support of size {t.k} too large for dense eigendecomposition")
    if t.k == 0:
        return 0.0
    return float(np.linalg.eigvalsh(t.matrix)[0])


def _sparse_embed(mat: np.ndarray, support, n: int) -> sp.coo_matrix:
    """Embed a dense operator on ``support`` into the full 2^n space, sparse."""
    support = tuple(support)
    k = len(support)
    rest = [q for q in range(n) if q not in support]
    # bit-scatter tables: value at sub-index i -> global index contribution
    supp_scatter = np.zeros(2**k, dtype=np.int64)
    for i in range(2**k):
        for p, q in enumerate(support):
            if (i >> (k - 1 - p)) & 1:
                supp_scatter[i] |= 1 << (n - 1 - q)
    rest_scatter = np.zeros(2 ** len(rest), dtype=np.int64)
    for r in range(2 ** len(rest)):
        for p, q in enumerate(rest):
            if (r >> (len(rest) - 1 - p)) & 1:
                rest_scatter[r] |= 1 << (n - 1 - q)
    ii, jj = np.nonzero(mat)
    vals = np.tile(mat[ii, jj], rest_scatter.size)
    rows = (supp_scatter[ii][None, :] + rest_scatter[:, None]).ravel()
    cols = (supp_scatter[jj][None, :] + rest_scatter[:, None]).ravel()
    return sp.coo_matrix((vals, (rows, cols)), shape=(2**n, 2**n))


def assemble_full(h: LocalHamiltonian) -> sp.csr_matrix:
    """Full 2^n sparse matrix of the Hamiltonian (oracle use only)."""
    if h.n > MAX_ORACLE_QUBITS:
        raise ValueError(f"n={h.n} too large for the dense oracle (max {MAX_ORACLE_QUBITS})")
    acc = sp.coo_matrix((2**h.n, 2**h.n), dtype=complex)
    for t in h.terms:
        acc = acc + _sparse_embed(t.matrix, t.support, h.n)
    return acc.tocsr()


def exact_ground_energy(h: LocalHamiltonian) -> float:
    """Exact E0 by dense Hermitian eigendecomposition of the 2^n matrix."""
    full = assemble_full(h).toarray()
    if np.max(np.abs(full.imag)) < 1e-14:
        full = full.real  # XX and ZZ models are real symmetric
    return float(np.linalg.eigvalsh(full)[0])


# -- structured text configuration ------------------------------------------

def hamiltonian_from_config(cfg: dict) -> LocalHamiltonian:
    """Build a Hamiltonian from a config mapping.

    Recognised forms::

        {"model": "xx", "n": 6, "J": 1.0, "B": [..], "periodic": true}
        {"model": "zz_graph", "n": 3, "edges": [[0,1],[1,2],[0,2]], "weights": [..]}
        {"model": "custom", "n": 4,
         "strings": [{"ops": {"0": "X", "1": "X"}, "coeff": 1.0}, ...]}

    Custom strings sharing a support are grouped into one term.
    """
    try:
        model = cfg["model"]
        n = int(cfg["n"])
    except KeyError as exc:
        raise ValueError(f"hamiltonian config missing field {exc}") from exc
    if model == "xx":
        return build_xx(n, cfg.get("J", 1.0), cfg.get("B", 1.0),
                        periodic=bool(cfg.get("periodic", True)))
    if model == "zz_graph":
        if "edges" not in cfg:
            raise ValueError("zz_graph config requires an edge list")
        return build_zz_graph(n, cfg["edges"], cfg.get("weights"))
    if model == "custom":
        strings = [
            PauliString({int(q): op for q, op in s["ops"].items()}, float(s["coeff"]))
            for s in cfg.get("strings", [])
        ]
        if not strings:
            raise ValueError("custom config requires a nonempty string list")
        return from_pauli_strings(n, strings)
    raise ValueError(f"unknown model {model!r}")


def load_hamiltonian(path) -> LocalHamiltonian:
    with open(path) as f:
        cfg = json.load(f)
    return hamiltonian_from_config(cfg.get("hamiltonian", cfg))
