"""Dense Pauli-operator utilities.

Everything here works on explicit numpy arrays for small qubit sets
(local terms and SDP blocks never exceed a handful of qubits).  Qubit
subsets are always passed as sorted tuples of site indices, and the
matrix of an operator on a subset uses the tensor order induced by that
sorting, with the lowest site index as the leftmost (most significant)
factor.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

PAULI_LABELS = "IXYZ"

_I = np.eye(2, dtype=complex)
_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

PAULI = {"I": _I, "X": _X, "Y": _Y, "Z": _Z}


def kron_all(mats):
    """Kronecker product of a sequence of matrices, left to right."""
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def string_matrix(labels) -> np.ndarray:
    """Matrix of a Pauli label tuple, e.g. ("X", "I", "Z")."""
    return kron_all(PAULI[l] for l in labels)


@lru_cache(maxsize=None)
def pauli_strings(k: int):
    """All 4^k label tuples on k sites, identity first."""
    return tuple(itertools.product(PAULI_LABELS, repeat=k))


@lru_cache(maxsize=None)
def _string_matrix_cached(labels):
    m = string_matrix(labels)
    m.setflags(write=False)
    return m


def embed_into(mat: np.ndarray, sub, sup) -> np.ndarray:
    """Embed an operator acting on qubits ``sub`` into the larger sorted
    qubit set ``sup`` (identity on the extra sites)."""
    sub, sup = tuple(sub), tuple(sup)
    if sub == sup:
        return mat
    if not set(sub) <= set(sup):
        raise ValueError(f"{sub} is not a subset of {sup}")
    rest = [q for q in sup if q not in sub]
    big = np.kron(mat, np.eye(2 ** len(rest), dtype=mat.dtype))
    current = list(sub) + rest
    perm = [current.index(q) for q in sup]
    k = len(sup)
    t = big.reshape((2,) * (2 * k))
    t = t.transpose(perm + [k + p for p in perm])
    return np.ascontiguousarray(t).reshape(2**k, 2**k)


def partial_trace(mat: np.ndarray, block, keep) -> np.ndarray:
    """Trace the qubits ``block`` \\ ``keep`` out of an operator on ``block``.

    Both ``block`` and ``keep`` must be sorted; ``keep`` must be a subset
    of ``block``.  Returns the operator on ``keep``.
    """
    block, keep = tuple(block), tuple(keep)
    if not set(keep) <= set(block):
        raise ValueError(f"{keep} is not a subset of {block}")
    if keep == block:
        return mat
    k = len(block)
    keep_pos = [block.index(q) for q in keep]
    drop = [p for p in range(k) if p not in keep_pos]
    t = mat.reshape((2,) * (2 * k))
    # trace the highest dropped axis first so lower positions stay put
    for p in sorted(drop, reverse=True):
        t = np.trace(t, axis1=p, axis2=t.ndim // 2 + p)
    d = 2 ** len(keep)
    return t.reshape(d, d)


def partial_trace_matrix(block, keep) -> np.ndarray:
    """Matrix of the linear map vec(rho_block) -> vec(Tr_{block\\keep} rho).

    Row-major (C order) vectorisation on both sides.
    """
    block, keep = tuple(block), tuple(keep)
    db, dk = 2 ** len(block), 2 ** len(keep)
    out = np.zeros((dk * dk, db * db), dtype=complex)
    basis = np.zeros((db, db), dtype=complex)
    for i in range(db):
        for j in range(db):
            basis[i, j] = 1.0
            out[:, i * db + j] = partial_trace(basis, block, keep).ravel()
            basis[i, j] = 0.0
    return out


def realify(mat: np.ndarray) -> np.ndarray:
    """Standard real embedding M -> [[Re M, -Im M], [Im M, Re M]].

    Maps Hermitian to symmetric and preserves positive semidefiniteness;
    every eigenvalue appears with doubled multiplicity.
    """
    re, im = mat.real, mat.imag
    return np.block([[re, -im], [im, re]])


def is_hermitian(mat: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(mat - mat.conj().T)) <= tol)


def random_pure_state(dim: int, rng) -> np.ndarray:
    """Haar-ish random pure-state density matrix, for test oracles."""
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())
