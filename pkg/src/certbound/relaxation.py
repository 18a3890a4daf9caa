"""Compile marginal-compatibility relaxations and return certified bounds.

Given a Hamiltonian and a constraint set C, the compiler builds one PSD
block per subset S in simplify(C) (plus implicit one-body blocks for
uncovered qubits that carry a supported term), imposes unit traces and
partial-trace matching on overlapping supports, and assigns each
Hamiltonian term to the lexicographically first block containing its
support.  Terms supported by no block contribute their minimal
eigenvalue to a constant offset, exactly like the trivial relaxation.

Compatibility rows are expressed in the Pauli basis: matching the
marginals of blocks S and S' on R means equating the expectation of
every non-identity Pauli string supported inside R.  Two such rows are
either orthogonal or identical up to sign, so a union-find over
(block, global string) pairs emits a spanning forest of equalities --
the rows handed to the solver are linearly independent by construction.
A consequence worth noting: matching on the full intersection R = S
cap S' already implies matching on every R' inside it (partial traces of
equal matrices are equal), so the AllSubsetIntersections mode yields the
same feasible set as PairwiseIntersections and is kept only as an
explicit cross-check of that equivalence.

Bounds are always reported from the dual side.  After solving, the dual
point is repaired along the unit-trace rows so that the dual slack is
exactly positive semidefinite; the reported beta is therefore a true
lower bound by weak duality, up to the verification tolerance.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from . import solver
from .constraints import ConstraintSet, cost, simplify
from .hamiltonian import LocalHamiltonian, term_min_eigenvalue
from .pauli import embed_into, partial_trace_matrix, pauli_strings, realify, string_matrix
from .solver import SdpProblem, SdpSolution, SolveStatus, min_eig_check

MAX_BLOCK_QUBITS = 6  # 128-dimensional real blocks; candidate pools stay at <= 4


class CompatMode(enum.Enum):
    PAIRWISE_INTERSECTIONS = "pairwise"
    ALL_SUBSET_INTERSECTIONS = "all_subsets"


@dataclass(frozen=True)
class RelaxationOptions:
    compat_mode: CompatMode = CompatMode.PAIRWISE_INTERSECTIONS
    ppt: bool = False
    eps_feas: float = 1e-9
    eps_gap: float = 1e-8
    max_iter: int = 200

    def __post_init__(self):
        if self.eps_feas <= 0 or self.eps_gap <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class CompiledRelaxation:
    """An SDP in canonical form plus bookkeeping for certificates."""

    problem: SdpProblem | None
    block_labels: list           # per block: ("rho", subset) or ("ppt", subset, part)
    trace_rows: dict             # block index -> row index of its unit-trace row
    unsupported_offset: float
    p: int
    n: int

    def reduce(self):
        """Split off blocks that appear in no coupling row.

        An uncoupled block's optimum is exactly the minimum eigenvalue of
        its objective (with the matching exact dual certificate), so it is
        hoisted into a constant offset; the returned problem contains only
        the coupled blocks.  Returns (problem, extra_offset, trace_rows,
        labels), where the problem is None when nothing needs a solver.
        """
        if self.problem is None:
            return None, 0.0, {}, []
        prob = self.problem
        coupled = set()
        for i, row in enumerate(prob.rows):
            if len(row) > 1:
                for blk, _ in row:
                    coupled.add(blk)
        extra = 0.0
        keep = []
        for blk in range(len(prob.dims)):
            if blk in coupled:
                keep.append(blk)
            else:
                extra += float(np.linalg.eigvalsh(prob.C[blk])[0]) * 2.0
        if not keep:
            return None, extra, {}, []
        remap = {old: new for new, old in enumerate(keep)}
        rows, b, names, trace_rows = [], [], [], {}
        for i, row in enumerate(prob.rows):
            if any(blk not in remap for blk, _ in row):
                continue  # the trace row of a hoisted block
            for blk, _ in row:
                if self.trace_rows.get(blk) == i:
                    trace_rows[remap[blk]] = len(rows)
            rows.append([(remap[blk], mat) for blk, mat in row])
            b.append(prob.b[i])
            names.append(prob._name(i))
        reduced = SdpProblem(tuple(prob.dims[k] for k in keep),
                             [prob.C[k] for k in keep], rows, np.array(b), names)
        return reduced, extra, trace_rows, [self.block_labels[k] for k in keep]


@dataclass
class BoundResult:
    beta: float
    p: int
    status: SolveStatus
    dual_certified: bool
    unsupported_offset: float
    solution: SdpSolution | None = field(default=None, repr=False)


def partial_trace_map(S, R) -> np.ndarray:
    """Coefficients of the linear map rho_S -> Tr_{S\\R}[rho_S].

    Returned as a (4^|R|, 4^|S|) matrix acting on row-major vectorised
    operators.
    """
    S, R = tuple(sorted(S)), tuple(sorted(R))
    if not R:
        raise ValueError("R must be nonempty")
    if not set(R) <= set(S):
        raise ValueError(f"{R} is not a subset of {S}")
    return partial_trace_matrix(S, R)


def _real_embed(mat_c: np.ndarray) -> np.ndarray:
    """Realified constraint/objective data: <out, realify(rho)> = Tr[mat rho]."""
    return realify(mat_c) / 2.0


class _UnionFind:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        p = self.parent.setdefault(x, x)
        while p != self.parent[p]:
            self.parent[p] = self.parent[self.parent[p]]
            p = self.parent[p]
        self.parent[x] = p
        return p

    def union(self, a, b) -> bool:
        """Merge; returns False when already connected (redundant row)."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def _global_string(labels, R):
    """Canonical key for a Pauli string acting as `labels` on sites R."""
    return tuple((q, l) for q, l in zip(R, labels) if l != "I")


def compile_relaxation(h: LocalHamiltonian, c: ConstraintSet,
                       opts: RelaxationOptions = RelaxationOptions()) -> CompiledRelaxation:
    """Build the canonical block SDP for the relaxation defined by C."""
    if c.n != h.n:
        raise ValueError(f"constraint set is on {c.n} qubits, Hamiltonian on {h.n}")
    simp = simplify(c)
    main = simp.sorted_subsets()
    for s in main:
        if len(s) > MAX_BLOCK_QUBITS:
            raise ValueError(f"block {s} exceeds dense reach ({MAX_BLOCK_QUBITS} qubits)")
    covered = simp.covered()

    # assign terms: lexicographically first containing block, else offset
    hosts = {}
    offset = 0.0
    one_body_needed = set()
    for ti, term in enumerate(h.terms):
        cands = [s for s in main if set(term.support) <= set(s)]
        if cands:
            hosts[ti] = min(cands)
        elif len(term.support) == 1 and term.support[0] not in covered:
            one_body_needed.add(term.support[0])
            hosts[ti] = term.support
        else:
            offset += term_min_eigenvalue(term)

    blocks = list(main) + [(q,) for q in sorted(one_body_needed)]
    index = {s: i for i, s in enumerate(blocks)}
    labels = [("rho", s) for s in blocks]
    p = cost(c)

    if not blocks:
        return CompiledRelaxation(None, [], {}, offset, p, h.n)

    dims = [2 ** (len(s) + 1) for s in blocks]  # realified: 2 * 2^|s|
    C = [np.zeros((d, d)) for d in dims]
    for ti, host in hosts.items():
        term = h.terms[ti]
        bi = index[host]
        C[bi] += _real_embed(embed_into(term.matrix, term.support, host))

    rows, b, names = [], [], []
    trace_rows = {}
    for bi, s in enumerate(blocks):
        trace_rows[bi] = len(rows)
        rows.append([(bi, np.eye(dims[bi]) / 2.0)])
        b.append(1.0)
        names.append(f"trace[{','.join(map(str, s))}]")

    uf = _UnionFind()
    for s1, s2 in itertools.combinations(main, 2):
        inter = tuple(sorted(set(s1) & set(s2)))
        if not inter:
            continue
        if opts.compat_mode is CompatMode.PAIRWISE_INTERSECTIONS:
            regions = [inter]
        else:
            regions = [r for size in range(1, len(inter) + 1)
                       for r in itertools.combinations(inter, size)]
        for R in regions:
            for labels_r in pauli_strings(len(R)):
                if all(l == "I" for l in labels_r):
                    continue
                key = _global_string(labels_r, R)
                if not uf.union((s1, key), (s2, key)):
                    continue
                mat = string_matrix(labels_r)
                a1 = _real_embed(embed_into(mat, R, s1))
                a2 = _real_embed(embed_into(mat, R, s2))
                rows.append([(index[s1], a1), (index[s2], -a2)])
                b.append(0.0)
                names.append(
                    f"match[{''.join(labels_r)}@{','.join(map(str, R))}:"
                    f"{','.join(map(str, s1))}|{','.join(map(str, s2))}]")

    if opts.ppt:
        _append_ppt(blocks, index, dims, C, rows, b, names, labels, trace_rows)

    prob = SdpProblem(tuple(dims), C, rows, np.array(b), names)
    return CompiledRelaxation(prob, labels, trace_rows, offset, p, h.n)


def _append_ppt(blocks, index, dims, C, rows, b, names, labels, trace_rows):
    """Ghost blocks Y = rho_S^{Gamma_A} >= 0 for every bipartition A|S\\A.

    Partial transposition flips the sign of Pauli strings with an odd
    number of Y factors inside A, so the entrywise tie is a signed
    equality per basis string.  Transposing A or its complement gives
    transposed matrices, hence only bipartitions with min(S) in A are
    enumerated.
    """
    for s in list(blocks):
        if len(s) < 2:
            continue
        bi = index[s]
        d = dims[bi]
        for size in range(1, len(s)):
            for part in itertools.combinations(s, size):
                if s[0] not in part:
                    continue
                gi = len(dims)
                labels.append(("ppt", s, part))
                dims.append(d)
                C.append(np.zeros((d, d)))
                trace_rows[gi] = len(rows)
                rows.append([(gi, np.eye(d) / 2.0)])
                b.append(1.0)
                names.append(f"trace[ppt:{','.join(map(str, s))}|{','.join(map(str, part))}]")
                for labels_s in pauli_strings(len(s)):
                    if all(l == "I" for l in labels_s):
                        continue
                    sign = (-1.0) ** sum(1 for q, l in zip(s, labels_s)
                                         if l == "Y" and q in part)
                    mat = _real_embed(string_matrix(labels_s))
                    rows.append([(gi, mat), (bi, -sign * mat)])
                    b.append(0.0)
                    names.append(
                        f"ppt[{''.join(labels_s)}:{','.join(map(str, s))}"
                        f"|{','.join(map(str, part))}]")


compile = compile_relaxation  # canonical operation name


def verify_certificate(prob: SdpProblem, y, eps_feas: float = 1e-9) -> bool:
    """True iff the dual slack C - sum_i y_i A_i is PSD on every block."""
    y = np.asarray(y, dtype=float)
    if y.shape != (prob.m,):
        raise ValueError(f"dual vector has shape {y.shape}, expected ({prob.m},)")
    return all(min_eig_check(z, eps_feas) for z in prob.dual_slack(y))


def _repair_dual(prob: SdpProblem, trace_rows: dict, y) -> tuple:
    """Shift y along the unit-trace rows until the slack is exactly PSD.

    Decreasing the trace multiplier of block b by 2|lambda_min| adds
    |lambda_min| * I to that block's slack and lowers the dual objective
    by the same 2|lambda_min|; the result stays weak-duality valid.
    """
    y = np.array(y, dtype=float)
    slack = prob.dual_slack(y)
    for bi, row in trace_rows.items():
        lam = float(np.linalg.eigvalsh(slack[bi])[0])
        if lam < 0.0:
            y[row] += 2.0 * lam
    return y, float(y @ prob.b)


def solve_bound(h: LocalHamiltonian, c: ConstraintSet,
                opts: RelaxationOptions = RelaxationOptions()) -> BoundResult:
    """Compile and solve; return the certified lower bound beta_C.

    beta is the repaired dual objective plus the exact offsets (minimal
    eigenvalues of unsupported terms and of uncoupled blocks);
    ``dual_certified`` records that the repaired dual slack passed the
    PSD check at ``opts.eps_feas``.
    """
    comp = compile_relaxation(h, c, opts)
    prob, extra, trace_rows, _ = comp.reduce()
    offset = comp.unsupported_offset + extra
    if prob is None:
        # nothing left to optimise: the bound is a sum of exact minima
        return BoundResult(offset, comp.p, SolveStatus.OPTIMAL,
                           True, comp.unsupported_offset, None)
    sol = solver.solve(prob, eps_feas=opts.eps_feas, eps_gap=opts.eps_gap,
                       max_iter=opts.max_iter, assume_independent=True)
    candidates = [sol.y]
    if sol.best_y is not None:
        candidates.append(sol.best_y)
    best_y, best_obj = None, -np.inf
    for yc in candidates:
        yr, obj = _repair_dual(prob, trace_rows, yc)
        if obj > best_obj:
            best_y, best_obj = yr, obj
    certified = verify_certificate(prob, best_y, opts.eps_feas)
    if not certified and sol.status is SolveStatus.OPTIMAL:
        status = SolveStatus.NEAR_OPTIMAL
    else:
        status = sol.status
    sol = replace(sol, y=best_y, dual_obj=best_obj)
    return BoundResult(best_obj + offset, comp.p, status,
                       certified, comp.unsupported_offset, sol)


# -- canonical constraint-set constructors for the hierarchy ------------------

def trivial_set(h: LocalHamiltonian) -> ConstraintSet:
    """The minimal set: every term falls back on its minimal eigenvalue."""
    return ConstraintSet(h.n, ())


def term_support_set(h: LocalHamiltonian) -> ConstraintSet:
    """One constraint per (>= 2-body) term support: the first level of
    compatibility, matching marginals on support intersections."""
    return simplify(ConstraintSet(h.n, [t.support for t in h.terms if t.k >= 2]))


def pair_union_set(h: LocalHamiltonian) -> ConstraintSet:
    """Supports joined over all term pairs: the second hierarchy level,
    with virtual RDMs on unions of term supports."""
    supports = [t.support for t in h.terms]
    unions = set()
    for s1, s2 in itertools.combinations(supports, 2):
        u = tuple(sorted(set(s1) | set(s2)))
        if len(u) >= 2:
            unions.add(u)
    unions.update(s for s in supports if len(s) >= 2)
    too_big = [u for u in unions if len(u) > MAX_BLOCK_QUBITS]
    if too_big:
        raise ValueError(f"pair unions exceed dense reach: {sorted(too_big)[:3]}")
    return simplify(ConstraintSet(h.n, unions))


def full_system_set(h: LocalHamiltonian) -> ConstraintSet:
    """C = {[n]}: the exact (unrelaxed) single-block program."""
    if h.n > MAX_BLOCK_QUBITS:
        raise ValueError(f"full block on {h.n} qubits exceeds dense reach")
    return ConstraintSet(h.n, [tuple(range(h.n))])
