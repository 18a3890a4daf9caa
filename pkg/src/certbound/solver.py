"""Primal-dual interior-point solver for block-diagonal real symmetric SDPs.

Canonical form::

    (P)  min  <C, X>    s.t.  <A_i, X> = b_i,   X >= 0   (block diagonal)
    (D)  max  y' b      s.t.  Z = C - sum_i y_i A_i >= 0

Any dual-feasible y certifies y'b as a lower bound on the primal optimum
(weak duality), which is how bounds are reported downstream.

The algorithm is standard path following with Nesterov-Todd scaling and
a Mehrotra predictor-corrector step; the Schur complement is formed and
factorised densely, which is fine at the block sizes (<= 512) and
constraint counts this package produces.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

DEFAULT_EPS_FEAS = 1e-8
DEFAULT_EPS_GAP = 1e-7
DEFAULT_MAX_ITER = 200
MAX_BLOCK_DIM = 512


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    NEAR_OPTIMAL = "near_optimal"
    FAILED = "failed"


class SdpInputError(ValueError):
    """Malformed problem data (asymmetry, shape mismatch, rank deficiency)."""


@dataclass
class SdpProblem:
    """Block-diagonal SDP data.

    ``rows[i]`` is the i-th constraint matrix A_i, given as a list of
    (block_index, matrix) pairs for its nonzero blocks.  ``names`` are
    optional per-constraint labels used in diagnostics.
    """

    dims: tuple
    C: list
    rows: list
    b: np.ndarray
    names: list | None = None

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.b = np.asarray(self.b, dtype=float)
        if len(self.C) != len(self.dims):
            raise SdpInputError("objective block count does not match dims")
        if len(self.rows) != self.b.size:
            raise SdpInputError("constraint count does not match b")
        if self.b.size < 1:
            raise SdpInputError("need at least one constraint")
        for d in self.dims:
            if d < 1 or d > MAX_BLOCK_DIM:
                raise SdpInputError(f"block dimension {d} outside [1, {MAX_BLOCK_DIM}]")
        for blk, (d, c) in enumerate(zip(self.dims, self.C)):
            _check_sym(c, d, f"C block {blk}")
        for i, row in enumerate(self.rows):
            if not row:
                raise SdpInputError(f"constraint {self._name(i)} has no nonzero block")
            for blk, mat in row:
                _check_sym(mat, self.dims[blk], f"constraint {self._name(i)} block {blk}")

    def _name(self, i: int) -> str:
        return self.names[i] if self.names else str(i)

    @property
    def m(self) -> int:
        return self.b.size

    def objective(self, X) -> float:
        return float(sum(np.vdot(c, x).real for c, x in zip(self.C, X)))

    def apply_rows(self, X) -> np.ndarray:
        """The linear map A(X) = (<A_i, X>)_i."""
        out = np.empty(self.m)
        for i, row in enumerate(self.rows):
            out[i] = sum(float(np.vdot(mat, X[blk])) for blk, mat in row)
        return out

    def adjoint(self, y) -> list:
        """The adjoint map A^T(y) = sum_i y_i A_i, as block matrices."""
        out = [np.zeros((d, d)) for d in self.dims]
        for i, row in enumerate(self.rows):
            if y[i] != 0.0:
                for blk, mat in row:
                    out[blk] += y[i] * mat
        return out

    def dual_slack(self, y) -> list:
        at = self.adjoint(y)
        return [c - a for c, a in zip(self.C, at)]


def _check_sym(mat, d, what):
    mat = np.asarray(mat)
    if mat.shape != (d, d):
        raise SdpInputError(f"{what} has shape {mat.shape}, expected ({d}, {d})")
    if np.max(np.abs(mat - mat.T)) > 1e-12 * max(1.0, np.max(np.abs(mat))):
        raise SdpInputError(f"{what} is not symmetric")


@dataclass
class SdpSolution:
    X: list
    y: np.ndarray
    Z: list
    primal_obj: float
    dual_obj: float
    gap: float
    iterations: int
    status: SolveStatus
    best_dual_obj: float = -np.inf
    best_y: np.ndarray | None = None
    trace: list = field(default_factory=list)


def min_eig_check(mat: np.ndarray, eps: float) -> bool:
    """True iff lambda_min(M) >= -eps for a symmetric M."""
    try:
        return bool(np.linalg.eigvalsh(mat)[0] >= -eps)
    except np.linalg.LinAlgError:
        # Cholesky-with-shift fallback
        try:
            np.linalg.cholesky(mat + eps * np.eye(mat.shape[0]))
            return True
        except np.linalg.LinAlgError:
            return False


# -- pre-scan ----------------------------------------------------------------

def _svec_rows(prob: SdpProblem) -> np.ndarray:
    """Stack constraints as vectors with <A,B> = svec(A).svec(B)."""
    parts = []
    for d in prob.dims:
        iu = np.triu_indices(d)
        parts.append(iu)
    width = sum(len(iu[0]) for iu in parts)
    offs = np.cumsum([0] + [len(iu[0]) for iu in parts])
    out = np.zeros((prob.m, width))
    for i, row in enumerate(prob.rows):
        for blk, mat in row:
            iu = parts[blk]
            v = mat[iu] * np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
            out[i, offs[blk]:offs[blk + 1]] = v
    return out


def prescan(prob: SdpProblem, drop_duplicates: bool = True,
            check_rank: bool = True) -> SdpProblem:
    """Remove exact duplicate rows; error on rank-deficient systems.

    Duplicate rows with conflicting right-hand sides, and rows that are
    numerically dependent on earlier ones, raise :class:`SdpInputError`
    naming the offending rows.
    """
    rows, b, names = prob.rows, prob.b, prob.names or [str(i) for i in range(prob.m)]
    keep = list(range(prob.m))
    if drop_duplicates:
        seen = {}
        keep = []
        for i, row in enumerate(rows):
            key = tuple((blk, mat.tobytes()) for blk, mat in row)
            if key in seen:
                j = seen[key]
                if abs(b[i] - b[j]) > 1e-12:
                    raise SdpInputError(
                        f"duplicate rows {names[j]} and {names[i]} have conflicting rhs")
                continue
            seen[key] = i
            keep.append(i)
    pruned = SdpProblem(prob.dims, prob.C, [rows[i] for i in keep], b[keep],
                        [names[i] for i in keep])
    if check_rank:
        R = _svec_rows(pruned)
        q, r, piv = scipy.linalg.qr(R.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        tol = max(R.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
        rank = int(np.sum(diag > max(tol, 1e-12)))
        if rank < pruned.m:
            bad = sorted(piv[rank:].tolist())
            bad_names = ", ".join(pruned._name(i) for i in bad)
            raise SdpInputError(
                f"constraint system is rank deficient; dependent rows: {bad_names}")
    return pruned


# -- the interior-point method -----------------------------------------------

def _factor(mat):
    """Square factor F with F F' = mat, via eigendecomposition (robust for
    nearly singular iterates).  Returns (F, F_inv, w_min)."""
    w, u = np.linalg.eigh(mat)
    if w[0] <= 0:
        return None, None, w[0]
    sqw = np.sqrt(w)
    return u * sqw, (u / sqw).T, w[0]


def _max_step(F_inv, delta):
    """Largest alpha with  M + alpha*delta >= 0, where F_inv factors M."""
    s = F_inv @ delta @ F_inv.T
    lam = np.linalg.eigvalsh(s)[0]
    if lam >= 0.0:
        return np.inf
    return -1.0 / lam


def _schur_factor(M, m):
    """Return a solve closure for the (ill-conditioned near convergence)
    Schur complement, regularising as gently as the data allows."""
    scale = max(np.trace(M) / m, 1e-300)
    for ridge in (1e-14, 1e-11, 1e-8):
        try:
            f = scipy.linalg.cho_factor(M + ridge * scale * np.eye(m))
            return lambda rhs: scipy.linalg.cho_solve(f, rhs)
        except scipy.linalg.LinAlgError:
            continue
    # eigenvalue-clipped pseudo-solve as a last resort
    w, u = np.linalg.eigh(M)
    w = np.maximum(w, 1e-13 * max(w[-1], 1e-300))
    return lambda rhs: u @ ((u.T @ rhs) / w)


class _Workspace:
    """Per-solve precomputation: block-wise constraint stacks."""

    def __init__(self, prob: SdpProblem):
        self.prob = prob
        nb = len(prob.dims)
        touch = [[] for _ in range(nb)]
        for i, row in enumerate(prob.rows):
            for blk, mat in row:
                touch[blk].append((i, mat))
        self.idx = []
        self.stacks = []
        for blk in range(nb):
            if touch[blk]:
                idx = np.array([i for i, _ in touch[blk]], dtype=int)
                stack = np.stack([m for _, m in touch[blk]])
            else:
                idx = np.zeros(0, dtype=int)
                stack = np.zeros((0, prob.dims[blk], prob.dims[blk]))
            self.idx.append(idx)
            self.stacks.append(stack)

    def apply(self, mats) -> np.ndarray:
        out = np.zeros(self.prob.m)
        for idx, stack, mat in zip(self.idx, self.stacks, mats):
            if idx.size:
                np.add.at(out, idx, stack.reshape(idx.size, -1) @ mat.ravel())
        return out

    def schur(self, W) -> np.ndarray:
        """M_ij = <A_i, W A_j W>, accumulated over blocks."""
        m = self.prob.m
        out = np.zeros((m, m))
        for idx, stack, w in zip(self.idx, self.stacks, W):
            if not idx.size:
                continue
            waw = np.matmul(np.matmul(w[None], stack), w[None])
            g = waw.reshape(idx.size, -1) @ stack.reshape(idx.size, -1).T
            out[np.ix_(idx, idx)] += g
        return out


def solve(prob: SdpProblem, eps_feas: float = DEFAULT_EPS_FEAS,
          eps_gap: float = DEFAULT_EPS_GAP, max_iter: int = DEFAULT_MAX_ITER,
          assume_independent: bool = False, record_trace: bool = False) -> SdpSolution:
    """Solve a block-diagonal SDP to the requested (relative) tolerances.

    Always reports the best dual-feasible point encountered, so even a
    NEAR_OPTIMAL or FAILED result carries a usable certified bound when
    ``best_y`` is not None.
    """
    prob = prescan(prob, check_rank=not assume_independent)
    return _ipm(prob, eps_feas, eps_gap, max_iter, record_trace)


def _ipm(prob: SdpProblem, eps_feas: float, eps_gap: float, max_iter: int,
         record_trace: bool) -> SdpSolution:
    dims = prob.dims
    N = sum(dims)
    ws = _Workspace(prob)

    norm_b = 1.0 + np.linalg.norm(prob.b)
    norm_C = 1.0 + np.sqrt(sum(np.vdot(c, c).real for c in prob.C))
    row_norms = np.array([
        np.sqrt(sum(np.vdot(mat, mat).real for _, mat in row)) for row in prob.rows])

    eta_p = max(10.0, np.sqrt(N), N * np.max(np.abs(prob.b) / (1.0 + row_norms)))
    eta_d = max(10.0, np.sqrt(N), np.max(row_norms), norm_C / np.sqrt(N))
    X = [eta_p * np.eye(d) for d in dims]
    Z = [eta_d * np.eye(d) for d in dims]
    y = np.zeros(prob.m)

    best_dual = -np.inf
    best_y = None
    trace = []
    status = SolveStatus.FAILED
    it = 0
    stalls = 0
    best_gap = np.inf
    no_progress = 0

    for it in range(1, max_iter + 1):
        r_p = prob.b - ws.apply(X)
        AtY = prob.adjoint(y)
        R_d = [c - at - z for c, at, z in zip(prob.C, AtY, Z)]
        mu = sum(np.vdot(x, z).real for x, z in zip(X, Z)) / N

        p_obj = prob.objective(X)
        d_obj = float(y @ prob.b)
        pres = np.linalg.norm(r_p) / norm_b
        dres = np.sqrt(sum(np.vdot(r, r).real for r in R_d)) / norm_C
        gap = abs(p_obj - d_obj) / (1.0 + max(abs(p_obj), abs(d_obj)))

        # track the best dual-feasible point: Z_exact = C - A^T y
        slack_min = min(np.linalg.eigvalsh(c - at)[0]
                        for c, at in zip(prob.C, AtY))
        if slack_min >= -eps_feas and d_obj > best_dual:
            best_dual = d_obj
            best_y = y.copy()

        if record_trace:
            trace.append({"iter": it, "mu": mu, "primal_res": pres,
                          "dual_res": dres, "gap": gap,
                          "primal_obj": p_obj, "dual_obj": d_obj})

        if pres <= eps_feas and dres <= eps_feas and gap <= eps_gap:
            status = SolveStatus.OPTIMAL
            break
        merit = max(gap, pres, dres)
        if merit < 0.98 * best_gap:
            best_gap = merit
            no_progress = 0
        else:
            no_progress += 1
            if no_progress >= 10:
                break  # numerical floor reached; classify below

        # NT scaling per block; block factors are reused for step lengths
        G, Ginv, lam, W, Xinv_f, Zinv_f = [], [], [], [], [], []
        degenerate = False
        for x, z in zip(X, Z):
            Lx, Lxi, wx = _factor(x)
            Rz, Rzi, wz = _factor(z)
            if Lx is None or Rz is None:
                degenerate = True
                break
            u, s, vt = np.linalg.svd(Rz.T @ Lx)
            g = Lx @ vt.T / np.sqrt(s)
            ginv = (vt.T * np.sqrt(s)).T @ Lxi
            G.append(g)
            Ginv.append(ginv)
            lam.append(s)
            W.append(g @ g.T)
            Xinv_f.append(Lxi)
            Zinv_f.append(Rzi)
        if degenerate:
            status = SolveStatus.FAILED
            break

        M = ws.schur(W)
        schur_solve = _schur_factor(M, prob.m)

        WRdW = [w @ rd @ w for w, rd in zip(W, R_d)]
        a_wrdw = ws.apply(WRdW)

        def directions(Rcomb):
            rhs = r_p - ws.apply(Rcomb) + a_wrdw
            dy = schur_solve(rhs)
            dy += schur_solve(rhs - M @ dy)  # one refinement step
            dAt = prob.adjoint(dy)
            dZ = [rd - da for rd, da in zip(R_d, dAt)]
            dX = [rc - w @ dz @ w for rc, w, dz in zip(Rcomb, W, dZ)]
            dX = [(d + d.T) / 2 for d in dX]
            return dy, dX, dZ

        def step_lengths(dX, dZ):
            a_p = a_d = np.inf
            for xi, zi, dx, dz in zip(Xinv_f, Zinv_f, dX, dZ):
                a_p = min(a_p, _max_step(xi, dx))
                a_d = min(a_d, _max_step(zi, dz))
            return a_p, a_d

        lam_sym = [np.add.outer(s, s) / 2 for s in lam]

        def combined(sigma, corr_x=None, corr_z=None):
            Rcomb = []
            for blk, (g, gi, s, ls) in enumerate(zip(G, Ginv, lam, lam_sym)):
                Rt = sigma * mu * np.eye(len(s)) - np.diag(s**2)
                if corr_x is not None:
                    Dx = gi @ corr_x[blk] @ gi.T
                    Dz = g.T @ corr_z[blk] @ g
                    Rt -= (Dx @ Dz + Dz @ Dx) / 2
                Rcomb.append(g @ (Rt / ls) @ g.T)
            return Rcomb

        # predictor (affine scaling)
        dy_a, dX_a, dZ_a = directions(combined(0.0))
        a_p, a_d = step_lengths(dX_a, dZ_a)
        a_p, a_d = min(1.0, a_p), min(1.0, a_d)
        mu_aff = sum(np.vdot(x + a_p * dx, z + a_d * dz).real
                     for x, z, dx, dz in zip(X, Z, dX_a, dZ_a)) / N
        sigma = min(1.0, max(0.0, (mu_aff / mu)) ** 3)

        # corrector with Mehrotra second-order term, in the scaled space
        dy, dX, dZ = directions(combined(sigma, dX_a, dZ_a))
        a_p, a_d = step_lengths(dX, dZ)
        if min(a_p, a_d) < 1e-4:
            # second-order term overshot; fall back to a centering step
            dy, dX, dZ = directions(combined(1.0))
            a_p, a_d = step_lengths(dX, dZ)

        tau = 0.98 if mu >= 1e-4 else (0.99 if mu >= 1e-7 else 0.999)
        a_p = min(1.0, tau * a_p)
        a_d = min(1.0, tau * a_d)
        if min(a_p, a_d) < 1e-10:
            stalls += 1
            if stalls >= 3:
                break
        else:
            stalls = 0

        X = [x + a_p * dx for x, dx in zip(X, dX)]
        y = y + a_d * dy
        Z = [z + a_d * dz for z, dz in zip(Z, dZ)]

    p_obj = prob.objective(X)
    d_obj = float(y @ prob.b)
    gap = abs(p_obj - d_obj) / (1.0 + max(abs(p_obj), abs(d_obj)))
    if status is not SolveStatus.OPTIMAL:
        pres = np.linalg.norm(prob.b - ws.apply(X)) / norm_b
        if best_y is not None and gap <= 1e3 * eps_gap and pres <= 1e3 * eps_feas:
            status = SolveStatus.NEAR_OPTIMAL
        else:
            status = SolveStatus.FAILED
    return SdpSolution(X=X, y=y, Z=Z, primal_obj=p_obj, dual_obj=d_obj, gap=gap,
                       iterations=it, status=status, best_dual_obj=best_dual,
                       best_y=best_y, trace=trace)


def write_trace_csv(sol: SdpSolution, path) -> None:
    """Dump the per-iteration trace recorded by solve(record_trace=True)."""
    import csv

    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["iter", "mu", "primal_res", "dual_res",
                                          "gap", "primal_obj", "dual_obj"])
        w.writeheader()
        for row in sol.trace:
            w.writerow(row)


# -- canonical plain-text dump -----------------------------------------------

def dumps(prob: SdpProblem) -> str:
    """Serialise to the plain-text canonical form.

    Line format: ``blocks d1 d2 ...``, then ``b <i> <value>``,
    ``c <block> <row> <col> <value>`` and ``a <i> <block> <row> <col> <value>``
    triplet lines for the nonzero entries of C and the A_i.
    """
    out = ["sdp 1", "blocks " + " ".join(str(d) for d in prob.dims)]
    for i, v in enumerate(prob.b):
        out.append(f"b {i} {float(v)!r}")
    for blk, c in enumerate(prob.C):
        for r, cidx in zip(*np.nonzero(c)):
            out.append(f"c {blk} {r} {cidx} {float(c[r, cidx])!r}")
    for i, row in enumerate(prob.rows):
        for blk, mat in row:
            for r, cidx in zip(*np.nonzero(mat)):
                out.append(f"a {i} {blk} {r} {cidx} {float(mat[r, cidx])!r}")
    return "\n".join(out) + "\n"


def loads(text: str) -> SdpProblem:
    """Parse the canonical plain-text form written by :func:`dumps`."""
    dims = None
    bvals = {}
    cent = []
    aent = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        try:
            if tok[0] == "sdp":
                continue
            elif tok[0] == "blocks":
                dims = tuple(int(t) for t in tok[1:])
            elif tok[0] == "b":
                bvals[int(tok[1])] = float(tok[2])
            elif tok[0] == "c":
                cent.append((int(tok[1]), int(tok[2]), int(tok[3]), float(tok[4])))
            elif tok[0] == "a":
                aent.append((int(tok[1]), int(tok[2]), int(tok[3]), int(tok[4]),
                             float(tok[5])))
            else:
                raise ValueError(f"unknown record {tok[0]!r}")
        except (IndexError, ValueError) as exc:
            raise SdpInputError(f"line {ln}: {exc}") from exc
    if dims is None:
        raise SdpInputError("missing blocks line")
    m = max(bvals) + 1 if bvals else 0
    b = np.zeros(m)
    for i, v in bvals.items():
        b[i] = v
    C = [np.zeros((d, d)) for d in dims]
    for blk, r, c, v in cent:
        C[blk][r, c] = v
    rows_map = [dict() for _ in range(m)]
    for i, blk, r, c, v in aent:
        if i >= m:
            raise SdpInputError(f"constraint index {i} has no b entry")
        mat = rows_map[i].setdefault(blk, np.zeros((dims[blk], dims[blk])))
        mat[r, c] = v
    rows = [sorted(d.items()) for d in rows_map]
    return SdpProblem(dims, C, rows, b)
