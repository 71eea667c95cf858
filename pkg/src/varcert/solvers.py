"""Self-contained numerical engines: dense two-phase simplex and Jacobi eigensolver.

Problem sizes here are tiny (at most a few hundred columns after
discretization), so everything is dense and deterministic: Bland's
anti-cycling rule fixes all pivot ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NonConvergenceError, NumericalBreakdownError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_RC_TOL = 1e-9
_PIVOT_TOL = 1e-9
_BREAKDOWN_TOL = 1e-12


@dataclass
class LPProblem:
    """min c.x  s.t.  A x (senses) b,  lo <= x <= hi (default free)."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: list = None
    bounds: list = None  # list of (lo, hi); None entries mean unbounded

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        m, n = self.A.shape
        if len(self.c) != n or len(self.b) != m:
            raise DimensionMismatchError("LP data dimensions inconsistent")
        if self.senses is None:
            self.senses = ["<="] * m
        if len(self.senses) != m:
            raise DimensionMismatchError("one sense per row required")
        for s in self.senses:
            if s not in ("<=", "=", ">="):
                raise ValueError(f"bad row sense {s!r}")
        if self.bounds is not None:
            if len(self.bounds) != n:
                raise DimensionMismatchError("one bound pair per variable required")
            for lo, hi in self.bounds:
                if lo is not None and hi is not None and lo > hi:
                    raise ValueError("bound lo > hi")


@dataclass
class LPSolution:
    status: str
    x: np.ndarray = None
    y: np.ndarray = None  # dual values for the given rows
    objective: float = None
    iterations: int = 0


def _standardize(p: LPProblem):
    """Rewrite into min c.z s.t. M z = r, z >= 0 plus bookkeeping to map back."""
    m, n = p.A.shape
    bounds = p.bounds if p.bounds is not None else [(None, None)] * n

    # variable substitution x = S z + t with z >= 0
    cols = []  # per original var: list of (z_index, sign)
    t = np.zeros(n)
    extra_rows = []  # (z_index, ub) for boxed variables
    nz = 0
    for j, (lo, hi) in enumerate(bounds):
        if lo is None and hi is None:
            cols.append([(nz, 1.0), (nz + 1, -1.0)])
            nz += 2
        elif lo is not None:
            cols.append([(nz, 1.0)])
            t[j] = lo
            if hi is not None:
                extra_rows.append((nz, hi - lo))
            nz += 1
        else:  # hi finite only
            cols.append([(nz, -1.0)])
            t[j] = hi
            nz += 1

    S = np.zeros((n, nz))
    for j, parts in enumerate(cols):
        for k, sgn in parts:
            S[j, k] = sgn

    A2 = p.A @ S
    b2 = p.b - p.A @ t
    senses2 = list(p.senses)
    for k, ub in extra_rows:
        row = np.zeros(nz)
        row[k] = 1.0
        A2 = np.vstack([A2, row])
        b2 = np.append(b2, ub)
        senses2.append("<=")
    c2 = S.T @ p.c
    const = float(p.c @ t)

    # slacks / surpluses
    n_slack = sum(1 for s in senses2 if s != "=")
    M = np.hstack([A2, np.zeros((A2.shape[0], n_slack))])
    k = nz
    for i, s in enumerate(senses2):
        if s == "<=":
            M[i, k] = 1.0
            k += 1
        elif s == ">=":
            M[i, k] = -1.0
            k += 1
    r = b2.copy()
    cost = np.concatenate([c2, np.zeros(n_slack)])

    flip = np.ones(len(r))
    neg = r < 0
    M[neg] *= -1.0
    r[neg] = -r[neg]
    flip[neg] = -1.0

    return M, r, cost, const, S, t, flip, m


def _pivot(T, basis, row, col):
    piv = T[row, col]
    T[row] /= piv
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]
    basis[row] = col


def _rebuild(T, M_full, r, cost_rows, basis):
    """Refactorization: recompute the tableau from the basis by direct solve."""
    mrows = M_full.shape[0]
    B = M_full[:, basis]
    Binv_M = np.linalg.solve(B, M_full)
    Binv_r = np.linalg.solve(B, r)
    T[:mrows, :-1] = Binv_M
    T[:mrows, -1] = Binv_r
    for k, c_full in cost_rows:
        y = c_full[basis]
        T[mrows + k, :-1] = c_full - y @ Binv_M
        T[mrows + k, -1] = -y @ Binv_r


def _simplex_loop(T, basis, allowed, obj_row, max_iter=20000, refactor=None):
    """Bland's rule iteration on the bottom objective row. Returns status."""
    it = 0
    while True:
        it += 1
        if it > max_iter:
            raise NonConvergenceError(max_iter, "simplex iteration limit")
        rc = T[obj_row, :-1]
        col = -1
        for j in allowed:
            if rc[j] < -_RC_TOL:
                col = j
                break
        if col < 0:
            return OPTIMAL, it
        ratios = []
        nrows = len(basis)
        for i in range(nrows):
            a = T[i, col]
            if a > _PIVOT_TOL:
                ratios.append((T[i, -1] / a, basis[i], i))
        if not ratios:
            return UNBOUNDED, it
        ratios.sort(key=lambda z: (z[0], z[1]))
        row = ratios[0][2]
        if abs(T[row, col]) < _BREAKDOWN_TOL:
            if refactor is not None:
                refactor()
            if abs(T[row, col]) < _BREAKDOWN_TOL:
                raise NumericalBreakdownError(abs(T[row, col]))
        _pivot(T, basis, row, col)


def lp_solve(p: LPProblem) -> LPSolution:
    """Two-phase primal simplex with Bland's anti-cycling rule."""
    if not (np.all(np.isfinite(p.A)) and np.all(np.isfinite(p.b)) and np.all(np.isfinite(p.c))):
        raise ValueError("LP data must be finite")
    M, r, cost, const, S, t, flip, n_user_rows = _standardize(p)
    mrows, ncols = M.shape

    # artificial variables, one per row, form the initial basis
    M_full = np.hstack([M, np.eye(mrows)])
    art = list(range(ncols, ncols + mrows))
    basis = list(art)
    cost_art = np.concatenate([np.zeros(ncols), np.ones(mrows)])
    cost_full = np.concatenate([cost, np.zeros(mrows)])

    T = np.zeros((mrows + 2, ncols + mrows + 1))
    T[:mrows, :-1] = M_full
    T[:mrows, -1] = r
    # phase-1 cost row (index mrows) and real cost row (index mrows+1)
    T[mrows, :-1] = cost_art
    T[mrows + 1, :-1] = cost_full
    for i in range(mrows):
        T[mrows] -= T[i]  # price out the artificial basis

    def refactor():
        _rebuild(T, M_full, r, [(0, cost_art), (1, cost_full)], basis)

    allowed = list(range(ncols + mrows))
    status, it1 = _simplex_loop(T, basis, allowed, mrows, refactor=refactor)
    phase1 = -T[mrows, -1]
    if phase1 > 1e-9 * (1.0 + float(np.linalg.norm(r))):
        return LPSolution(status=INFEASIBLE, iterations=it1)

    # drive artificials out of the basis; drop redundant rows
    keep = list(range(mrows))
    for i in range(mrows):
        if basis[i] >= ncols:
            piv_col = -1
            for j in range(ncols):
                if abs(T[i, j]) > 1e-9:
                    piv_col = j
                    break
            if piv_col >= 0:
                _pivot(T, basis, i, piv_col)
            else:
                keep.remove(i)

    if len(keep) < mrows:
        rows = keep + [mrows, mrows + 1]
        T = T[rows]
        basis = [basis[i] for i in keep]
        M_full = M_full[keep]
        r = r[keep]
        row_map = keep
    else:
        row_map = list(range(mrows))
    nbrows = len(basis)

    # phase 2 over structural + slack columns only
    allowed = list(range(ncols))

    def refactor2():
        _rebuild(T[: nbrows + 2], M_full, r, [(1, cost_full[: ncols + mrows])], basis)

    status, it2 = _simplex_loop(T, basis, allowed, nbrows + 1, refactor=refactor2)
    if status == UNBOUNDED:
        return LPSolution(status=UNBOUNDED, iterations=it1 + it2)

    z = np.zeros(ncols)
    for i, bj in enumerate(basis):
        if bj < ncols:
            z[bj] = T[i, -1]
    x = S @ z[: S.shape[1]] + t
    objective = float(cost @ z) + const

    # duals: y = c_B B^{-1} on the standardized rows, mapped back through flips
    B = M_full[:, basis]
    cB = cost_full[basis]
    try:
        y_std = np.linalg.solve(B.T, cB)
    except np.linalg.LinAlgError:
        y_std = np.linalg.lstsq(B.T, cB, rcond=None)[0]
    y_all = np.zeros(len(flip))
    for i_local, i_orig in enumerate(row_map):
        y_all[i_orig] = flip[i_orig] * y_std[i_local]
    y = y_all[:n_user_rows]

    return LPSolution(status=OPTIMAL, x=x, y=y, objective=objective, iterations=it1 + it2)


def eigh(A):
    """Cyclic Jacobi for symmetric matrices.

    Returns (eigenvalues descending, orthonormal eigenvectors as columns),
    iterating until the off-diagonal Frobenius norm is below 1e-12 * ||A||.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatchError("eigh requires a square matrix")
    n = A.shape[0]
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    if float(np.max(np.abs(A - A.T))) > 1e-10 * (1.0 + scale):
        raise ValueError("matrix is not symmetric within 1e-10")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    norm = float(np.linalg.norm(A))
    if norm == 0.0 or n == 1:
        w = np.diag(A).copy()
        order = np.argsort(-w)
        return w[order], V[:, order]

    for _ in range(100):
        # direct off-diagonal norm; the ||A||^2 - ||diag||^2 form cancels badly
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= 1e-12 * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-14 * norm:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta >= 0:
                    tau = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    tau = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(tau * tau + 1.0)
                s = tau * c
                col_p, col_q = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p, row_q = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise NonConvergenceError(100, "Jacobi sweeps")

    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def largest_eigenvalue(A) -> float:
    """sigma(A): the largest eigenvalue of a symmetric matrix."""
    w, _ = eigh(A)
    return float(w[0])


def lp_solve_with_tiebreak(p: LPProblem, cap_mask=None) -> LPSolution:
    """lp_solve, then re-optimize min max(x_i) over the optimal face.

    Multiplier-recovery LPs minimize a 1-norm surrogate whose optimal face
    can be fat; the infinity-norm tie-break pulls the returned weights
    toward the Euclidean-minimal multiplier the bound theorems refer to.
    ``cap_mask`` selects the variables entering the tie-break (default:
    those with positive stage-1 cost).
    """
    sol = lp_solve(p)
    if sol.status != OPTIMAL:
        return sol
    if cap_mask is None:
        cap_mask = p.c > 0
    cap_idx = [j for j, m in enumerate(cap_mask) if m]
    if not cap_idx:
        return sol
    K = len(p.c)
    A2 = np.hstack([p.A, np.zeros((p.A.shape[0], 1))])
    rows = [A2]
    b2 = list(p.b)
    senses2 = list(p.senses)
    cost_row = np.concatenate([p.c, [0.0]])
    rows.append(cost_row.reshape(1, -1))
    b2.append(sol.objective + 1e-9 * (1.0 + abs(sol.objective)))
    senses2.append("<=")
    for j in cap_idx:
        r = np.zeros(K + 1)
        r[j] = 1.0
        r[K] = -1.0
        rows.append(r.reshape(1, -1))
        b2.append(0.0)
        senses2.append("<=")
    bounds2 = (list(p.bounds) if p.bounds is not None else [(None, None)] * K) + [(0.0, None)]
    c2 = np.zeros(K + 1)
    c2[K] = 1.0
    sol2 = lp_solve(LPProblem(c=c2, A=np.vstack(rows), b=np.array(b2),
                              senses=senses2, bounds=bounds2))
    if sol2.status != OPTIMAL:
        return sol
    x = sol2.x[:K]
    return LPSolution(status=OPTIMAL, x=x, y=None,
                      objective=float(p.c @ x), iterations=sol.iterations + sol2.iterations)
