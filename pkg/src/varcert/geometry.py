"""Polyhedral sets and cones: tangent/normal cones, polars, projections.

Conventions
-----------
A ``Polyhedron`` is { x : A_ineq x <= b_ineq, A_eq x = b_eq }.  A
``PolyhedralCone`` carries a halfspace form { u : G u <= 0, H u = 0 }
and/or a generator form cone{r_1..r_k} + span{l_1..l_m}; a conversion
state records which forms are populated, and conversions are performed
by stripping the lineality space and enumerating extreme rays of the
pointed remainder (each extreme ray is cut out by dim-1 independent
active constraints).  Exact cone operations are reserved for polyhedra;
nonconvex sets enter only through ``SampledSetOracle``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptySetError,
    NonConvergenceError,
    NotMemberError,
    VarcertError,
)
from .solvers import INFEASIBLE, OPTIMAL, LPProblem, lp_solve

TOL_FEAS = 1e-8
TOL_ACTIVE = 1e-6
DYKSTRA_MAX_ITER = 10000
DYKSTRA_MOVE_TOL = 1e-10

_MAX_RAY_SUBSETS = 500_000


def _as_matrix(M, n):
    if M is None:
        return np.zeros((0, n))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros((0, n))
    if M.shape[1] != n:
        raise DimensionMismatchError(f"matrix has {M.shape[1]} columns, expected {n}")
    return M


def _as_vector(v, k):
    if v is None:
        return np.zeros(0)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if len(v) != k:
        raise DimensionMismatchError(f"vector has length {len(v)}, expected {k}")
    return v


def nullspace(M, tol=1e-10):
    """Orthonormal basis (columns) of the null space of M."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    _, s, Vt = np.linalg.svd(M)
    rank = int(np.sum(s > tol * max(1.0, s[0] if len(s) else 1.0)))
    return Vt[rank:].T


class Polyhedron:
    """{ x : A_ineq x <= b_ineq, A_eq x = b_eq }; emptiness is an answer, not an error."""

    def __init__(self, A_ineq=None, b_ineq=None, A_eq=None, b_eq=None, n=None):
        if n is None:
            for M in (A_ineq, A_eq):
                if M is not None and np.asarray(M).size:
                    n = np.atleast_2d(np.asarray(M)).shape[1]
                    break
            if n is None:
                raise ValueError("dimension n could not be inferred")
        self.n = int(n)
        self.A_ineq = _as_matrix(A_ineq, self.n)
        self.b_ineq = _as_vector(b_ineq, self.A_ineq.shape[0])
        self.A_eq = _as_matrix(A_eq, self.n)
        self.b_eq = _as_vector(b_eq, self.A_eq.shape[0])
        self._empty = None

    # ---- constructors -------------------------------------------------
    @classmethod
    def box(cls, bounds):
        """Axis-aligned box from (lo, hi) pairs; None entries drop the face."""
        bounds = list(bounds)
        n = len(bounds)
        rows, rhs = [], []
        for j, (lo, hi) in enumerate(bounds):
            if hi is not None:
                r = np.zeros(n)
                r[j] = 1.0
                rows.append(r)
                rhs.append(hi)
            if lo is not None:
                r = np.zeros(n)
                r[j] = -1.0
                rows.append(r)
                rhs.append(-lo)
        return cls(np.array(rows) if rows else None, np.array(rhs) if rhs else None, n=n)

    @classmethod
    def nonpositive_orthant(cls, n):
        return cls(np.eye(n), np.zeros(n), n=n)

    @classmethod
    def halfspace(cls, a, b):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        return cls(a.reshape(1, -1), [float(b)], n=len(a))

    @classmethod
    def singleton(cls, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(A_eq=np.eye(len(x)), b_eq=x, n=len(x))

    @classmethod
    def whole_space(cls, n):
        return cls(n=n)

    @classmethod
    def intersection(cls, P, Q):
        if P.n != Q.n:
            raise DimensionMismatchError("intersection of polyhedra in different spaces")
        return cls(
            np.vstack([P.A_ineq, Q.A_ineq]),
            np.concatenate([P.b_ineq, Q.b_ineq]),
            np.vstack([P.A_eq, Q.A_eq]),
            np.concatenate([P.b_eq, Q.b_eq]),
            n=P.n,
        )

    # ---- predicates ----------------------------------------------------
    def residual(self, x):
        x = np.asarray(x, dtype=float)
        r = 0.0
        if self.A_ineq.shape[0]:
            r = max(r, float(np.max(self.A_ineq @ x - self.b_ineq)))
        if self.A_eq.shape[0]:
            r = max(r, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        return r

    def contains(self, x, tol=TOL_FEAS):
        return self.residual(x) <= tol

    def is_empty(self):
        if self._empty is None:
            m = self.A_ineq.shape[0] + self.A_eq.shape[0]
            if m == 0:
                self._empty = False
            else:
                p = LPProblem(
                    c=np.zeros(self.n),
                    A=np.vstack([self.A_ineq, self.A_eq]),
                    b=np.concatenate([self.b_ineq, self.b_eq]),
                    senses=["<="] * self.A_ineq.shape[0] + ["="] * self.A_eq.shape[0],
                )
                self._empty = lp_solve(p).status == INFEASIBLE
        return self._empty

    def active_rows(self, x, tol_active=TOL_ACTIVE):
        """Indices of inequality rows active at x within tol_active."""
        if self.A_ineq.shape[0] == 0:
            return []
        res = self.A_ineq @ np.asarray(x, dtype=float) - self.b_ineq
        return [int(i) for i in np.nonzero(res >= -tol_active)[0]]

    def chebyshev_center(self, cap=1e3):
        """A point deep inside the set (LP); raises EmptySetError if empty."""
        if self.is_empty():
            raise EmptySetError("polyhedron is empty")
        norms = np.linalg.norm(self.A_ineq, axis=1) if self.A_ineq.shape[0] else np.zeros(0)
        n = self.n
        A = []
        b = []
        senses = []
        for i in range(self.A_ineq.shape[0]):
            A.append(np.concatenate([self.A_ineq[i], [norms[i]]]))
            b.append(self.b_ineq[i])
            senses.append("<=")
        for i in range(self.A_eq.shape[0]):
            A.append(np.concatenate([self.A_eq[i], [0.0]]))
            b.append(self.b_eq[i])
            senses.append("=")
        if not A:
            return np.zeros(n), cap
        c = np.zeros(n + 1)
        c[-1] = -1.0
        bounds = [(-cap, cap)] * n + [(0.0, cap)]
        sol = lp_solve(LPProblem(c=c, A=np.array(A), b=np.array(b), senses=senses, bounds=bounds))
        if sol.status != OPTIMAL:
            raise EmptySetError("chebyshev center LP failed")
        return sol.x[:n], float(sol.x[-1])

    def __repr__(self):
        return f"Polyhedron(n={self.n}, ineq={self.A_ineq.shape[0]}, eq={self.A_eq.shape[0]})"


# ---------------------------------------------------------------------------
# cones

class PolyhedralCone:
    def __init__(self, n):
        self.n = int(n)
        self.G = None  # (k, n) halfspace normals, G u <= 0
        self.H = None  # (m, n) hyperplane normals, H u = 0
        self.rays = None  # (k, n)
        self.lines = None  # (m, n)

    @classmethod
    def from_halfspaces(cls, G, H=None, n=None):
        if n is None:
            n = np.atleast_2d(np.asarray(G if G is not None and np.asarray(G).size else H)).shape[1]
        K = cls(n)
        K.G = _as_matrix(G, K.n)
        K.H = _as_matrix(H, K.n)
        return K

    @classmethod
    def from_generators(cls, rays, lines=None, n=None):
        if n is None:
            src = rays if rays is not None and np.asarray(rays).size else lines
            n = np.atleast_2d(np.asarray(src)).shape[1]
        K = cls(n)
        K.rays = _as_matrix(rays, K.n)
        K.lines = _as_matrix(lines, K.n)
        return K

    @classmethod
    def whole_space(cls, n):
        return cls.from_halfspaces(None, None, n=n)

    @classmethod
    def zero(cls, n):
        return cls.from_generators(None, None, n=n)

    @property
    def has_halfspace(self):
        return self.G is not None

    @property
    def has_generators(self):
        return self.rays is not None

    def ensure_halfspace(self):
        if self.G is None:
            G, H = cone_halfspaces_from_generators(self.rays, self.lines)
            self.G, self.H = G, H
        return self.G, self.H

    def ensure_generators(self):
        if self.rays is None:
            rays, lines = cone_generators_from_halfspaces(self.G, self.H)
            self.rays, self.lines = rays, lines
        return self.rays, self.lines

    def contains(self, u, tol=1e-9):
        u = np.asarray(u, dtype=float)
        scale = 1.0 + float(np.linalg.norm(u))
        if self.G is not None:
            ok = True
            if self.G.shape[0]:
                ok = ok and float(np.max(self.G @ u)) <= tol * scale
            if self.H.shape[0]:
                ok = ok and float(np.max(np.abs(self.H @ u))) <= tol * scale
            return ok
        return self._contains_by_lp(u, tol * scale)

    def _contains_by_lp(self, u, tol):
        R, L = self.rays, self.lines
        nr, nl = R.shape[0], L.shape[0]
        n = self.n
        # minimize L1 residual of u = R^T w + L^T c, w >= 0
        ncols = nr + nl + 2 * n
        A = np.zeros((n, ncols))
        if nr:
            A[:, :nr] = R.T
        if nl:
            A[:, nr:nr + nl] = L.T
        A[:, nr + nl:nr + nl + n] = np.eye(n)
        A[:, nr + nl + n:] = -np.eye(n)
        c = np.zeros(ncols)
        c[nr + nl:] = 1.0
        bounds = [(0.0, None)] * nr + [(None, None)] * nl + [(0.0, None)] * (2 * n)
        sol = lp_solve(LPProblem(c=c, A=A, b=u, senses=["="] * n, bounds=bounds))
        return sol.status == OPTIMAL and sol.objective <= tol

    def polar(self):
        """Standard cone duality: generators become halfspaces and vice versa."""
        out = PolyhedralCone(self.n)
        if self.rays is not None:
            out.G = self.rays.copy()
            out.H = self.lines.copy()
        if self.G is not None:
            out.rays = self.G.copy()
            out.lines = self.H.copy()
        return out

    def validate_forms(self, tol=1e-7):
        """Cross-check the two representations when both are populated.

        Every generator must satisfy the halfspace form, and the halfspace
        form must not cut anything off the generated cone (tested by LP
        membership of the halfspace form's own generators).
        """
        if self.G is None or self.rays is None:
            return True
        half = PolyhedralCone.from_halfspaces(self.G, self.H, n=self.n)
        gen = PolyhedralCone.from_generators(self.rays, self.lines, n=self.n)
        for r in self.rays:
            if not half.contains(r, tol):
                return False
        for l in self.lines:
            if not (half.contains(l, tol) and half.contains(-l, tol)):
                return False
        hrays, hlines = cone_generators_from_halfspaces(self.G, self.H)
        for r in hrays:
            if not gen.contains(r, tol):
                return False
        for l in hlines:
            if not (gen.contains(l, tol) and gen.contains(-l, tol)):
                return False
        return True

    def same_set(self, other, tol=1e-7):
        """Mutual membership of generators (and +/- lines) in both cones."""
        for a, b in ((self, other), (other, self)):
            rays, lines = a.ensure_generators()
            for r in rays:
                if not b.contains(r, tol):
                    return False
            for l in lines:
                if not (b.contains(l, tol) and b.contains(-l, tol)):
                    return False
        return True

    def __repr__(self):
        forms = []
        if self.G is not None:
            forms.append(f"G{self.G.shape}")
        if self.rays is not None:
            forms.append(f"rays{self.rays.shape}")
        return f"PolyhedralCone(n={self.n}, {', '.join(forms)})"


def _orth_complement_within(NH, L):
    """Orthonormal basis of span(NH) ∩ span(L)^perp."""
    if NH.shape[1] == 0:
        return NH
    B = NH
    if L.shape[1]:
        B = NH - L @ (L.T @ NH)
    U, s, _ = np.linalg.svd(B, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * max(1.0, s[0] if len(s) else 1.0)))
    return U[:, :rank]


def _pointed_cone_rays(Gr, tol=1e-9):
    """Extreme rays of the pointed cone {w : Gr w <= 0} in R^d."""
    p, d = Gr.shape
    scale = 1.0 + float(np.max(np.abs(Gr))) if Gr.size else 1.0
    feas_tol = tol * scale
    if d == 1:
        out = []
        for w in (np.array([1.0]), np.array([-1.0])):
            if p == 0 or float(np.max(Gr @ w)) <= feas_tol:
                out.append(w)
        return out
    if p < d - 1:
        return []  # not pointed unless trivial; lineality was stripped upstream
    if comb(p, d - 1) > _MAX_RAY_SUBSETS:
        raise VarcertError(f"cone conversion too large: C({p},{d-1}) facet subsets")
    seen = {}
    for S in combinations(range(p), d - 1):
        M = Gr[list(S)]
        U, s, Vt = np.linalg.svd(M)
        if len(s) and s[-1] <= 1e-9 * max(1.0, s[0]):
            continue  # rows dependent: null dimension > 1
        w = Vt[-1]
        for cand in (w, -w):
            if float(np.max(Gr @ cand)) <= feas_tol:
                key = tuple(np.round(cand / np.linalg.norm(cand), 9))
                seen.setdefault(key, cand / np.linalg.norm(cand))
                break
    return list(seen.values())


def cone_generators_from_halfspaces(G, H):
    """(rays, lines) with cone{rays} + span{lines} = {u : G u <= 0, H u = 0}."""
    n = G.shape[1] if G is not None and np.asarray(G).size else np.atleast_2d(H).shape[1]
    G = _as_matrix(G, n)
    H = _as_matrix(H, n)
    stacked = np.vstack([G, H])
    L = nullspace(stacked)  # lineality space
    NH = nullspace(H)
    B = _orth_complement_within(NH, L)
    d = B.shape[1]
    lines = L.T.copy()
    if d == 0:
        return np.zeros((0, n)), lines
    Gr = G @ B
    # drop zero rows of the reduced system (vacuous constraints on this subspace)
    keep = np.linalg.norm(Gr, axis=1) > 1e-12 if Gr.shape[0] else np.zeros(0, dtype=bool)
    Gr = Gr[keep]
    if Gr.shape[0] == 0:
        # the whole subspace is free: fold it into the lineality part
        return np.zeros((0, n)), np.vstack([lines, B.T]) if lines.size else B.T.copy()
    rays_red = _pointed_cone_rays(Gr)
    rays = np.array([B @ w for w in rays_red]) if rays_red else np.zeros((0, n))
    return rays, lines


def cone_halfspaces_from_generators(rays, lines):
    """(G, H) with {u : G u <= 0, H u = 0} = cone{rays} + span{lines}."""
    n = rays.shape[1] if rays is not None and np.asarray(rays).size else np.atleast_2d(lines).shape[1]
    rays = _as_matrix(rays, n)
    lines = _as_matrix(lines, n)
    # polar cone in halfspace form, then its generators are our halfspaces
    polar_rays, polar_lines = cone_generators_from_halfspaces(rays, lines)
    return polar_rays, polar_lines


def tangent_cone(P: Polyhedron, x, tol_active=TOL_ACTIVE, tol_feas=TOL_FEAS) -> PolyhedralCone:
    """Contingent cone of a polyhedron: active rows become homogeneous halfspaces."""
    if not P.contains(x, tol_feas):
        raise NotMemberError(f"point has residual {P.residual(x):.3e}")
    act = P.active_rows(x, tol_active)
    G = P.A_ineq[act] if act else np.zeros((0, P.n))
    return PolyhedralCone.from_halfspaces(G, P.A_eq.copy(), n=P.n)


def normal_cone(P: Polyhedron, x, tol_active=TOL_ACTIVE, tol_feas=TOL_FEAS) -> PolyhedralCone:
    """Polar of the tangent cone: generated by active inequality rows + span of equality rows."""
    if not P.contains(x, tol_feas):
        raise NotMemberError(f"point has residual {P.residual(x):.3e}")
    act = P.active_rows(x, tol_active)
    rays = P.A_ineq[act] if act else np.zeros((0, P.n))
    return PolyhedralCone.from_generators(rays, P.A_eq.copy(), n=P.n)


# ---------------------------------------------------------------------------
# projections

def _dykstra(rows, z, max_iter, move_tol):
    """Dykstra's alternating projections onto halfspaces/hyperplanes."""
    x = np.asarray(z, dtype=float).copy()
    if not rows:
        return x, 0
    corrections = [np.zeros_like(x) for _ in rows]
    for it in range(max_iter):
        x_prev = x.copy()
        for i, (a, b, is_eq, aa) in enumerate(rows):
            y = x + corrections[i]
            viol = float(a @ y - b)
            if is_eq or viol > 0.0:
                x = y - a * (viol / aa)
            else:
                x = y
            corrections[i] = y - x
        if float(np.max(np.abs(x - x_prev))) < move_tol:
            return x, it + 1
    raise NonConvergenceError(max_iter, "Dykstra projection")


def _rows_of(P: Polyhedron):
    rows = []
    for a, b in zip(P.A_ineq, P.b_ineq):
        aa = float(a @ a)
        if aa > 0.0:
            rows.append((a, float(b), False, aa))
    for a, b in zip(P.A_eq, P.b_eq):
        aa = float(a @ a)
        if aa > 0.0:
            rows.append((a, float(b), True, aa))
    return rows


def project(P: Polyhedron, z, max_iter=DYKSTRA_MAX_ITER, move_tol=DYKSTRA_MOVE_TOL):
    """Euclidean projection onto P and the distance, by Dykstra's iteration.

    The shortcut requires exact membership: rounding tol-level distances
    to zero would hide sub-tolerance infeasibility from polishing loops.
    """
    z = np.asarray(z, dtype=float)
    if P.residual(z) <= 0.0:
        return z.copy(), 0.0
    if P.is_empty():
        raise EmptySetError("cannot project onto an empty polyhedron")
    x, _ = _dykstra(_rows_of(P), z, max_iter, move_tol)
    return x, float(np.linalg.norm(z - x))


def dist(P: Polyhedron, z) -> float:
    return project(P, z)[1]


def project_cone(K: PolyhedralCone, z, max_iter=DYKSTRA_MAX_ITER, move_tol=DYKSTRA_MOVE_TOL):
    """Euclidean projection onto a polyhedral cone via its halfspace form."""
    G, H = K.ensure_halfspace()
    rows = []
    for a in G:
        aa = float(a @ a)
        if aa > 0.0:
            rows.append((a, 0.0, False, aa))
    for a in H:
        aa = float(a @ a)
        if aa > 0.0:
            rows.append((a, 0.0, True, aa))
    z = np.asarray(z, dtype=float)
    sat = all(float(a @ z) <= 1e-14 for a, _, is_eq, _ in rows if not is_eq) and all(
        abs(float(a @ z)) <= 1e-14 for a, _, is_eq, _ in rows if is_eq
    )
    if sat:
        return z.copy(), 0.0
    x, _ = _dykstra(rows, z, max_iter, move_tol)
    return x, float(np.linalg.norm(z - x))


def dist_to_cone(K: PolyhedralCone, z) -> float:
    return project_cone(K, z)[1]


# ---------------------------------------------------------------------------
# sampled sets and derivability

class SampledSetOracle:
    """Nonconvex set access: feasibility callback plus local projection by penalty descent.

    ``violation(x) >= 0`` vanishes exactly on the set (typically
    dist(f(x); Theta)).  ``grad_sq`` is the gradient of violation**2; if
    omitted it is approximated by central differences.  ``dist_fn``
    overrides the distance estimate when an exact formula is available.
    """

    def __init__(self, violation, grad_sq=None, dist_fn=None, project_fn=None,
                 tol_feas=TOL_FEAS, mus=(1e2, 1e4, 1e6)):
        self.violation = violation
        self.grad_sq = grad_sq
        self.dist_fn = dist_fn
        self.project_fn = project_fn
        self.tol_feas = tol_feas
        self.mus = tuple(mus)

    def feasible(self, x):
        return self.violation(np.asarray(x, dtype=float)) <= self.tol_feas

    def _grad_sq(self, x):
        if self.grad_sq is not None:
            return self.grad_sq(x)
        h = 1e-7
        g = np.zeros(len(x))
        for i in range(len(x)):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            g[i] = (self.violation(xp) ** 2 - self.violation(xm) ** 2) / (2 * h)
        return g

    def project(self, z, steps=60):
        """Approximate nearest feasible point by graduated penalty descent."""
        z = np.asarray(z, dtype=float)
        if self.project_fn is not None:
            return np.asarray(self.project_fn(z), dtype=float)
        if self.feasible(z):
            return z.copy()
        x = z.copy()
        for mu in self.mus:
            def fval(p):
                return float(np.dot(p - z, p - z)) + mu * self.violation(p) ** 2

            fx = fval(x)
            t = 1.0  # adaptive: grows on acceptance, halves on rejection
            for _ in range(steps):
                g = 2.0 * (x - z) + mu * self._grad_sq(x)
                gn = float(np.linalg.norm(g))
                if gn < 1e-12:
                    break
                accepted = False
                for _ in range(60):
                    xn = x - t * g
                    fn = fval(xn)
                    if fn <= fx - 1e-4 * t * gn * gn:
                        x, fx = xn, fn
                        accepted = True
                        t *= 2.0
                        break
                    t *= 0.5
                if not accepted:
                    break
            if self.violation(x) <= self.tol_feas:
                break
        return x

    def dist(self, z):
        z = np.asarray(z, dtype=float)
        if self.dist_fn is not None:
            return float(self.dist_fn(z))
        if self.feasible(z):
            return 0.0
        x = self.project(z)
        return float(np.linalg.norm(z - x))


def default_t_grid(t0=1e-2, rho=0.5, levels=20):
    return [t0 * rho ** j for j in range(levels)]


@dataclass
class DerivabilityReport:
    ratios: list
    max_tail_ratio: float
    passed: bool
    tol: float
    t_grid: list


def derivability_check(target, x, u, t_grid=None, tol_deriv=1e-6, tail=5) -> DerivabilityReport:
    """Verify dist(x + t u; set)/t -> 0 along a geometric grid.

    ``target`` is a Polyhedron (the direction must then lie in the tangent
    cone), a PolyhedralCone, or a SampledSetOracle.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if t_grid is None:
        t_grid = default_t_grid()
    if isinstance(target, Polyhedron):
        if not tangent_cone(target, x).contains(u, 1e-7):
            raise NotMemberError("direction is outside the tangent cone")
        dist_fn = lambda z: dist(target, z)
    elif isinstance(target, PolyhedralCone):
        dist_fn = lambda z: dist_to_cone(target, z)
    elif isinstance(target, SampledSetOracle):
        dist_fn = target.dist
    else:
        dist_fn = target  # plain distance callable
    ratios = [dist_fn(x + t * u) / t for t in t_grid]
    tail_vals = ratios[-tail:]
    max_tail = float(max(tail_vals))
    return DerivabilityReport(ratios=ratios, max_tail_ratio=max_tail,
                              passed=max_tail <= tol_deriv, tol=tol_deriv, t_grid=list(t_grid))
