"""Extended-real-valued function objects and their pointwise variational data.

Values, subderivatives (analytic where the structure allows, sampled
difference quotients otherwise), Dini-Hadamard subdifferentials,
epi-differentiability and regularity checks, and relative-Lipschitz
estimation.

The sampled subderivative is the independent oracle of the toolkit: at
each level t of a geometric grid it minimizes the difference quotient
over the nominal direction, domain-feasible reprojections of it, and
random perturbations whose radius shrinks like sqrt(t), so that every
candidate direction converges to the nominal one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import (
    DimensionMismatchError,
    InconclusiveError,
    NonConvergenceError,
    NonconvexUnsupportedError,
    NotInDomainError,
)
from . import expr as expr_mod
from .geometry import PolyhedralCone, Polyhedron, normal_cone, project, project_cone, tangent_cone
from .solvers import OPTIMAL, UNBOUNDED, LPProblem, eigh, lp_solve

INF = math.inf


@dataclass
class QuotientSchedule:
    """Geometric t-grid t_j = t0 * rho**j with a spread tolerance on the tail."""

    t0: float = 1e-2
    rho: float = 0.5
    levels: int = 20
    tol_spread: float = 1e-4
    perturbations: int = 8
    radius_scale: float = 1.0  # candidate directions stay within radius_scale*sqrt(t)
    tail: int = 5

    def grid(self):
        return [self.t0 * self.rho ** j for j in range(self.levels)]


@dataclass
class SubderivativeValue:
    value: float
    mode: str  # "analytic" | "sampled"
    diagnostics: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# function objects

class FnObject:
    n: int

    # Functions whose values carry absolute tolerances (polyhedron membership,
    # Dykstra projections) cannot be sampled at arbitrarily small t: the
    # tolerance divided by t swamps the quotient.  Such objects floor the grid.
    t_floor = 0.0

    def value(self, x) -> float:
        raise NotImplementedError

    def dom_pieces(self):
        """Polyhedral pieces whose union is dom(fn), or None when finite everywhere."""
        return None

    def _check(self, x):
        if len(x) != self.n:
            raise DimensionMismatchError(f"point has length {len(x)}, function expects {self.n}")


class SmoothFn(FnObject):
    """Expression-backed continuously differentiable function."""

    def __init__(self, e, n=None, var_names=None):
        if isinstance(e, str):
            if var_names is None:
                var_names = [f"x{i+1}" for i in range(n)]
            e = expr_mod.parse(e, var_names)
        self.e = e
        self.n = n if n is not None else getattr(e, "_nvars")
        self.var_names = var_names

    def value(self, x):
        self._check(x)
        return expr_mod.evaluate(self.e, x)

    def gradient(self, x):
        self._check(x)
        return expr_mod.grad(self.e, x)


class OracleFn(FnObject):
    """Black-box function; all variational data is sampled."""

    def __init__(self, fn, n, dom=None, candidate_fn=None, t_floor=0.0):
        self.fn = fn
        self.n = n
        self._dom = dom
        self.candidate_fn = candidate_fn
        self.t_floor = t_floor

    def value(self, x):
        self._check(x)
        return float(self.fn(np.asarray(x, dtype=float)))

    def dom_pieces(self):
        return self._dom


class IndicatorFn(FnObject):
    """0 on the polyhedron, +inf off it."""

    t_floor = 1e-6

    def __init__(self, P: Polyhedron):
        self.P = P
        self.n = P.n

    def value(self, x):
        self._check(x)
        return 0.0 if self.P.contains(x) else INF

    def dom_pieces(self):
        return [self.P]


class DistanceFn(FnObject):
    """Euclidean distance to a polyhedron; globally 1-Lipschitz."""

    t_floor = 1e-5

    def __init__(self, P: Polyhedron):
        self.P = P
        self.n = P.n

    def value(self, x):
        self._check(x)
        return project(self.P, x)[1]


@dataclass
class PLQPiece:
    omega: Polyhedron
    B: np.ndarray
    b: np.ndarray
    beta: float

    def quad(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ self.B @ x + self.b @ x + self.beta)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * (self.B @ x) + self.b


class PLQFunction(FnObject):
    """Piecewise linear-quadratic: polyhedral pieces carrying x.Bx + b.x + beta.

    Pieces must agree on overlaps; this is validated by sampling each
    pairwise intersection at construction time.
    """

    t_floor = 1e-6

    def __init__(self, pieces, validate=True, consistency_tol=1e-8, seed=0):
        self.pieces = []
        n = None
        for omega, B, b, beta in pieces:
            if n is None:
                n = omega.n
            elif omega.n != n:
                raise DimensionMismatchError("PLQ pieces live in different spaces")
            B = 0.5 * (np.atleast_2d(np.asarray(B, dtype=float))
                       + np.atleast_2d(np.asarray(B, dtype=float)).T)
            self.pieces.append(PLQPiece(omega, B, np.atleast_1d(np.asarray(b, dtype=float)), float(beta)))
        self.n = n
        self._convex = None
        if validate:
            self._validate_consistency(consistency_tol, seed)

    def _validate_consistency(self, tol, seed):
        rng = np.random.default_rng(seed)
        for i in range(len(self.pieces)):
            for j in range(i + 1, len(self.pieces)):
                inter = Polyhedron.intersection(self.pieces[i].omega, self.pieces[j].omega)
                if inter.is_empty():
                    continue
                center, _ = inter.chebyshev_center()
                probes = [center]
                boxed = Polyhedron.intersection(
                    inter, Polyhedron.box([(c - 1.0, c + 1.0) for c in center]))
                for _ in range(4):
                    sol = lp_solve(LPProblem(
                        c=rng.normal(size=self.n),
                        A=np.vstack([boxed.A_ineq, boxed.A_eq]),
                        b=np.concatenate([boxed.b_ineq, boxed.b_eq]),
                        senses=["<="] * boxed.A_ineq.shape[0] + ["="] * boxed.A_eq.shape[0],
                    ))
                    if sol.status == OPTIMAL:
                        probes.append(sol.x)
                for p in probes:
                    vi, vj = self.pieces[i].quad(p), self.pieces[j].quad(p)
                    if abs(vi - vj) > tol * (1.0 + abs(vi)):
                        raise ValueError(
                            f"PLQ pieces {i} and {j} disagree at {p}: {vi} vs {vj}"
                        )

    def value(self, x):
        self._check(x)
        for piece in self.pieces:
            if piece.omega.contains(x):
                return piece.quad(x)
        return INF

    def dom_pieces(self):
        return [p.omega for p in self.pieces]

    def active_pieces(self, x, tol=geo.TOL_FEAS):
        return [p for p in self.pieces if p.omega.contains(x, tol)]

    def is_convex(self, samples=500, seed=0):
        """B_i all PSD plus sampled midpoint convexity over the domain."""
        if self._convex is not None:
            return self._convex
        ok = True
        for piece in self.pieces:
            w, _ = eigh(piece.B)
            if w[-1] < -1e-9 * (1.0 + abs(w[0])):
                ok = False
                break
        if ok:
            rng = np.random.default_rng(seed)
            pts = self._sample_domain(rng, max(40, samples // 10))
            if len(pts) >= 2:
                for _ in range(samples):
                    a = pts[rng.integers(0, len(pts))]
                    b = pts[rng.integers(0, len(pts))]
                    m = 0.5 * (a + b)
                    vm = self.value(m)
                    if math.isfinite(vm):
                        lhs = vm
                        rhs = 0.5 * (self.value(a) + self.value(b))
                        if lhs > rhs + 1e-9 * (1.0 + abs(rhs)):
                            ok = False
                            break
        self._convex = ok
        return ok

    def _sample_domain(self, rng, count):
        pts = []
        nonempty = [p.omega for p in self.pieces if not p.omega.is_empty()]
        if not nonempty:
            return pts
        centers = []
        for P in nonempty:
            try:
                centers.append(P.chebyshev_center()[0])
            except Exception:
                continue
        for _ in range(count):
            P = nonempty[rng.integers(0, len(nonempty))]
            base = centers[rng.integers(0, len(centers))] if centers else np.zeros(self.n)
            z = base + rng.normal(size=self.n)
            try:
                w, _ = project(P, z)
            except NonConvergenceError:
                continue
            pts.append(w)
        return pts


class ScaledFn(FnObject):
    def __init__(self, inner: FnObject, alpha: float):
        if alpha <= 0:
            raise ValueError("scaling factor must be positive")
        self.inner = inner
        self.alpha = float(alpha)
        self.n = inner.n
        self.t_floor = inner.t_floor

    def value(self, x):
        return self.alpha * self.inner.value(x)

    def dom_pieces(self):
        return self.inner.dom_pieces()


class SumFn(FnObject):
    def __init__(self, f: FnObject, g: FnObject):
        if f.n != g.n:
            raise DimensionMismatchError("sum of functions on different spaces")
        self.f = f
        self.g = g
        self.n = f.n
        self.t_floor = max(f.t_floor, g.t_floor)

    def value(self, x):
        vf = self.f.value(x)
        if not math.isfinite(vf):
            return INF
        vg = self.g.value(x)
        return vf + vg if math.isfinite(vg) else INF

    def dom_pieces(self):
        df, dg = self.f.dom_pieces(), self.g.dom_pieces()
        if df is None:
            return dg
        if dg is None:
            return df
        out = []
        for P in df:
            for Q in dg:
                inter = Polyhedron.intersection(P, Q)
                if not inter.is_empty():
                    out.append(inter)
        return out


class SeparableSumFn(FnObject):
    """theta(y1, y2) = phi(y1) + psi(y2) on the product space."""

    def __init__(self, phi: FnObject, psi: FnObject):
        self.phi = phi
        self.psi = psi
        self.n = phi.n + psi.n
        self.t_floor = max(phi.t_floor, psi.t_floor)

    def split(self, y):
        y = np.asarray(y, dtype=float)
        return y[: self.phi.n], y[self.phi.n:]

    def value(self, y):
        self._check(y)
        y1, y2 = self.split(y)
        v1 = self.phi.value(y1)
        if not math.isfinite(v1):
            return INF
        v2 = self.psi.value(y2)
        return v1 + v2 if math.isfinite(v2) else INF

    def dom_pieces(self):
        d1, d2 = self.phi.dom_pieces(), self.psi.dom_pieces()
        if d1 is None and d2 is None:
            return None
        d1 = d1 if d1 is not None else [Polyhedron.whole_space(self.phi.n)]
        d2 = d2 if d2 is not None else [Polyhedron.whole_space(self.psi.n)]
        out = []
        for P in d1:
            for Q in d2:
                A_ineq = np.block([
                    [P.A_ineq, np.zeros((P.A_ineq.shape[0], Q.n))],
                    [np.zeros((Q.A_ineq.shape[0], P.n)), Q.A_ineq],
                ])
                b_ineq = np.concatenate([P.b_ineq, Q.b_ineq])
                A_eq = np.block([
                    [P.A_eq, np.zeros((P.A_eq.shape[0], Q.n))],
                    [np.zeros((Q.A_eq.shape[0], P.n)), Q.A_eq],
                ])
                b_eq = np.concatenate([P.b_eq, Q.b_eq])
                out.append(Polyhedron(A_ineq, b_ineq, A_eq, b_eq, n=self.n))
        return out


# ---------------------------------------------------------------------------
# subdifferential sets

class SubdifferentialSet:
    """Finitely represented convex subdifferential candidates.

    kinds: "polyhedral" (V-rep: vertices + rays + lines), "cone_cap_ball"
    (polyhedral cone intersected with a norm ball, as for distance
    functions), "mapped_ball" (adjoint image of a cone_cap_ball),
    "hrep" (outer polyhedral approximation from sampled subderivatives),
    and "empty".
    """

    def __init__(self, kind, n, vertices=None, rays=None, lines=None,
                 cone=None, radius=None, JT=None, hrep=None, flags=None):
        self.kind = kind
        self.n = n
        self.vertices = vertices
        self.rays = rays
        self.lines = lines
        self.cone = cone
        self.radius = radius
        self.JT = JT
        self.hrep = hrep
        self.flags = list(flags or [])

    # ---- constructors -------------------------------------------------
    @classmethod
    def singleton(cls, g):
        g = np.atleast_1d(np.asarray(g, dtype=float))
        return cls("polyhedral", len(g), vertices=g.reshape(1, -1),
                   rays=np.zeros((0, len(g))), lines=np.zeros((0, len(g))))

    @classmethod
    def polytope(cls, vertices, rays=None, lines=None):
        V = np.atleast_2d(np.asarray(vertices, dtype=float))
        n = V.shape[1]
        R = np.zeros((0, n)) if rays is None else np.atleast_2d(np.asarray(rays, dtype=float))
        L = np.zeros((0, n)) if lines is None else np.atleast_2d(np.asarray(lines, dtype=float))
        if R.size == 0:
            R = R.reshape(0, n)
        if L.size == 0:
            L = L.reshape(0, n)
        return cls("polyhedral", n, vertices=V, rays=R, lines=L)

    @classmethod
    def from_cone(cls, K: PolyhedralCone):
        rays, lines = K.ensure_generators()
        return cls.polytope(np.zeros((1, K.n)), rays, lines)

    @classmethod
    def cone_cap_ball(cls, K: PolyhedralCone, radius):
        return cls("cone_cap_ball", K.n, cone=K, radius=float(radius))

    @classmethod
    def empty(cls, n):
        return cls("empty", n)

    @classmethod
    def from_hrep(cls, P: Polyhedron, flags=None):
        return cls("hrep", P.n, hrep=P, flags=flags)

    # ---- queries --------------------------------------------------------
    def is_empty(self):
        if self.kind == "empty":
            return True
        if self.kind == "hrep":
            return self.hrep.is_empty()
        return False

    def support(self, u) -> float:
        """sup { <v, u> : v in set }; -inf if the set is empty."""
        u = np.asarray(u, dtype=float)
        scale = 1.0 + float(np.linalg.norm(u))
        if self.kind == "empty":
            return -INF
        if self.kind == "polyhedral":
            if self.rays.shape[0] and float(np.max(self.rays @ u)) > 1e-9 * scale:
                return INF
            if self.lines.shape[0] and float(np.max(np.abs(self.lines @ u))) > 1e-9 * scale:
                return INF
            return float(np.max(self.vertices @ u))
        if self.kind == "cone_cap_ball":
            pk, _ = project_cone(self.cone, u)
            return self.radius * float(np.linalg.norm(pk))
        if self.kind == "mapped_ball":
            J = self.JT.T
            pk, _ = project_cone(self.cone, J @ u)
            return self.radius * float(np.linalg.norm(pk))
        if self.kind == "hrep":
            P = self.hrep
            m = P.A_ineq.shape[0] + P.A_eq.shape[0]
            if m == 0:
                return INF
            sol = lp_solve(LPProblem(
                c=-u,
                A=np.vstack([P.A_ineq, P.A_eq]),
                b=np.concatenate([P.b_ineq, P.b_eq]),
                senses=["<="] * P.A_ineq.shape[0] + ["="] * P.A_eq.shape[0],
            ))
            if sol.status == UNBOUNDED:
                return INF
            if sol.status != OPTIMAL:
                return -INF
            return -sol.objective
        raise ValueError(self.kind)

    def contains(self, v, tol=1e-8) -> bool:
        v = np.asarray(v, dtype=float)
        if self.kind == "empty":
            return False
        if self.kind == "hrep":
            return self.hrep.contains(v, tol)
        if self.kind == "cone_cap_ball":
            return self.cone.contains(v, tol) and float(np.linalg.norm(v)) <= self.radius + tol
        if self.kind == "mapped_ball":
            lam = self._preimage_multiplier(v, tol)
            return lam is not None and float(np.linalg.norm(lam)) <= self.radius + tol
        # polyhedral V-rep: L1-residual LP over a convex + conic combination
        V, R, L = self.vertices, self.rays, self.lines
        k, r, l = V.shape[0], R.shape[0], L.shape[0]
        n = self.n
        ncols = k + r + l + 2 * n
        A = np.zeros((n + 1, ncols))
        A[:n, :k] = V.T
        if r:
            A[:n, k:k + r] = R.T
        if l:
            A[:n, k + r:k + r + l] = L.T
        A[:n, k + r + l:k + r + l + n] = np.eye(n)
        A[:n, k + r + l + n:] = -np.eye(n)
        A[n, :k] = 1.0
        b = np.concatenate([v, [1.0]])
        c = np.zeros(ncols)
        c[k + r + l:] = 1.0
        bounds = [(0.0, None)] * (k + r) + [(None, None)] * l + [(0.0, None)] * (2 * n)
        sol = lp_solve(LPProblem(c=c, A=A, b=b, senses=["="] * (n + 1), bounds=bounds))
        return sol.status == OPTIMAL and sol.objective <= tol * (1.0 + float(np.linalg.norm(v)))

    def _preimage_multiplier(self, v, tol):
        """Minimal-1-norm lambda in the cone with JT lambda = v, or None."""
        rays, lines = self.cone.ensure_generators()
        r, l = rays.shape[0], lines.shape[0]
        m = self.cone.n
        n = self.n
        ncols = r + 2 * l + 2 * n
        A = np.zeros((n, ncols))
        if r:
            A[:, :r] = self.JT @ rays.T
        if l:
            A[:, r:r + l] = self.JT @ lines.T
            A[:, r + l:r + 2 * l] = -(self.JT @ lines.T)
        A[:, r + 2 * l:r + 2 * l + n] = np.eye(n)
        A[:, r + 2 * l + n:] = -np.eye(n)
        c = np.zeros(ncols)
        c[:r + 2 * l] = 1.0
        c[r + 2 * l:] = 1e6  # residual strongly penalized
        sol = lp_solve(LPProblem(c=c, A=A, b=np.asarray(v, dtype=float), senses=["="] * n,
                                 bounds=[(0.0, None)] * ncols))
        if sol.status != OPTIMAL:
            return None
        resid = float(np.sum(sol.x[r + 2 * l:]))
        if resid > tol * (1.0 + float(np.linalg.norm(v))):
            return None
        w = sol.x
        lam = np.zeros(m)
        if r:
            lam += rays.T @ w[:r]
        if l:
            lam += lines.T @ (w[r:r + l] - w[r + l:r + 2 * l])
        return lam

    def sample(self, count, seed=0):
        """Random elements of the set (for membership-style property tests)."""
        rng = np.random.default_rng(seed)
        out = []
        if self.kind == "polyhedral":
            V, R, L = self.vertices, self.rays, self.lines
            out.extend(list(V))
            for _ in range(count):
                w = rng.dirichlet(np.ones(V.shape[0])) if V.shape[0] > 1 else np.ones(1)
                v = V.T @ w
                if R.shape[0]:
                    v = v + R.T @ (rng.random(R.shape[0]) * rng.random())
                if L.shape[0]:
                    v = v + L.T @ rng.normal(size=L.shape[0], scale=0.5)
                out.append(v)
        elif self.kind == "cone_cap_ball":
            rays, lines = self.cone.ensure_generators()
            for _ in range(count):
                v = np.zeros(self.n)
                if rays.shape[0]:
                    v = rays.T @ rng.random(rays.shape[0])
                if lines.shape[0]:
                    v = v + lines.T @ rng.normal(size=lines.shape[0])
                nv = float(np.linalg.norm(v))
                if nv > 0:
                    v = v * (self.radius * rng.random() / nv)
                out.append(v)
        elif self.kind == "hrep":
            if not self.hrep.is_empty():
                center, _ = self.hrep.chebyshev_center()
                out.append(center)
                for _ in range(count):
                    w, _ = project(self.hrep, center + rng.normal(size=self.n))
                    out.append(w)
        return out

    # ---- algebra --------------------------------------------------------
    def map_adjoint(self, JT):
        """Image under v -> JT v (the adjoint of the inner Jacobian)."""
        JT = np.atleast_2d(np.asarray(JT, dtype=float))
        if self.kind == "polyhedral":
            return SubdifferentialSet.polytope(
                self.vertices @ JT.T,
                self.rays @ JT.T if self.rays.shape[0] else np.zeros((0, JT.shape[0])),
                self.lines @ JT.T if self.lines.shape[0] else np.zeros((0, JT.shape[0])),
            )
        if self.kind == "cone_cap_ball":
            out = SubdifferentialSet("mapped_ball", JT.shape[0], cone=self.cone,
                                     radius=self.radius, JT=JT)
            return out
        raise NonconvexUnsupportedError(f"cannot map a {self.kind} set through an adjoint")

    def minkowski(self, other):
        if self.kind == "polyhedral" and other.kind == "polyhedral":
            V = np.array([a + b for a in self.vertices for b in other.vertices])
            R = np.vstack([self.rays, other.rays])
            L = np.vstack([self.lines, other.lines])
            return SubdifferentialSet.polytope(V, R, L)
        if other.kind == "polyhedral" and other.vertices.shape[0] == 1 \
                and other.rays.shape[0] == 0 and other.lines.shape[0] == 0:
            return self.translate(other.vertices[0])
        if self.kind == "polyhedral" and self.vertices.shape[0] == 1 \
                and self.rays.shape[0] == 0 and self.lines.shape[0] == 0:
            return other.translate(self.vertices[0])
        raise NonconvexUnsupportedError("Minkowski sum unsupported for these set kinds")

    def translate(self, g):
        g = np.asarray(g, dtype=float)
        if self.kind == "polyhedral":
            return SubdifferentialSet.polytope(self.vertices + g, self.rays, self.lines)
        raise NonconvexUnsupportedError(f"cannot translate a {self.kind} set")

    def scale(self, alpha):
        if alpha <= 0:
            raise ValueError("scale factor must be positive")
        if self.kind == "polyhedral":
            return SubdifferentialSet.polytope(self.vertices * alpha, self.rays, self.lines)
        if self.kind == "cone_cap_ball":
            return SubdifferentialSet.cone_cap_ball(self.cone, self.radius * alpha)
        raise NonconvexUnsupportedError(f"cannot scale a {self.kind} set")

    def interval(self):
        """(lo, hi) in one dimension, via support values."""
        if self.n != 1:
            raise DimensionMismatchError("interval() needs a one-dimensional set")
        return -self.support([-1.0]), self.support([1.0])

    def __repr__(self):
        return f"SubdifferentialSet(kind={self.kind}, n={self.n})"


# ---------------------------------------------------------------------------
# operations

def value(fn: FnObject, x) -> float:
    return fn.value(np.asarray(x, dtype=float))


def _analytic_subderivative(fn, x, u):
    """Analytic directional subderivative, or None when only sampling applies."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if isinstance(fn, SmoothFn):
        if not math.isfinite(fn.value(x)):
            raise NotInDomainError("point outside the smooth function domain")
        return float(fn.gradient(x) @ u)
    if isinstance(fn, IndicatorFn):
        if not fn.P.contains(x):
            raise NotInDomainError("point outside the indicator domain")
        return 0.0 if tangent_cone(fn.P, x).contains(u, 1e-9) else INF
    if isinstance(fn, DistanceFn):
        proj, d = project(fn.P, x)
        if d <= geo.TOL_FEAS:
            return geo.dist_to_cone(tangent_cone(fn.P, proj), u)
        return float((x - proj) @ u / d)
    if isinstance(fn, PLQFunction):
        active = fn.active_pieces(x)
        if not active:
            raise NotInDomainError("point outside the PLQ domain")
        best = INF
        for piece in active:
            if tangent_cone(piece.omega, x).contains(u, 1e-9):
                best = min(best, float(piece.grad(x) @ u))
        return best
    if isinstance(fn, ScaledFn):
        inner = _analytic_subderivative(fn.inner, x, u)
        return None if inner is None else fn.alpha * inner
    if isinstance(fn, SeparableSumFn):
        u1, u2 = fn.split(u)
        x1, x2 = fn.split(x)
        d1 = subderivative(fn.phi, x1, u1).value
        if d1 == INF:
            return INF
        d2 = subderivative(fn.psi, x2, u2).value
        return INF if d2 == INF else d1 + d2
    return None


def subderivative(fn: FnObject, x, u, schedule=None, seed=0) -> SubderivativeValue:
    """Directional subderivative; analytic for structured objects, else sampled."""
    val = _analytic_subderivative(fn, x, u)
    if val is not None:
        return SubderivativeValue(value=val, mode="analytic")
    return subderivative_sampled(fn, x, u, schedule=schedule, seed=seed)


def _level_quotients(fn, x, u, sch: QuotientSchedule, rng):
    """Per-level difference quotients over shrinking candidate direction sets.

    Candidates at level t: the nominal direction, domain reprojections of
    it (x + t u projected onto dom pieces and rescaled), and any
    structural candidates supplied by the function object; all filtered to
    stay within radius_scale*sqrt(t) of the nominal direction so every
    candidate converges to it.  Random perturbations are a feasibility
    rescue only: they are consulted when no structural candidate is
    feasible, which keeps the estimator unbiased on Lipschitz functions
    while still covering indicator-type domains.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    phix = fn.value(x)
    if not math.isfinite(phix):
        raise NotInDomainError("base point outside the domain")
    dom = fn.dom_pieces()
    dom = [P for P in dom if not P.is_empty()] if dom is not None else None
    candidate_fn = getattr(fn, "candidate_fn", None)
    grid = [t for t in sch.grid() if t >= fn.t_floor]
    if not grid:
        grid = sch.grid()[: sch.tail]
    levels = []
    for t in grid:
        radius = sch.radius_scale * math.sqrt(t)
        cands = [u]
        if dom is not None:
            base = x + t * u
            for P in dom:
                try:
                    w, d = project(P, base)
                except NonConvergenceError:
                    continue  # optional candidate; the nominal direction still governs
                if d > 0.0:
                    cands.append((w - x) / t)
        if candidate_fn is not None:
            cands.extend(candidate_fn(x, u, t))
        best = INF
        for k, cand in enumerate(cands):
            cand = np.asarray(cand, dtype=float)
            if k > 0 and float(np.linalg.norm(cand - u)) > radius + 1e-12:
                continue
            v = fn.value(x + t * cand)
            if math.isfinite(v):
                q = (v - phix) / t
                if q < best:
                    best = q
        if best == INF:
            for _ in range(sch.perturbations):
                step = rng.standard_normal(len(u))
                nrm = float(np.linalg.norm(step))
                if nrm == 0:
                    continue
                cand = u + step * (radius * rng.random() / nrm)
                v = fn.value(x + t * cand)
                if math.isfinite(v):
                    q = (v - phix) / t
                    if q < best:
                        best = q
        levels.append(best)
    return levels


def _tail_value(levels, tail):
    tail_vals = levels[-tail:]
    finite = [q for q in tail_vals if math.isfinite(q)]
    if not finite:
        return INF, 0.0
    if len(finite) < len(tail_vals):
        return min(finite), INF
    return min(tail_vals), max(tail_vals) - min(tail_vals)


def subderivative_sampled(fn: FnObject, x, u, schedule=None, seed=0,
                          check_spread=True) -> SubderivativeValue:
    """Difference-quotient estimator of the subderivative along a t-grid.

    This is the independent oracle used to validate analytic paths and
    chain rules; raises InconclusiveError when the quotient tail does
    not settle within the schedule's spread tolerance.
    """
    sch = schedule or QuotientSchedule()
    rng = np.random.default_rng(seed)
    levels = _level_quotients(fn, x, u, sch, rng)
    val, spread = _tail_value(levels, sch.tail)
    diag = {"levels": levels, "spread": spread, "t_grid": sch.grid()}
    if check_spread and spread > sch.tol_spread:
        raise InconclusiveError(val, spread, sch.tol_spread)
    return SubderivativeValue(value=val, mode="sampled", diagnostics=diag)


def subdifferential(fn: FnObject, x) -> SubdifferentialSet:
    """Exact Dini-Hadamard subdifferential for smooth/indicator/convex-PLQ/distance objects."""
    x = np.asarray(x, dtype=float)
    if isinstance(fn, SmoothFn):
        if not math.isfinite(fn.value(x)):
            raise NotInDomainError("point outside the smooth function domain")
        return SubdifferentialSet.singleton(fn.gradient(x))
    if isinstance(fn, IndicatorFn):
        if not fn.P.contains(x):
            raise NotInDomainError("point outside the indicator domain")
        return SubdifferentialSet.from_cone(normal_cone(fn.P, x))
    if isinstance(fn, DistanceFn):
        proj, d = project(fn.P, x)
        if d <= geo.TOL_FEAS:
            return SubdifferentialSet.cone_cap_ball(normal_cone(fn.P, proj), 1.0)
        return SubdifferentialSet.singleton((x - proj) / d)
    if isinstance(fn, PLQFunction):
        if not fn.is_convex():
            raise NonconvexUnsupportedError(
                "nonconvex PLQ: use subderivative membership tests instead"
            )
        active = fn.active_pieces(x)
        if not active:
            raise NotInDomainError("point outside the PLQ domain")
        vertices = np.array([p.grad(x) for p in active])
        N = _union_domain_normal_cone([p.omega for p in active], x)
        rays, lines = N.ensure_generators()
        return SubdifferentialSet.polytope(vertices, rays, lines)
    if isinstance(fn, ScaledFn):
        return subdifferential(fn.inner, x).scale(fn.alpha)
    raise NonconvexUnsupportedError(
        f"no exact subdifferential for {type(fn).__name__}; "
        "test membership via the subderivative inequality"
    )


def _union_domain_normal_cone(omegas, x) -> PolyhedralCone:
    """Normal cone of a union of polyhedra at a common point: polar of the tangent union."""
    n = omegas[0].n
    halfspace_stacks = []
    for om in omegas:
        T = tangent_cone(om, x)
        if T.G.shape[0] == 0 and T.H.shape[0] == 0:
            return PolyhedralCone.zero(n)  # interior point: normal cone {0}
        rays, lines = T.polar().ensure_generators()
        G, H = geo.cone_halfspaces_from_generators(rays, lines)
        halfspace_stacks.append((G, H))
    G = np.vstack([g for g, _ in halfspace_stacks])
    H = np.vstack([h for _, h in halfspace_stacks]) if any(h.shape[0] for _, h in halfspace_stacks) \
        else np.zeros((0, n))
    return PolyhedralCone.from_halfspaces(G, H, n=n)


@dataclass
class EpiDirectionReport:
    direction: np.ndarray
    status: str
    quotients: list
    limsup: float
    liminf: float


@dataclass
class EpiReport:
    status: str
    directions: list


def epi_check(fn: FnObject, x, directions=None, schedule=None, seed=0) -> EpiReport:
    """Path-search check of epi-differentiability.

    Per direction, the best nearby feasible direction is searched at each
    t-level; VERIFIED when the achieved quotients converge (tail limsup
    and liminf agree within the spread tolerance), INCONCLUSIVE otherwise.
    """
    sch = schedule or QuotientSchedule()
    x = np.asarray(x, dtype=float)
    n = fn.n
    if directions is None:
        rng_dirs = np.random.default_rng(seed + 1)
        directions = [e for i in range(n) for e in (np.eye(n)[i], -np.eye(n)[i])]
        for _ in range(6):
            v = rng_dirs.standard_normal(n)
            directions.append(v / np.linalg.norm(v))
    rows = []
    overall = "VERIFIED"
    for u in directions:
        rng = np.random.default_rng(seed)
        levels = _level_quotients(fn, x, np.asarray(u, dtype=float), sch, rng)
        tail = levels[-sch.tail:]
        finite = [q for q in tail if math.isfinite(q)]
        if not finite:
            status, lsup, linf = "VERIFIED", INF, INF  # quotients diverge to +inf
        elif len(finite) < len(tail):
            status, lsup, linf = "INCONCLUSIVE", INF, min(finite)
        else:
            lsup, linf = max(tail), min(tail)
            status = "VERIFIED" if lsup - linf <= sch.tol_spread else "INCONCLUSIVE"
        if status != "VERIFIED":
            overall = "INCONCLUSIVE"
        rows.append(EpiDirectionReport(np.asarray(u, dtype=float), status, levels, lsup, linf))
    return EpiReport(status=overall, directions=rows)


@dataclass
class RegularityReport:
    passed: bool
    max_gap: float
    mode: str
    per_direction: list
    tol: float


def regularity_check(fn: FnObject, x, directions=None, seed=0, tol_reg=1e-5,
                     schedule=None) -> RegularityReport:
    """Compare the support function of the subdifferential with the subderivative.

    Uses the exact subdifferential when available; otherwise builds the
    outer polyhedral approximation {v : <v,u_i> <= d_hat(u_i)} from the
    sampled subderivative on the test directions.
    """
    x = np.asarray(x, dtype=float)
    n = fn.n
    rng = np.random.default_rng(seed)
    if directions is None:
        directions = [e for i in range(n) for e in (np.eye(n)[i], -np.eye(n)[i])]
        while len(directions) < 50:
            v = rng.standard_normal(n)
            directions.append(v / np.linalg.norm(v))
    dvals = []
    for u in directions:
        try:
            dvals.append(subderivative(fn, x, u, schedule=schedule, seed=seed).value)
        except InconclusiveError as exc:
            dvals.append(exc.value)
    try:
        S = subdifferential(fn, x)
        mode = "exact-subdifferential"
    except NonconvexUnsupportedError:
        # outer approximation; inflate by half the pass tolerance so that
        # sampling noise in d_hat cannot spuriously empty the set
        rows, rhs = [], []
        for u, d in zip(directions, dvals):
            if math.isfinite(d):
                rows.append(np.asarray(u, dtype=float))
                rhs.append(d + 0.5 * tol_reg)
        P = Polyhedron(np.array(rows) if rows else None,
                       np.array(rhs) if rhs else None, n=n)
        S = SubdifferentialSet.from_hrep(P, flags=["sampled-outer"])
        mode = "sampled-outer"
    gaps = []
    for u, d in zip(directions, dvals):
        s = S.support(u)
        if d == INF and s == INF:
            gap = 0.0
        elif s == -INF:
            gap = INF  # empty subdifferential against a proper subderivative
        else:
            gap = abs(d - s)
        gaps.append(gap)
    max_gap = float(max(gaps)) if gaps else 0.0
    return RegularityReport(passed=max_gap <= tol_reg, max_gap=max_gap, mode=mode,
                            per_direction=list(zip([np.asarray(u) for u in directions], gaps)),
                            tol=tol_reg)


def rel_lipschitz_estimate(fn: FnObject, x, radius, samples=60, seed=0) -> float:
    """Lower estimate of the relative Lipschitz constant on dom(fn) near x."""
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    n = fn.n
    dom = fn.dom_pieces()
    dom = [P for P in dom if not P.is_empty()] if dom is not None else None
    pts, vals = [], []
    if math.isfinite(fn.value(x)):
        pts.append(x)
        vals.append(fn.value(x))
    for _ in range(samples):
        step = rng.standard_normal(n)
        nrm = float(np.linalg.norm(step))
        if nrm == 0:
            continue
        z = x + step * (radius * rng.random() ** (1.0 / n) / nrm)
        if dom is None:
            v = fn.value(z)
            if math.isfinite(v):
                pts.append(z)
                vals.append(v)
        else:
            P = dom[rng.integers(0, len(dom))]
            try:
                w, _ = project(P, z)
            except NonConvergenceError:
                continue
            if float(np.linalg.norm(w - x)) <= radius + 1e-12:
                v = fn.value(w)
                if math.isfinite(v):
                    pts.append(w)
                    vals.append(v)
    best = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            gap = float(np.linalg.norm(pts[i] - pts[j]))
            if gap > 1e-9:
                best = max(best, abs(vals[i] - vals[j]) / gap)
    return best


# convenience PLQ builders -------------------------------------------------

def plq_abs(n=1):
    """|x| on the line as a two-piece PLQ."""
    pos = Polyhedron([[-1.0]], [0.0])
    neg = Polyhedron([[1.0]], [0.0])
    return PLQFunction([
        (pos, [[0.0]], [1.0], 0.0),
        (neg, [[0.0]], [-1.0], 0.0),
    ])


def plq_max_of_affine(coeffs, consts):
    """max_i (a_i . x + c_i) as a PLQ with pieces {a_i.x + c_i >= a_j.x + c_j}."""
    A = np.atleast_2d(np.asarray(coeffs, dtype=float))
    c = np.atleast_1d(np.asarray(consts, dtype=float))
    k, n = A.shape
    pieces = []
    for i in range(k):
        rows = []
        rhs = []
        for j in range(k):
            if i == j:
                continue
            rows.append(A[j] - A[i])
            rhs.append(c[i] - c[j])
        omega = Polyhedron(np.array(rows) if rows else None,
                           np.array(rhs) if rhs else None, n=n)
        pieces.append((omega, np.zeros((n, n)), A[i], c[i]))
    return PLQFunction(pieces)
