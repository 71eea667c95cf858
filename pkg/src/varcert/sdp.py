"""Semidefinite programs: min objective(x) s.t. Phi(x) <= 0 (PSD order), Psi(x) = 0.

Feasibility is the largest eigenvalue sigma^+(Phi(x)) plus the max-entry
norm of Psi(x).  Multiplier recovery places rank-one atoms s_i s_i^T on
the kernel of Phi(xbar) (complementarity forces them there) and solves an
LP for the weights, with the bound sum(lambda) + sum|mu_ij| <= 2 kappa
||grad objective||.  For m <= 3 the problem cross-validates against its
sphere-parameterized semi-infinite reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr as expr_mod
from .certify import Certificate, TOL_BOUND, TOL_STAT
from .errors import (
    DimensionMismatchError,
    DimensionTooLargeError,
    InfeasiblePointError,
    NoMultiplierError,
    NotUnitError,
)
from .geometry import TOL_FEAS
from .sip import SIProblem, caratheodory_reduce
from .solvers import OPTIMAL, LPProblem, eigh, lp_solve

REFUTED = "REFUTED"
VERIFIED = "VERIFIED"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class SDProblem:
    n: int
    objective: expr_mod.Expr
    Phi: list  # m x m Expr grid, symmetric by construction
    Psi: list = None

    @classmethod
    def from_strings(cls, n, objective, Phi, Psi=None):
        """Build from string matrices; only the upper triangle is read, mirrored."""
        xnames = [f"x{i+1}" for i in range(n)]
        obj = expr_mod.parse(objective, xnames)

        def build(mat):
            if mat is None:
                return None
            m = len(mat)
            grid = [[None] * m for _ in range(m)]
            for i in range(m):
                if len(mat[i]) != m:
                    raise DimensionMismatchError("matrix of expressions must be square")
                for j in range(i, m):
                    grid[i][j] = expr_mod.parse(mat[i][j], xnames)
                    grid[j][i] = grid[i][j]
            return grid

        return cls(n=n, objective=obj, Phi=build(Phi), Psi=build(Psi))

    @property
    def m(self):
        return len(self.Phi)

    def grad_objective(self, x):
        return expr_mod.grad(self.objective, x)

    def phi_value(self, x) -> np.ndarray:
        m = self.m
        A = np.zeros((m, m))
        for i in range(m):
            for j in range(i, m):
                A[i, j] = A[j, i] = expr_mod.evaluate(self.Phi[i][j], x)
        return A

    def psi_value(self, x) -> np.ndarray:
        if self.Psi is None:
            return None
        m = len(self.Psi)
        A = np.zeros((m, m))
        for i in range(m):
            for j in range(i, m):
                A[i, j] = A[j, i] = expr_mod.evaluate(self.Psi[i][j], x)
        return A


@dataclass
class FeasibilityReport:
    sigma_plus: float
    psi_max: float
    feasible: bool


def feasibility(p: SDProblem, x, tol_feas=TOL_FEAS) -> FeasibilityReport:
    """sigma^+(Phi(x)) from the eigensolver plus the max-entry norm of Psi(x)."""
    A = p.phi_value(np.asarray(x, dtype=float))
    w, _ = eigh(A)
    sigma_plus = max(0.0, float(w[0]))
    psi_max = 0.0
    B = p.psi_value(np.asarray(x, dtype=float))
    if B is not None:
        psi_max = float(np.max(np.abs(B)))
    return FeasibilityReport(sigma_plus=sigma_plus, psi_max=psi_max,
                             feasible=sigma_plus <= tol_feas and psi_max <= tol_feas)


def grad_quadform(p: SDProblem, x, s) -> np.ndarray:
    """j-th component <s, (dPhi/dx_j)(x) s>, via entrywise expression gradients."""
    s = np.asarray(s, dtype=float)
    if abs(float(np.linalg.norm(s)) - 1.0) > 1e-10:
        raise NotUnitError(f"atom has norm {np.linalg.norm(s):.12f}")
    x = np.asarray(x, dtype=float)
    m = p.m
    out = np.zeros(p.n)
    for i in range(m):
        for j in range(i, m):
            weight = s[i] * s[j] * (1.0 if i == j else 2.0)
            if weight != 0.0:
                out += weight * expr_mod.grad(p.Phi[i][j], x)
    return out


def _kernel_atoms(p: SDProblem, xbar, seed):
    A = p.phi_value(xbar)
    w, V = eigh(A)
    tol_ker = 1e-7 * (1.0 + float(np.max(np.abs(w))) if len(w) else 1.0)
    kernel = [V[:, i] for i in range(p.m) if abs(w[i]) <= tol_ker]
    atoms = [v / np.linalg.norm(v) for v in kernel]
    kdim = len(kernel)
    if kdim >= 2:
        rng = np.random.default_rng(seed)
        extra = 3 * math.comb(kdim, 2)
        for _ in range(extra):
            coef = rng.standard_normal(kdim)
            v = sum(c * k for c, k in zip(coef, kernel))
            nv = float(np.linalg.norm(v))
            if nv > 1e-12:
                atoms.append(v / nv)
    return atoms, tol_ker


def certify(p: SDProblem, xbar, kappa, seed=42, tol_stat=TOL_STAT,
            tol_bound=TOL_BOUND) -> Certificate:
    """Eigenvector-atom multiplier certificate with the 2*kappa bound."""
    xbar = np.asarray(xbar, dtype=float)
    rep = feasibility(p, xbar)
    if not rep.feasible:
        raise InfeasiblePointError(
            f"sigma+ {rep.sigma_plus:.3e}, |Psi|max {rep.psi_max:.3e}")
    g0 = p.grad_objective(xbar)
    atoms, tol_ker = _kernel_atoms(p, xbar, seed)
    lam_cols = [grad_quadform(p, xbar, s) for s in atoms]

    psi_entries = []
    psi_cols = []
    psi_costs = []
    if p.Psi is not None:
        mP = len(p.Psi)
        for i in range(mP):
            for j in range(i, mP):
                g = expr_mod.grad(p.Psi[i][j], xbar)
                factor = 1.0 if i == j else 2.0
                psi_entries.append((i, j))
                psi_cols.append(factor * g)
                psi_costs.append(factor)

    n = p.n
    nl = len(lam_cols)
    ne = len(psi_cols)
    ncols = nl + 2 * ne
    A = np.zeros((n, ncols))
    if nl:
        A[:, :nl] = np.array(lam_cols).T
    if ne:
        E = np.array(psi_cols).T
        A[:, nl:nl + ne] = E
        A[:, nl + ne:] = -E
    cost = np.concatenate([np.ones(nl), np.array(psi_costs), np.array(psi_costs)]) \
        if ne else np.ones(nl)
    if ncols == 0:
        if float(np.linalg.norm(g0)) > tol_stat:
            raise NoMultiplierError("no kernel atoms and nonzero objective gradient")
        sol_x = np.zeros(0)
    else:
        sol = lp_solve(LPProblem(c=cost, A=A, b=-g0, senses=["="] * n,
                                 bounds=[(0.0, None)] * ncols))
        if sol.status != OPTIMAL:
            raise NoMultiplierError("stationarity system infeasible over kernel atoms")
        sol_x = sol.x

    # Caratheodory over the combined nonnegative columns (n equations)
    tags = [("s", s) for s in atoms] + [("e+", e) for e in psi_entries] \
        + [("e-", e) for e in psi_entries]
    if ncols:
        mult = caratheodory_reduce(tags, sol_x, A)
    else:
        mult = None
    lam_atoms = []
    mu = {}
    if mult is not None:
        for (tag, payload), wgt in mult.atoms:
            if tag == "s":
                lam_atoms.append((payload, wgt))
            elif tag == "e+":
                mu[payload] = mu.get(payload, 0.0) + wgt
            else:
                mu[payload] = mu.get(payload, 0.0) - wgt

    Abar = p.phi_value(xbar)
    resid = g0.copy()
    total = 0.0
    comp_worst = 0.0
    for s, wgt in lam_atoms:
        resid = resid + wgt * grad_quadform(p, xbar, s)
        total += wgt
        comp_worst = max(comp_worst, abs(float(s @ Abar @ s)) * wgt)
    for (i, j), mij in mu.items():
        factor = 1.0 if i == j else 2.0
        resid = resid + factor * mij * expr_mod.grad(p.Psi[i][j], xbar)
        total += factor * abs(mij)
    residual = float(np.linalg.norm(resid))
    bound_rhs = 2.0 * kappa * float(np.linalg.norm(g0))
    notes = [f"kernel tolerance {tol_ker:.2e}",
             f"complementarity max lambda*<s,Phi s> = {comp_worst:.2e}"]
    if residual > tol_stat:
        status, detail = INCONCLUSIVE, "RESIDUAL"
    elif total > bound_rhs + tol_bound * (1.0 + bound_rhs):
        status, detail = REFUTED, "BOUND_EXCEEDED"
    else:
        status, detail = VERIFIED, None
    return Certificate(
        kind="SDP", status=status, detail=detail, point=xbar,
        atoms=[(np.asarray(s, dtype=float).tolist(), w) for s, w in lam_atoms],
        eq_atoms=[([int(i), int(j)], m_) for (i, j), m_ in mu.items() if m_ != 0.0],
        residual=residual, bound_lhs=total, bound_rhs=bound_rhs, kappa=kappa,
        kappa_source="user-asserted", bound_rule="2*kappa*||grad objective||",
        tolerances={"tol_stat": tol_stat, "tol_bound": tol_bound, "tol_ker": tol_ker},
        seed=seed, notes=notes,
    )


def reduce_to_sip(p: SDProblem) -> SIProblem:
    """Sphere-chart reduction theta(x, angles) = <s(angles), Phi(x) s(angles)>, m <= 3."""
    m = p.m
    if m > 3:
        raise DimensionTooLargeError("sphere chart available only for m <= 3")
    if m == 1:
        comps = ["1"]
        box = [(0.0, 0.0)]
    elif m == 2:
        comps = ["cos(s1)", "sin(s1)"]
        box = [(0.0, math.pi)]
    else:
        comps = ["cos(s1)*sin(s2)", "sin(s1)*sin(s2)", "cos(s2)"]
        box = [(0.0, 2.0 * math.pi), (0.0, math.pi)]
    terms = []
    for i in range(m):
        for j in range(m):
            entry = expr_mod.unparse(p.Phi[i][j])
            terms.append(f"({entry})*({comps[i]})*({comps[j]})")
    theta = " + ".join(terms)
    return SIProblem.from_strings(p.n, expr_mod.unparse(p.objective), theta=theta, S=box)
