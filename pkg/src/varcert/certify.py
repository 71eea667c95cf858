"""Stationarity certification for: minimize objective(x) subject to f(x) in Theta.

Three certificate kinds: the primal descent-cone test (no linearized
feasible direction is a descent direction), the dual KKT certificate with
the bounded-multiplier estimate ||lambda|| <= kappa ||grad|| (or ell*kappa
for piecewise objectives), and the exact-penalty cross-check of
objective + ell*kappa*dist(f(.); Theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import calculus as calc
from .errors import (
    DimensionMismatchError,
    InfeasiblePointError,
    NoMultiplierError,
    NonconvexUnsupportedError,
)
from .expr import SmoothMap
from . import funcspace as fs
from .funcspace import (
    INF,
    FnObject,
    IndicatorFn,
    PLQFunction,
    SmoothFn,
    rel_lipschitz_estimate,
)
from .geometry import Polyhedron, project, tangent_cone
from .solvers import OPTIMAL, LPProblem, lp_solve, lp_solve_with_tiebreak

VERIFIED = "VERIFIED"
REFUTED = "REFUTED"
INCONCLUSIVE = "INCONCLUSIVE"

TOL_STAT = 1e-7
TOL_CONE = 1e-8
TOL_BOUND = 1e-6


@dataclass
class ConstrainedProblem:
    objective: FnObject  # SmoothFn or convex PLQFunction
    f: SmoothMap
    Theta: Polyhedron

    def __post_init__(self):
        if self.objective.n != self.f.n:
            raise DimensionMismatchError("objective and constraint map disagree on n")
        if self.Theta.n != self.f.m:
            raise DimensionMismatchError("Theta must live in the image space of f")

    @property
    def n(self):
        return self.f.n

    @property
    def m(self):
        return self.f.m


@dataclass
class Certificate:
    kind: str
    status: str
    detail: str = None
    point: np.ndarray = None
    multipliers: np.ndarray = None
    generator_weights: np.ndarray = None
    eq_weights: np.ndarray = None
    atoms: list = None
    eq_atoms: list = None
    residual: float = None
    bound_lhs: float = None
    bound_rhs: float = None
    kappa: float = None
    kappa_source: str = None
    bound_rule: str = None
    descent_witness: np.ndarray = None
    penalty_margin: float = None
    tolerances: dict = field(default_factory=dict)
    seed: int = None
    notes: list = field(default_factory=list)


def _check_feasible(p: ConstrainedProblem, x):
    x = np.asarray(x, dtype=float)
    y = p.f.eval(x)
    if not p.Theta.contains(y):
        raise InfeasiblePointError(
            f"f(x) violates Theta by {p.Theta.residual(y):.3e}"
        )
    return x, y


def _objective_gradients(p: ConstrainedProblem, x):
    """Gradient candidates of the objective at x: one for smooth, the active
    piece gradients (plus a domain-interior requirement) for convex PLQ."""
    if isinstance(p.objective, SmoothFn):
        return [p.objective.gradient(x)], "smooth"
    if isinstance(p.objective, PLQFunction):
        plq = p.objective
        if not plq.is_convex():
            raise NonconvexUnsupportedError("dual certification needs a convex PLQ objective")
        active = plq.active_pieces(x)
        if not active:
            raise InfeasiblePointError("x outside dom(objective)")
        return [piece.grad(x) for piece in active], "plq"
    raise NonconvexUnsupportedError(
        f"objective of type {type(p.objective).__name__} is not certifiable"
    )


def primal_check(p: ConstrainedProblem, xbar, tol_stat=TOL_STAT, seed=42) -> Certificate:
    """No linearized feasible direction descends: min <g,u> over the
    linearized cone (boxed) is >= -tol."""
    xbar, ybar = _check_feasible(p, xbar)
    T = tangent_cone(p.Theta, ybar)
    J = p.f.jacobian(xbar)
    G = T.G @ J if T.G.shape[0] else np.zeros((0, p.n))
    H = T.H @ J if T.H.shape[0] else np.zeros((0, p.n))
    grads, obj_kind = _objective_gradients(p, xbar)
    worst = (0.0, None)
    for gi, g in enumerate(grads):
        rows = [G, H]
        senses = ["<="] * G.shape[0] + ["="] * H.shape[0]
        if obj_kind == "plq":
            # restrict to directions staying in the active piece of the objective
            piece = p.objective.active_pieces(xbar)[gi]
            Tp = tangent_cone(piece.omega, xbar)
            rows += [Tp.G, Tp.H]
            senses += ["<="] * Tp.G.shape[0] + ["="] * Tp.H.shape[0]
        A = np.vstack([M for M in rows if M.shape[0]]) if any(M.shape[0] for M in rows) \
            else np.zeros((0, p.n))
        b = np.zeros(A.shape[0])
        sol = lp_solve(LPProblem(c=g, A=A, b=b, senses=senses[: A.shape[0]],
                                 bounds=[(-1.0, 1.0)] * p.n))
        if sol.status != OPTIMAL:
            continue
        if sol.objective < worst[0]:
            worst = (sol.objective, sol.x)
    opt, witness = worst
    status = VERIFIED if opt >= -tol_stat else REFUTED
    return Certificate(
        kind="Primal", status=status, point=xbar,
        descent_witness=None if status == VERIFIED else witness,
        residual=max(0.0, -opt),
        tolerances={"tol_stat": tol_stat}, seed=seed,
        notes=[f"descent LP optimum {opt:.3e}"],
    )


def _resolve_kappa(p: ConstrainedProblem, xbar, kappa, seed):
    if isinstance(kappa, (int, float)):
        return float(kappa), "user-asserted", []
    comp = calc.Composite(IndicatorFn(p.Theta), p.f, xbar)
    rep = calc.msqc_estimate(comp, seed=seed)
    if rep.verdict == calc.VERIFIED and rep.kappa_hat is not None:
        k = rep.kappa_hat if rep.kappa_hat > 0 else 1.0
        return k, "estimated (sampling-confidence)", [
            f"msqc_estimate kappa_hat={rep.kappa_hat:.4g}"
        ]
    return None, "unavailable", [f"msqc_estimate verdict {rep.verdict}"]


def dual_certificate(p: ConstrainedProblem, xbar, kappa="estimate", seed=42,
                     tol_stat=TOL_STAT, tol_cone=TOL_CONE, tol_bound=TOL_BOUND) -> Certificate:
    """Recover lambda in N_Theta(ybar) with J^T lambda = -g, minimal generator
    weight, and check the bounded-multiplier estimate."""
    xbar, ybar = _check_feasible(p, xbar)
    J = p.f.jacobian(xbar)
    kappa_val, kappa_source, notes = _resolve_kappa(p, xbar, kappa, seed)

    act = p.Theta.active_rows(ybar)
    G_act = p.Theta.A_ineq[act] if act else np.zeros((0, p.m))
    E = p.Theta.A_eq
    r, l = G_act.shape[0], E.shape[0]
    grads, obj_kind = _objective_gradients(p, xbar)

    n = p.n
    if obj_kind == "smooth":
        g = grads[0]
        ncols = r + 2 * l
        if ncols == 0:
            if float(np.linalg.norm(g)) > tol_stat:
                raise NoMultiplierError("normal cone is {0} but the gradient is nonzero")
            lam = np.zeros(p.m)
            w = np.zeros(0)
            ab = np.zeros(0)
        else:
            A = np.zeros((n, ncols))
            if r:
                A[:, :r] = J.T @ G_act.T
            if l:
                A[:, r:r + l] = J.T @ E.T
                A[:, r + l:] = -(J.T @ E.T)
            sol = lp_solve_with_tiebreak(LPProblem(
                c=np.ones(ncols), A=A, b=-g, senses=["="] * n,
                bounds=[(0.0, None)] * ncols,
            ))
            if sol.status != OPTIMAL:
                raise NoMultiplierError("stationarity system infeasible: not dual-stationary")
            w = sol.x[:r]
            ab = sol.x[r:]
            lam = (G_act.T @ w if r else np.zeros(p.m))
            if l:
                lam = lam + E.T @ (sol.x[r:r + l] - sol.x[r + l:])
        grad_used = g
    else:
        # -g for some g in conv{piece gradients} + N_dom: convex-combination variables
        k = len(grads)
        Gm = np.array(grads)  # (k, n)
        Ndom = fs._union_domain_normal_cone(
            [piece.omega for piece in p.objective.active_pieces(xbar)], xbar)
        dr, dl = Ndom.ensure_generators()
        kd, ld = dr.shape[0], dl.shape[0]
        ncols = r + 2 * l + k + kd + 2 * ld
        A = np.zeros((n + 1, ncols))
        off = 0
        if r:
            A[:n, off:off + r] = J.T @ G_act.T
        off += r
        if l:
            A[:n, off:off + l] = J.T @ E.T
            A[:n, off + l:off + 2 * l] = -(J.T @ E.T)
        off += 2 * l
        A[:n, off:off + k] = Gm.T
        A[n, off:off + k] = 1.0  # convex combination
        off += k
        if kd:
            A[:n, off:off + kd] = dr.T
        off += kd
        if ld:
            A[:n, off:off + ld] = dl.T
            A[:n, off + ld:off + 2 * ld] = -dl.T
        b = np.concatenate([np.zeros(n), [1.0]])
        cost = np.zeros(ncols)
        cost[: r + 2 * l] = 1.0
        cap = np.zeros(ncols, dtype=bool)
        cap[: r + 2 * l] = True
        sol = lp_solve_with_tiebreak(LPProblem(
            c=cost, A=A, b=b, senses=["="] * (n + 1), bounds=[(0.0, None)] * ncols,
        ), cap_mask=cap)
        if sol.status != OPTIMAL:
            raise NoMultiplierError("stationarity system infeasible: not dual-stationary")
        w = sol.x[:r]
        ab = sol.x[r:r + 2 * l]
        lam = (G_act.T @ w if r else np.zeros(p.m))
        if l:
            lam = lam + E.T @ (sol.x[r:r + l] - sol.x[r + l:r + 2 * l])
        mu = sol.x[r + 2 * l:r + 2 * l + k]
        grad_used = Gm.T @ mu
        if kd or ld:
            off = r + 2 * l + k
            if kd:
                grad_used = grad_used + dr.T @ sol.x[off:off + kd]
            if ld:
                grad_used = grad_used + dl.T @ (sol.x[off + kd:off + kd + ld]
                                                - sol.x[off + kd + ld:])

    residual = float(np.linalg.norm(grad_used + J.T @ lam))
    bound_lhs = float(np.linalg.norm(lam))
    if obj_kind == "smooth":
        scale = float(np.linalg.norm(grad_used))
        bound_rule = "kappa*||grad objective|| (enhanced estimate)"
    else:
        scale = rel_lipschitz_estimate(p.objective, xbar, radius=0.5, seed=seed)
        bound_rule = "ell*kappa with sampled relative Lipschitz ell"
    bound_rhs = kappa_val * scale if kappa_val is not None else None

    gen_weights = np.zeros(p.Theta.A_ineq.shape[0])
    for idx, i in enumerate(act):
        gen_weights[i] = w[idx] if idx < len(w) else 0.0
    mult_full = lam

    tolerances = {"tol_stat": tol_stat, "tol_cone": tol_cone, "tol_bound": tol_bound}
    if residual > tol_stat:
        return Certificate(kind="DualKKT", status=INCONCLUSIVE, detail="RESIDUAL",
                           point=xbar, multipliers=mult_full, generator_weights=gen_weights,
                           eq_weights=ab if l else None,
                           residual=residual, bound_lhs=bound_lhs, bound_rhs=bound_rhs,
                           kappa=kappa_val, kappa_source=kappa_source, bound_rule=bound_rule,
                           tolerances=tolerances, seed=seed, notes=notes)
    if bound_rhs is None:
        return Certificate(kind="DualKKT", status=INCONCLUSIVE, detail="KAPPA_UNAVAILABLE",
                           point=xbar, multipliers=mult_full, generator_weights=gen_weights,
                           eq_weights=ab if l else None,
                           residual=residual, bound_lhs=bound_lhs, bound_rhs=None,
                           kappa=None, kappa_source=kappa_source, bound_rule=bound_rule,
                           tolerances=tolerances, seed=seed, notes=notes)
    if bound_lhs > bound_rhs + tol_bound * (1.0 + bound_rhs):
        return Certificate(kind="DualKKT", status=REFUTED, detail="BOUND_EXCEEDED",
                           point=xbar, multipliers=mult_full, generator_weights=gen_weights,
                           eq_weights=ab if l else None,
                           residual=residual, bound_lhs=bound_lhs, bound_rhs=bound_rhs,
                           kappa=kappa_val, kappa_source=kappa_source, bound_rule=bound_rule,
                           tolerances=tolerances, seed=seed, notes=notes)
    return Certificate(kind="DualKKT", status=VERIFIED, point=xbar,
                       multipliers=mult_full, generator_weights=gen_weights,
                       eq_weights=ab if l else None,
                       residual=residual, bound_lhs=bound_lhs, bound_rhs=bound_rhs,
                       kappa=kappa_val, kappa_source=kappa_source, bound_rule=bound_rule,
                       tolerances=tolerances, seed=seed, notes=notes)


def exact_penalty_check(p: ConstrainedProblem, xbar, ell=None, kappa=1.0,
                        radius=0.5, samples=200, seed=42) -> Certificate:
    """Sampled test that x -> objective + ell*kappa*dist(f(x);Theta) dips
    no lower than its value at xbar."""
    xbar, ybar = _check_feasible(p, xbar)
    if ell is None:
        if isinstance(p.objective, SmoothFn):
            ell = float(np.linalg.norm(p.objective.gradient(xbar)))
        else:
            ell = rel_lipschitz_estimate(p.objective, xbar, radius=radius, seed=seed)

    def psi(z):
        v = p.objective.value(z)
        if not math.isfinite(v):
            return INF
        return v + ell * kappa * project(p.Theta, p.f.eval(z))[1]

    base = psi(xbar)
    tol = 1e-8 * (1.0 + abs(base))
    rng = np.random.default_rng(seed)
    worst = (0.0, None)
    for _ in range(samples):
        step = rng.standard_normal(p.n)
        nrm = float(np.linalg.norm(step))
        if nrm == 0:
            continue
        z = xbar + step * (radius * rng.random() ** (1.0 / p.n) / nrm)
        gap = psi(z) - base
        if gap < worst[0]:
            worst = (gap, z)
    margin, witness = worst
    if margin >= -tol:
        status, detail = VERIFIED, None
    elif margin < -10 * tol:
        status, detail = REFUTED, "PENALTY_DESCENT"
    else:
        status, detail = INCONCLUSIVE, "MARGINAL"
    return Certificate(kind="ExactPenalty", status=status, detail=detail, point=xbar,
                       penalty_margin=margin,
                       descent_witness=witness if status == REFUTED else None,
                       kappa=kappa, kappa_source="user-asserted",
                       bound_rule=f"ell={ell:.6g}",
                       tolerances={"tol": tol}, seed=seed,
                       notes=[f"{samples} samples at radius {radius}",
                              "sampling-confidence" if status == VERIFIED else "witnessed"])
