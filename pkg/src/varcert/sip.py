"""Semi-infinite programs: min objective(x) s.t. theta(x,s) <= 0 for all s in a box S.

Feasibility is the sup of the constraint over the compact index box
(grid plus projected-gradient polish), multipliers are recovered as
finite atomic measures supported on active indexes, and Caratheodory
pivoting reduces the support to at most n atoms while preserving the
stationarity equation.  Equality families psi(x,t) = 0 are handled by
the two-inequality split with the 2*kappa bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as expr_mod
from .calculus import CQReport, INCONCLUSIVE, REFUTED, VERIFIED, \
    ratio_stability_estimate
from .certify import Certificate, TOL_BOUND, TOL_STAT
from .errors import (
    DimensionMismatchError,
    InfeasiblePointError,
    NoMultiplierError,
)
from .geometry import TOL_ACTIVE, TOL_FEAS, SampledSetOracle
from .solvers import OPTIMAL, LPProblem, lp_solve

DEDUP_RADIUS = 1e-4


def default_density(k):
    return 64 if k <= 2 else 16


@dataclass
class SIProblem:
    n: int
    objective: expr_mod.Expr
    theta: expr_mod.Expr = None  # over x1..xn, s1..sk
    S: list = None  # [(lo, hi)] * k
    psi: expr_mod.Expr = None  # over x1..xn, t1..tk2
    T: list = None

    @classmethod
    def from_strings(cls, n, objective, theta=None, S=None, psi=None, T=None):
        xnames = [f"x{i+1}" for i in range(n)]
        obj = expr_mod.parse(objective, xnames)
        th = None
        if theta is not None:
            k = len(S)
            th = expr_mod.parse(theta, xnames + [f"s{i+1}" for i in range(k)])
        ps = None
        if psi is not None:
            k2 = len(T)
            ps = expr_mod.parse(psi, xnames + [f"t{i+1}" for i in range(k2)])
        prob = cls(n=n, objective=obj, theta=th, S=list(S) if S else None,
                   psi=ps, T=list(T) if T else None)
        prob._validate()
        return prob

    def _validate(self):
        for box in (self.S, self.T):
            if box is not None:
                for lo, hi in box:
                    if lo > hi:
                        raise DimensionMismatchError("index box has lo > hi")

    @property
    def k(self):
        return len(self.S) if self.S is not None else 0

    def grad_objective(self, x):
        return expr_mod.grad(self.objective, x)

    def theta_at(self, x, s):
        return expr_mod.evaluate(self.theta, list(x) + list(s))

    def grad_x_theta(self, x, s):
        g = expr_mod.grad(self.theta, list(x) + list(s))
        return g[: self.n]

    def grad_s_theta(self, x, s):
        g = expr_mod.grad(self.theta, list(x) + list(s))
        return g[self.n:]

    def psi_at(self, x, t):
        return expr_mod.evaluate(self.psi, list(x) + list(t))

    def grad_x_psi(self, x, t):
        g = expr_mod.grad(self.psi, list(x) + list(t))
        return g[: self.n]


def _box_grid(box, density):
    axes = [np.linspace(lo, hi, density) if hi > lo else np.array([lo])
            for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _clip_box(s, box):
    return np.array([min(max(v, lo), hi) for v, (lo, hi) in zip(s, box)])


def _polish_max(value_fn, grad_fn, s0, box, steps=100):
    """Projected-gradient ascent over the box, adaptive step on the raw gradient.

    Unnormalized steps let the step length shrink with the gradient near a
    smooth maximum, which is what delivers the 1e-6-level sup accuracy the
    eigenvalue cross-checks rely on.
    """
    s = _clip_box(np.asarray(s0, dtype=float), box)
    val = value_fn(s)
    widths = [hi - lo for lo, hi in box]
    t = max(max(widths), 1e-3) / 8.0
    for _ in range(steps):
        g = grad_fn(s)
        gn = float(np.linalg.norm(g))
        if gn < 1e-14:
            break
        accepted = False
        for _ in range(40):
            cand = _clip_box(s + t * g, box)
            vc = value_fn(cand)
            if vc > val + 1e-18:
                s, val = cand, vc
                t *= 2.0
                accepted = True
                break
            t *= 0.5
            if t * gn < 1e-14:
                break
        if not accepted:
            break
    # damped-Newton finish: the gradient phase stalls when the index chart is
    # badly conditioned (e.g. near a sphere-chart pole); a few FD-Hessian steps
    # recover the 1e-6-level accuracy the eigenvalue cross-checks need
    k = len(s)
    for _ in range(12):
        g = grad_fn(s)
        if float(np.linalg.norm(g)) < 1e-13:
            break
        h = 1e-5
        H = np.zeros((k, k))
        for j in range(k):
            e = np.zeros(k)
            e[j] = h
            H[:, j] = (grad_fn(s + e) - grad_fn(s - e)) / (2 * h)
        H = 0.5 * (H + H.T)
        try:
            step_vec = np.linalg.lstsq(H, -g, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        moved = False
        tt = 1.0
        for _ in range(20):
            cand = _clip_box(s + tt * step_vec, box)
            vc = value_fn(cand)
            if vc > val:
                s, val = cand, vc
                moved = True
                break
            tt *= 0.5
        if not moved:
            break
    return s, val


def _grid_values(p: SIProblem, e, x, grid):
    """Vectorized theta/psi values over an index grid (nan -> -inf)."""
    values = [float(v) for v in x] + [grid[:, j] for j in range(grid.shape[1])]
    vals = expr_mod.evaluate_grid(e, values)
    if vals.ndim == 0:  # expression constant in the index variables
        vals = np.full(grid.shape[0], float(vals))
    return np.where(np.isfinite(vals), vals, -np.inf)


def sup_violation(p: SIProblem, x, density=None, polish_top=5, polish_steps=100):
    """(sup_s theta(x,s)^+, argmax): grid plus polish from the top cells."""
    x = np.asarray(x, dtype=float)
    if p.theta is None:
        return 0.0, None
    density = density or default_density(p.k)
    grid = _box_grid(p.S, density)
    vals = _grid_values(p, p.theta, x, grid)
    order = np.argsort(-vals)[:polish_top]
    best_s, best_v = grid[order[0]], vals[order[0]]
    for idx in order:
        s, v = _polish_max(lambda ss: p.theta_at(x, ss),
                           lambda ss: p.grad_s_theta(x, ss), grid[idx], p.S,
                           steps=polish_steps)
        if v > best_v:
            best_s, best_v = s, v
    return max(0.0, float(best_v)), best_s


def sup_abs_equality(p: SIProblem, x, density=None, polish_steps=60):
    """sup_t |psi(x,t)| over the equality index box."""
    if p.psi is None:
        return 0.0
    x = np.asarray(x, dtype=float)
    density = density or default_density(len(p.T))
    grid = _box_grid(p.T, density)
    best = 0.0
    for sign in (1.0, -1.0):
        vals = sign * _grid_values(p, p.psi, x, grid)
        order = np.argsort(-vals)[:3]
        for idx in order:
            _, v = _polish_max(lambda tt: sign * p.psi_at(x, tt),
                               lambda tt: sign * expr_mod.grad(
                                   p.psi, list(x) + list(tt))[p.n:],
                               grid[idx], p.T, steps=polish_steps)
            best = max(best, float(v))
    return best


def _dedupe(points, radius=DEDUP_RADIUS):
    out = []
    for s in points:
        if not any(np.linalg.norm(s - q) <= radius for q in out):
            out.append(s)
    return out


def active_indexes(p: SIProblem, xbar, tol_active=TOL_ACTIVE, density=None, max_atoms=400):
    """Index points with theta(xbar, s) >= -tol_active, polished and deduplicated."""
    xbar = np.asarray(xbar, dtype=float)
    sup, _ = sup_violation(p, xbar, density)
    if sup > TOL_FEAS:
        raise InfeasiblePointError(f"sup violation {sup:.3e} exceeds tol_feas")
    density = density or default_density(p.k)
    grid = _box_grid(p.S, density)
    vals = _grid_values(p, p.theta, xbar, grid)
    order = np.argsort(-vals)
    cands = []
    for idx in order[:max_atoms]:
        if vals[idx] < -tol_active - 1e-3:
            break
        s, v = _polish_max(lambda ss: p.theta_at(xbar, ss),
                           lambda ss: p.grad_s_theta(xbar, ss), grid[idx], p.S, steps=40)
        if v >= -tol_active:
            cands.append(s)
    return _dedupe(cands)


def sip_kappa_estimate(p: SIProblem, xbar, radius=0.25, samples=30, seed=0) -> CQReport:
    """Ratio scheme with dist(f(x);Theta) realized as the sup violation."""
    xbar = np.asarray(xbar, dtype=float)

    # coarse, cheap violation oracle: the ratio test tolerates percent-level
    # denominator noise, and the penalty descent calls this in its inner loop
    def violation(z):
        v, _ = sup_violation(p, z, density=16, polish_top=1, polish_steps=30)
        if p.psi is not None:
            v = math.hypot(v, sup_abs_equality(p, z, density=16, polish_steps=30))
        return v

    def grad_sq(z):
        # Danskin: gradient of the squared sup through the argmax index
        v, s_star = sup_violation(p, z, density=16, polish_top=1, polish_steps=30)
        g = np.zeros(p.n)
        if v > 0 and s_star is not None:
            g += 2.0 * v * p.grad_x_theta(z, s_star)
        return g

    oracle = SampledSetOracle(violation, grad_sq=grad_sq if p.psi is None else None)
    return ratio_stability_estimate("SIP-MSQC", oracle.dist, violation, xbar,
                                    radius, samples, seed)


def emfcq_check(p: SIProblem, xbar, tol=1e-7) -> CQReport:
    """Extended MFCQ: some u has <grad_x theta(xbar,s), u> < 0 on every active s."""
    xbar = np.asarray(xbar, dtype=float)
    act = active_indexes(p, xbar)
    if not act:
        return CQReport("EMFCQ", VERIFIED, confidence="exact",
                        notes=["no active indexes: condition is vacuous"])
    cols = [p.grad_x_theta(xbar, s) for s in act]
    n = p.n
    # min tau s.t. <c_j, u> <= tau, u in the unit box
    A = np.array([list(cj) + [-1.0] for cj in cols])
    bounds = [(-1.0, 1.0)] * n + [(None, None)]
    c = np.zeros(n + 1)
    c[-1] = 1.0
    sol = lp_solve(LPProblem(c=c, A=A, b=np.zeros(len(cols)), senses=["<="] * len(cols),
                             bounds=bounds))
    if sol.status != OPTIMAL:
        return CQReport("EMFCQ", INCONCLUSIVE, notes=["direction LP failed"])
    if sol.objective < -tol:
        return CQReport("EMFCQ", VERIFIED, witness=sol.x[:n], confidence="sampling",
                        notes=[f"max inner product {sol.objective:.3e} on sampled active set"])
    return CQReport("EMFCQ", REFUTED, confidence="sampling",
                    notes=[f"best achievable max inner product {sol.objective:.3e} >= 0"])


@dataclass
class AtomicMultiplier:
    atoms: list  # [(s point, weight >= 0)]
    eq_atoms: list = field(default_factory=list)  # [(t point, signed weight)]

    @property
    def weights(self):
        return np.array([w for _, w in self.atoms])

    @property
    def total(self):
        return float(sum(w for _, w in self.atoms)) + float(
            sum(abs(m) for _, m in self.eq_atoms))


def caratheodory_reduce(atoms, weights, G) -> AtomicMultiplier:
    """Prune a conic combination to at most n atoms, preserving G @ weights.

    While more than n weights are positive, move along a null direction of
    the active columns until one weight hits zero; nonnegativity is exact
    and the target moves by at most the null-space residual.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n = G.shape[0]
    w = np.asarray(weights, dtype=float).copy()
    if len(atoms) != len(w) or G.shape[1] != len(w):
        raise DimensionMismatchError("atoms, weights, and G columns must align")
    while int(np.sum(w > 0.0)) > n:
        S = [i for i in range(len(w)) if w[i] > 0.0]
        M = G[:, S]
        _, sv, Vt = np.linalg.svd(M)
        d = Vt[-1]
        if len(sv) == M.shape[1] and sv[-1] > 1e-11 * max(1.0, sv[0]):
            break  # columns independent; cannot happen with |S| > n
        if float(np.max(d)) <= 0.0:
            d = -d
        taus = [(w[S[i]] / d[i], i) for i in range(len(S)) if d[i] > 1e-14]
        if not taus:
            break
        tau, drop = min(taus)
        for i, idx in enumerate(S):
            w[idx] = w[idx] - tau * d[i]
        w[S[drop]] = 0.0
        w[w < 0.0] = 0.0  # clip roundoff at the 1e-16 scale
    kept = [(atoms[i], float(w[i])) for i in range(len(w)) if w[i] > 0.0]
    return AtomicMultiplier(atoms=kept)


def _stationarity_lp(cols, target, extra_cols=None):
    """min sum(weights) s.t. cols @ w (+ extra signed columns) = target, w >= 0."""
    n = len(target)
    C = np.array(cols).T if cols else np.zeros((n, 0))
    ncols = C.shape[1]
    blocks = [C]
    if extra_cols is not None and len(extra_cols):
        E = np.array(extra_cols).T
        blocks += [E, -E]
        ncols += 2 * E.shape[1]
    A = np.hstack(blocks) if blocks else np.zeros((n, 0))
    sol = lp_solve(LPProblem(c=np.ones(ncols), A=A, b=np.asarray(target, dtype=float),
                             senses=["="] * n, bounds=[(0.0, None)] * ncols))
    return sol, A


def certify(p: SIProblem, xbar, kappa, seed=42, density=None,
            tol_stat=TOL_STAT, tol_bound=TOL_BOUND) -> Certificate:
    """Atomic-multiplier KKT certificate with the sum bound sum(lambda) <= kappa*||grad||."""
    xbar = np.asarray(xbar, dtype=float)
    g0 = p.grad_objective(xbar)
    kappa_val, kappa_source = _resolve_sip_kappa(p, xbar, kappa, seed)
    density = density or default_density(p.k)
    atoms = None
    for round_density in (density, 2 * density, 4 * density):
        act = active_indexes(p, xbar, density=round_density)
        cols = [p.grad_x_theta(xbar, s) for s in act]
        sol, _ = _stationarity_lp(cols, -g0)
        if sol.status == OPTIMAL:
            mult = caratheodory_reduce(act, sol.x[: len(cols)], np.array(cols).T
                                       if cols else np.zeros((p.n, 0)))
            atoms = mult.atoms
            break
    if atoms is None:
        raise NoMultiplierError("no atomic multiplier after two grid refinements")
    return _finish_sip_certificate(p, xbar, g0, atoms, [], kappa_val, kappa_source,
                                   1.0, seed, tol_stat, tol_bound)


def certify_with_equalities(p: SIProblem, xbar, kappa, seed=42, density=None,
                            tol_stat=TOL_STAT, tol_bound=TOL_BOUND) -> Certificate:
    """Equality families via the two-inequality split; bound 2*kappa*||grad||."""
    xbar = np.asarray(xbar, dtype=float)
    if p.psi is not None and sup_abs_equality(p, xbar) > TOL_FEAS:
        raise InfeasiblePointError("equality family violated at xbar")
    g0 = p.grad_objective(xbar)
    kappa_val, kappa_source = _resolve_sip_kappa(p, xbar, kappa, seed)
    density = density or default_density(p.k if p.S is not None else 1)
    ineq_atoms = []
    if p.theta is not None:
        ineq_atoms = active_indexes(p, xbar, density=density)
    eq_points = []
    if p.psi is not None:
        eq_density = default_density(len(p.T)) if density is None else density
        eq_points = [t for t in _dedupe(list(_box_grid(p.T, min(eq_density, 33))))]
    cols = [p.grad_x_theta(xbar, s) for s in ineq_atoms]
    eq_cols = [p.grad_x_psi(xbar, t) for t in eq_points]
    sol, A = _stationarity_lp(cols, -g0, extra_cols=eq_cols)
    if sol.status != OPTIMAL:
        raise NoMultiplierError("stationarity system infeasible for the split problem")
    # one Caratheodory pass over the full nonnegative column set
    all_atoms = [("i", s) for s in ineq_atoms] + [("e+", t) for t in eq_points] \
        + [("e-", t) for t in eq_points]
    mult = caratheodory_reduce(all_atoms, sol.x, A)
    atoms = [(s, w) for (tag, s), w in mult.atoms if tag == "i"]
    eq_atoms = {}
    for (tag, t), w in mult.atoms:
        if tag == "e+":
            eq_atoms[tuple(t)] = eq_atoms.get(tuple(t), 0.0) + w
        elif tag == "e-":
            eq_atoms[tuple(t)] = eq_atoms.get(tuple(t), 0.0) - w
    eq_list = [(np.array(t), m) for t, m in eq_atoms.items() if abs(m) > 0.0]
    return _finish_sip_certificate(p, xbar, g0, atoms, eq_list, kappa_val, kappa_source,
                                   2.0, seed, tol_stat, tol_bound)


def _resolve_sip_kappa(p, xbar, kappa, seed):
    if isinstance(kappa, (int, float)):
        return float(kappa), "user-asserted"
    rep = sip_kappa_estimate(p, xbar, seed=seed)
    if rep.verdict == VERIFIED and rep.kappa_hat is not None:
        return (rep.kappa_hat if rep.kappa_hat > 0 else 1.0), "estimated (sampling-confidence)"
    return None, "unavailable"


def _finish_sip_certificate(p, xbar, g0, atoms, eq_atoms, kappa_val, kappa_source,
                            bound_factor, seed, tol_stat, tol_bound):
    resid_vec = g0.copy()
    total = 0.0
    comp_worst = 0.0
    for s, w in atoms:
        resid_vec = resid_vec + w * p.grad_x_theta(xbar, s)
        total += w
        comp_worst = max(comp_worst, abs(w * p.theta_at(xbar, s)))
    for t, m in eq_atoms:
        resid_vec = resid_vec + m * p.grad_x_psi(xbar, t)
        total += abs(m)
    residual = float(np.linalg.norm(resid_vec))
    bound_rhs = bound_factor * kappa_val * float(np.linalg.norm(g0)) \
        if kappa_val is not None else None
    tolerances = {"tol_stat": tol_stat, "tol_bound": tol_bound,
                  "tol_active": TOL_ACTIVE, "tol_feas": TOL_FEAS}
    kind = "SIP" if not eq_atoms else "SIP-EQ"
    notes = [f"complementarity max |lambda*theta| = {comp_worst:.2e}"]
    if residual > tol_stat:
        status, detail = INCONCLUSIVE, "RESIDUAL"
    elif bound_rhs is None:
        status, detail = INCONCLUSIVE, "KAPPA_UNAVAILABLE"
    elif total > bound_rhs + tol_bound * (1.0 + bound_rhs):
        status, detail = REFUTED, "BOUND_EXCEEDED"
    else:
        status, detail = VERIFIED, None
    return Certificate(kind=kind, status=status, detail=detail, point=xbar,
                       atoms=[(np.asarray(s, dtype=float).tolist() if np.ndim(s) else [float(s)], w)
                              for s, w in atoms],
                       eq_atoms=[(np.asarray(t, dtype=float).tolist(), m) for t, m in eq_atoms],
                       residual=residual, bound_lhs=total, bound_rhs=bound_rhs,
                       kappa=kappa_val, kappa_source=kappa_source,
                       bound_rule=f"{'2*' if bound_factor == 2.0 else ''}kappa*||grad objective||",
                       tolerances=tolerances, seed=seed, notes=notes)
