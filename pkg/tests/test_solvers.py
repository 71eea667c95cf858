import numpy as np
import pytest

from varcert import solvers
from varcert.solvers import LPProblem, lp_solve, eigh


def test_simple_lower_bound():
    # min x s.t. x >= 1
    sol = lp_solve(LPProblem(c=[1.0], A=[[1.0]], b=[1.0], senses=[">="]))
    assert sol.status == solvers.OPTIMAL
    assert sol.x[0] == pytest.approx(1.0)
    assert sol.objective == pytest.approx(1.0)


def test_infeasible():
    # min 0 s.t. x <= -1, x >= 0
    sol = lp_solve(LPProblem(c=[0.0], A=[[1.0], [1.0]], b=[-1.0, 0.0], senses=["<=", ">="]))
    assert sol.status == solvers.INFEASIBLE


def test_facet_optimum():
    # min -x1-x2 s.t. x1+x2 <= 1, x >= 0
    p = LPProblem(c=[-1.0, -1.0], A=[[1.0, 1.0]], b=[1.0], senses=["<="],
                  bounds=[(0.0, None), (0.0, None)])
    sol = lp_solve(p)
    assert sol.status == solvers.OPTIMAL
    assert sol.objective == pytest.approx(-1.0)
    assert sol.x.sum() == pytest.approx(1.0)


def test_unbounded():
    sol = lp_solve(LPProblem(c=[-1.0], A=[[1.0]], b=[0.0], senses=[">="]))
    assert sol.status == solvers.UNBOUNDED


def test_equality_rows_and_box_bounds():
    # min x1 + 2 x2 s.t. x1 + x2 = 1, 0 <= xi <= 1
    p = LPProblem(c=[1.0, 2.0], A=[[1.0, 1.0]], b=[1.0], senses=["="],
                  bounds=[(0.0, 1.0), (0.0, 1.0)])
    sol = lp_solve(p)
    assert sol.status == solvers.OPTIMAL
    assert np.allclose(sol.x, [1.0, 0.0], atol=1e-9)


def test_degenerate_problem_terminates():
    # many redundant rows through the same vertex
    A = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 2.0], [1.0, 2.0]]
    b = [0.0, 0.0, 0.0, 0.0, 0.0]
    p = LPProblem(c=[-1.0, -1.0], A=A, b=b, senses=["<="] * 5)
    sol = lp_solve(p)
    assert sol.status == solvers.OPTIMAL
    assert sol.objective == pytest.approx(0.0)


def random_feasible_bounded_lp(rng, n, m):
    """Random LP with free variables, guaranteed feasible and bounded.

    Feasible: b is set so a reference point satisfies every row.
    Bounded: rows include +/- box caps on every coordinate.
    """
    A = rng.normal(size=(m, n))
    x0 = rng.normal(size=n) * 0.3
    b = A @ x0 + np.abs(rng.normal(size=m)) + 0.1
    cap = np.vstack([np.eye(n), -np.eye(n)])
    bcap = np.full(2 * n, 5.0)
    A_all = np.vstack([A, cap])
    b_all = np.concatenate([b, bcap])
    c = rng.normal(size=n)
    return LPProblem(c=c, A=A_all, b=b_all, senses=["<="] * (m + 2 * n))


def test_lp_duality_on_random_instances():
    rng = np.random.default_rng(42)
    for _ in range(200):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 7))
        p = random_feasible_bounded_lp(rng, n, m)
        sol = lp_solve(p)
        assert sol.status == solvers.OPTIMAL
        # primal feasibility
        assert np.all(p.A @ sol.x <= p.b + 1e-8)
        # duality: primal objective equals b.y, with y <= 0 for <= rows
        assert sol.objective == pytest.approx(float(p.b @ sol.y), abs=1e-7)
        assert np.all(sol.y <= 1e-9)
        # dual feasibility A^T y = c and complementary slackness
        assert np.allclose(p.A.T @ sol.y, p.c, atol=1e-8)
        slack = p.b - p.A @ sol.x
        assert float(np.max(np.abs(sol.y * slack))) < 1e-8


def test_eigh_diagonal():
    w, V = eigh(np.diag([3.0, 1.0]))
    assert np.allclose(w, [3.0, 1.0])
    assert np.allclose(np.abs(V), np.eye(2))


def test_eigh_reflection():
    w, V = eigh(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(w, [1.0, -1.0])
    assert np.allclose(np.abs(V[:, 0]), [1 / np.sqrt(2)] * 2, atol=1e-12)
    assert np.abs(V[:, 1] @ V[:, 0]) < 1e-12


def test_eigh_kernel_fixture():
    w, V = eigh(np.diag([0.0, -1.0]))
    assert w[0] == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(np.abs(V[:, 0]), [1.0, 0.0])


def test_eigh_rejects_asymmetric():
    with pytest.raises(ValueError):
        eigh(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_eigh_invariants_random():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(2, 5))
        B = rng.normal(size=(n, n))
        A = 0.5 * (B + B.T)
        w, V = eigh(A)
        # reconstruction and orthogonality
        assert np.linalg.norm(V @ np.diag(w) @ V.T - A) <= 1e-9 * max(1.0, np.linalg.norm(A))
        assert np.allclose(V.T @ V, np.eye(n), atol=1e-10)
        # trace and determinant
        assert np.sum(w) == pytest.approx(np.trace(A), rel=1e-8, abs=1e-8)
        assert np.prod(w) == pytest.approx(np.linalg.det(A), rel=1e-7, abs=1e-8)
        assert np.all(np.diff(w) <= 1e-12)


def test_sigma_matches_random_unit_vector_sup():
    rng = np.random.default_rng(5)
    for _ in range(10):
        m = int(rng.integers(2, 5))
        B = rng.normal(size=(m, m))
        A = 0.5 * (B + B.T)
        sigma = solvers.largest_eigenvalue(A)
        s = rng.normal(size=(10000, m))
        s /= np.linalg.norm(s, axis=1, keepdims=True)
        sup = float(np.max(np.einsum("ij,jk,ik->i", s, A, s)))
        assert sup <= sigma + 1e-12          # sigma dominates the quadratic form
        assert sigma - sup <= 5e-2           # random sampling approaches it
        # the sup is attained: Rayleigh quotient at the top eigenvector
        w, V = eigh(A)
        v1 = V[:, 0]
        assert float(v1 @ A @ v1) == pytest.approx(sigma, abs=1e-6)


def test_lp_solve_against_scipy_oracle():
    linprog = pytest.importorskip("scipy.optimize").linprog
    rng = np.random.default_rng(77)
    for _ in range(30):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 6))
        p = random_feasible_bounded_lp(rng, n, m)
        ours = lp_solve(p)
        ref = linprog(p.c, A_ub=p.A, b_ub=p.b, bounds=[(None, None)] * n,
                      method="highs")
        assert ours.status == solvers.OPTIMAL and ref.status == 0
        assert ours.objective == pytest.approx(ref.fun, abs=1e-7)


def test_eigh_against_numpy_oracle():
    rng = np.random.default_rng(78)
    for _ in range(30):
        n = int(rng.integers(2, 7))
        B = rng.normal(size=(n, n))
        A = 0.5 * (B + B.T)
        w, V = eigh(A)
        ref = np.sort(np.linalg.eigvalsh(A))[::-1]
        assert np.allclose(w, ref, atol=1e-10)


def test_lp_solve_mixed_senses_and_bounds_against_scipy():
    opt = pytest.importorskip("scipy.optimize")
    rng = np.random.default_rng(79)
    solved = 0
    while solved < 40:
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 5))
        A = rng.normal(size=(m, n))
        x0 = rng.normal(size=n) * 0.4
        senses = [("<=", "=", ">=")[int(rng.integers(0, 3))] for _ in range(m)]
        b = np.empty(m)
        for i, s in enumerate(senses):
            slack = abs(rng.normal()) * 0.5
            b[i] = A[i] @ x0 + (slack if s == "<=" else -slack if s == ">=" else 0.0)
        bounds = []
        for _ in range(n):
            lo = float(rng.uniform(-4, -1)) if rng.random() < 0.7 else None
            hi = float(rng.uniform(1, 4)) if rng.random() < 0.7 else None
            bounds.append((lo, hi))
        c = rng.normal(size=n)
        ours = lp_solve(LPProblem(c=c, A=A, b=b, senses=senses, bounds=bounds))
        A_ub, b_ub, A_eq, b_eq = [], [], [], []
        for i, s in enumerate(senses):
            if s == "<=":
                A_ub.append(A[i]); b_ub.append(b[i])
            elif s == ">=":
                A_ub.append(-A[i]); b_ub.append(-b[i])
            else:
                A_eq.append(A[i]); b_eq.append(b[i])
        ref = opt.linprog(c, A_ub=np.array(A_ub) if A_ub else None,
                          b_ub=np.array(b_ub) if b_ub else None,
                          A_eq=np.array(A_eq) if A_eq else None,
                          b_eq=np.array(b_eq) if b_eq else None,
                          bounds=bounds, method="highs")
        if ref.status == 2:
            assert ours.status == solvers.INFEASIBLE
        elif ref.status == 3:
            assert ours.status == solvers.UNBOUNDED
        elif ref.status == 0:
            assert ours.status == solvers.OPTIMAL
            assert ours.objective == pytest.approx(ref.fun, abs=1e-7)
            solved += 1
