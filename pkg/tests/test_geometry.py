import numpy as np
import pytest

from varcert import geometry as geo
from varcert.errors import EmptySetError, NotMemberError
from varcert.geometry import (
    Polyhedron,
    PolyhedralCone,
    SampledSetOracle,
    derivability_check,
    normal_cone,
    project,
    tangent_cone,
)


def wedge():
    # {x + y <= 0, x - y <= 0}
    return Polyhedron([[1.0, 1.0], [1.0, -1.0]], [0.0, 0.0])


def test_membership_and_emptiness():
    P = Polyhedron.nonpositive_orthant(2)
    assert P.contains([-1.0, 0.0])
    assert not P.contains([1e-3, 0.0])
    assert not P.is_empty()
    Q = Polyhedron([[1.0], [-1.0]], [-1.0, -1.0])  # x <= -1 and x >= 1
    assert Q.is_empty()
    assert not Polyhedron.whole_space(3).is_empty()


def test_tangent_cone_examples():
    P = Polyhedron.nonpositive_orthant(2)
    K = tangent_cone(P, [0.0, 0.0])
    assert K.contains([-1.0, -2.0]) and not K.contains([1.0, 0.0])
    # interior point of a halfspace: all of R
    K = tangent_cone(Polyhedron.halfspace([1.0], 0.0), [-1.0])
    assert K.G.shape[0] == 0
    assert K.contains([5.0]) and K.contains([-5.0])
    # two active halfspaces through the origin
    K = tangent_cone(wedge(), [0.0, 0.0])
    assert K.G.shape[0] == 2
    assert K.contains([-1.0, 0.0]) and not K.contains([1.0, 0.0])
    with pytest.raises(NotMemberError):
        tangent_cone(P, [1.0, 1.0])


def test_normal_cone_examples():
    N = normal_cone(Polyhedron.nonpositive_orthant(2), [0.0, 0.0])
    assert N.contains([1.0, 0.0]) and N.contains([2.0, 3.0])
    assert not N.contains([-0.1, 1.0])
    N = normal_cone(Polyhedron.halfspace([1.0, 0.0], 0.0), [-1.0, 0.5])
    assert N.rays.shape[0] == 0 and N.lines.shape[0] == 0
    assert N.contains([0.0, 0.0]) and not N.contains([1e-3, 0.0])


def test_normal_cone_of_wedge_against_sampled_polar():
    # brute-force oracle: v is normal iff <v,u> <= 0 on a fine grid of tangent dirs
    K = tangent_cone(wedge(), [0.0, 0.0])
    angles = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    tangent_dirs = [u for u in dirs if K.contains(u, 1e-12)]

    def in_sampled_polar(v):
        return all(float(v @ u) <= 1e-9 for u in tangent_dirs)

    N = normal_cone(wedge(), [0.0, 0.0])
    for r in N.rays:
        assert in_sampled_polar(r)
    # sampled polar elements all belong to the returned normal cone
    for v in dirs:
        if in_sampled_polar(v):
            assert N.contains(v, 1e-6)
    assert N.contains([1.0, 1.0]) and N.contains([1.0, -1.0]) and not N.contains([0.0, 1.0])


def test_polar_examples():
    nonpos = PolyhedralCone.from_halfspaces(np.eye(2))
    polar = nonpos.polar()
    assert polar.contains([1.0, 1.0]) and not polar.contains([-0.1, 0.0])
    zero = PolyhedralCone.zero(3)
    assert zero.polar().contains([4.0, -5.0, 6.0])
    K = PolyhedralCone.from_generators([[1.0, 1.0], [1.0, -1.0]])
    Kp = K.polar()
    assert np.allclose(Kp.G, [[1.0, 1.0], [1.0, -1.0]])
    # verify the polar inequality on a grid
    angles = np.linspace(0, 2 * np.pi, 360, endpoint=False)
    for a in angles:
        v = np.array([np.cos(a), np.sin(a)])
        expected = float(v @ [1.0, 1.0]) <= 1e-12 and float(v @ [1.0, -1.0]) <= 1e-12
        assert Kp.contains(v, 1e-9) == expected


def random_cone(rng, n):
    kind = rng.integers(0, 3)
    if kind == 0:
        rays = rng.normal(size=(int(rng.integers(1, n + 3)), n))
        return PolyhedralCone.from_generators(rays)
    if kind == 1:
        G = rng.normal(size=(int(rng.integers(1, n + 3)), n))
        return PolyhedralCone.from_halfspaces(G)
    rays = rng.normal(size=(int(rng.integers(1, n + 1)), n))
    lines = rng.normal(size=(1, n))
    return PolyhedralCone.from_generators(rays, lines)


def test_double_polar_identity_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 7))
        K = random_cone(rng, n)
        # force the conversion machinery: rebuild the double polar from
        # the polar's halfspace/generator data only
        P1 = K.polar()
        if P1.has_halfspace:
            P1 = PolyhedralCone.from_halfspaces(P1.G, P1.H, n=n)
        else:
            P1 = PolyhedralCone.from_generators(P1.rays, P1.lines, n=n)
        K2 = P1.polar()
        if K2.has_halfspace:
            K2 = PolyhedralCone.from_halfspaces(K2.G, K2.H, n=n)
        else:
            K2 = PolyhedralCone.from_generators(K2.rays, K2.lines, n=n)
        assert K.same_set(K2), f"double polar mismatch (n={n})"


def random_polyhedron_with_boundary_point(rng, n, rows):
    A = rng.normal(size=(rows, n))
    x0 = rng.normal(size=n) * 0.5
    b = A @ x0 + np.abs(rng.normal(size=rows))
    P = Polyhedron(A, b)
    # push x0 to the boundary along a random recession-free direction via LP
    from varcert.solvers import LPProblem, lp_solve, OPTIMAL

    c = rng.normal(size=n)
    cap = np.vstack([np.eye(n), -np.eye(n)])
    sol = lp_solve(LPProblem(c=c, A=np.vstack([A, cap]), b=np.concatenate([b, np.full(2 * n, 10.0)]),
                             senses=["<="] * (rows + 2 * n)))
    assert sol.status == OPTIMAL
    return P, sol.x


def test_normal_cone_equals_polar_of_tangent_cone_random():
    rng = np.random.default_rng(12)
    for _ in range(40):
        n = int(rng.integers(2, 5))
        P, x = random_polyhedron_with_boundary_point(rng, n, int(rng.integers(2, 6)))
        if P.active_rows(x):
            N = normal_cone(P, x)
            T = tangent_cone(P, x)
            assert N.same_set(T.polar())


def test_project_examples():
    proj, d = project(Polyhedron.nonpositive_orthant(2), [1.0, 1.0])
    assert np.allclose(proj, [0.0, 0.0], atol=1e-9)
    assert d == pytest.approx(np.sqrt(2.0), abs=1e-9)
    box = Polyhedron.box([(0.0, 1.0), (0.0, 1.0)])
    proj, d = project(box, [2.0, 0.5])
    assert np.allclose(proj, [1.0, 0.5], atol=1e-9)
    assert d == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(EmptySetError):
        project(Polyhedron([[1.0], [-1.0]], [-1.0, -1.0]), [0.0])


def test_project_wedge_against_grid_oracle():
    W = wedge()
    z = np.array([1.0, 0.0])
    proj, d = project(W, z)
    # brute force over a fine feasible grid
    best = np.inf
    for a in np.linspace(-2.0, 0.5, 251):
        for b in np.linspace(-1.5, 1.5, 301):
            if W.contains([a, b], 1e-12):
                best = min(best, float(np.hypot(a - 1.0, b)))
    assert d == pytest.approx(best, abs=1e-3)
    assert d == pytest.approx(1.0, abs=1e-8)
    assert np.allclose(proj, [0.0, 0.0], atol=1e-8)


def test_project_variational_inequality_and_lipschitz():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(2, 4))
        lo = -np.abs(rng.normal(size=n)) - 0.2
        hi = np.abs(rng.normal(size=n)) + 0.2
        B = Polyhedron.box(list(zip(lo, hi)))
        z1 = rng.normal(size=n) * 2
        z2 = rng.normal(size=n) * 2
        p1, d1 = project(B, z1)
        p2, d2 = project(B, z2)
        # <z - proj, w - proj> <= tol for box vertices w
        for mask in range(2 ** n):
            w = np.array([hi[j] if (mask >> j) & 1 else lo[j] for j in range(n)])
            assert float((z1 - p1) @ (w - p1)) <= 1e-7
        assert abs(d1 - d2) <= np.linalg.norm(z1 - z2) + 1e-9


def test_derivability_examples():
    orthant = Polyhedron.nonpositive_orthant(2)
    rep = derivability_check(orthant, [0.0, 0.0], [-1.0, -1.0])
    assert rep.passed and rep.max_tail_ratio == pytest.approx(0.0, abs=1e-12)

    # parabola graph {(a, b): b = a^2} through a refining grid distance oracle
    def graph_dist(z):
        lo, hi = -1.5, 1.5
        for _ in range(4):
            a = np.linspace(lo, hi, 801)
            d = np.hypot(z[0] - a, z[1] - a ** 2)
            k = int(np.argmin(d))
            step = a[1] - a[0]
            lo, hi = a[k] - 2 * step, a[k] + 2 * step
        return float(np.min(d))

    rep = derivability_check(graph_dist, np.zeros(2), np.array([1.0, 0.0]),
                             t_grid=[1e-2 * 0.5 ** j for j in range(10)], tol_deriv=1e-2)
    assert rep.passed
    ratios = rep.ratios
    assert all(ratios[i + 1] <= ratios[i] + 1e-12 for i in range(len(ratios) - 1))

    with pytest.raises(NotMemberError):
        derivability_check(orthant, [0.0, 0.0], [1.0, 0.0])


def test_sampled_set_oracle_penalty_projection():
    # parabola epigraph {b >= a^2} via violation = max(a^2 - b, 0)
    def violation(z):
        return max(z[0] ** 2 - z[1], 0.0)

    def grad_sq(z):
        v = z[0] ** 2 - z[1]
        if v <= 0:
            return np.zeros(2)
        return np.array([4.0 * z[0] * v, -2.0 * v])

    oracle = SampledSetOracle(violation, grad_sq=grad_sq)
    assert oracle.feasible([0.5, 0.5])
    z = np.array([0.0, -1.0])
    d = oracle.dist(z)
    # true distance to the epigraph from (0,-1): nearest point near (+-0.786, 0.618)
    a = np.linspace(-2, 2, 4001)
    true = float(np.min(np.hypot(a, a ** 2 + 1.0)))
    assert d == pytest.approx(true, abs=5e-3)
    assert oracle.violation(oracle.project(z)) <= 1e-5


def test_cone_conversion_known_cases():
    # halfplane: one ray and one line
    K = PolyhedralCone.from_halfspaces([[1.0, 0.0]])
    rays, lines = K.ensure_generators()
    assert rays.shape[0] == 1 and lines.shape[0] == 1
    assert np.allclose(rays[0] / np.linalg.norm(rays[0]), [-1.0, 0.0])
    # generator cone to halfspaces and back
    K = PolyhedralCone.from_generators([[0.0, 1.0], [1.0, 1.0]])
    G, H = K.ensure_halfspace()
    K2 = PolyhedralCone.from_halfspaces(G, H)
    assert K.same_set(K2)
    assert K2.contains([0.5, 1.0]) and not K2.contains([1.0, 0.5])


def test_chebyshev_center():
    box = Polyhedron.box([(-1.0, 1.0), (-1.0, 1.0)])
    x, r = box.chebyshev_center()
    assert np.allclose(x, [0.0, 0.0], atol=1e-9)
    assert r == pytest.approx(1.0, abs=1e-9)


def test_validate_forms_invariant():
    K = PolyhedralCone.from_generators([[0.0, 1.0], [1.0, 1.0]])
    K.ensure_halfspace()
    assert K.validate_forms()
    # inconsistent pair must be caught
    bad = PolyhedralCone.from_generators([[1.0, 0.0]])
    bad.G = np.array([[0.0, 1.0], [1.0, 0.0]])  # would force u1 <= 0
    bad.H = np.zeros((0, 2))
    assert not bad.validate_forms()
