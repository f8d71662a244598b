import numpy as np
import pytest
from numpy.polynomial import polynomial as P
from scipy.interpolate import CubicHermiteSpline

from conftest import monomial_integral_green, random_star_polygon
from platevem.element import (
    LocalElement,
    build_dof_layout,
    edge_trace,
    interpolate_function,
    local_matrices,
    polynomial_dofs,
)
from platevem.mesh import chebyshev_kernel
from platevem.polyquad import monomial_exponents, poly_space_dim

UNIT_SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])
HEXAGON = np.column_stack([np.cos(np.arange(6) * np.pi / 3), np.sin(np.arange(6) * np.pi / 3)])
PENTAGON = np.array([[0, 0], [1, 0], [1.2, 0.7], [0.5, 1.1], [-0.2, 0.6]])


# -- DOF layout -------------------------------------------------------------


@pytest.mark.parametrize(
    "k,poly,count",
    [(2, UNIT_SQUARE, 12), (3, UNIT_SQUARE[:3], 12), (4, UNIT_SQUARE[:3], 19), (4, UNIT_SQUARE, 25)],
)
def test_layout_counts(k, poly, count):
    assert build_dof_layout(k, poly).size == count


def test_layout_closed_forms():
    for n in range(3, 9):
        assert build_dof_layout(2, np.zeros((n, 2))).size == 3 * n
        assert build_dof_layout(3, np.zeros((n, 2))).size == 4 * n


def test_layout_ordering():
    lay = build_dof_layout(4, UNIT_SQUARE[:3])
    desc = lay.describe()
    assert desc[:3] == [("value", 0), ("value", 1), ("value", 2)]
    assert desc[3:5] == [("grad", 0, 0), ("grad", 0, 1)]
    assert desc[9:12] == [("trace", 0, 0), ("trace", 1, 0), ("trace", 2, 0)]
    assert desc[12:14] == [("normal", 0, 0), ("normal", 0, 1)]
    assert desc[-1] == ("interior", 0)


def test_layout_rejects_low_order():
    with pytest.raises(ValueError):
        build_dof_layout(1, UNIT_SQUARE)


# -- edge traces ------------------------------------------------------------


def test_trace_of_x_squared_on_bottom_edge():
    el = LocalElement(UNIT_SQUARE, 2)
    d = polynomial_dofs(el, _scaled_coeffs(el, {(2, 0): 1.0}))
    tr = edge_trace(el.layout, el.geometry, 0, d)
    np.testing.assert_allclose(tr.value, [0, 0, 1, 0], atol=1e-13)
    np.testing.assert_allclose(tr.normal_derivative, 0.0, atol=1e-13)


def test_trace_of_xy_on_vertical_edge():
    tri = np.array([[0, 0], [0, 1], [-1, 1.0]])
    el = LocalElement(tri, 2)
    d = polynomial_dofs(el, _scaled_coeffs(el, {(1, 1): 1.0}))
    tr = edge_trace(el.layout, el.geometry, 0, d)
    np.testing.assert_allclose(tr.value, 0.0, atol=1e-13)
    # outward normal of this edge is +x, so d_nu(xy) = y = t
    np.testing.assert_allclose(tr.normal_derivative, [0, 1], atol=1e-13)


@pytest.mark.parametrize("k", [3, 4])
def test_trace_of_random_polynomial(rng, k):
    poly, centre = random_star_polygon(rng, n=5, scale=0.8)
    el = LocalElement(poly, k, fan_center=centre)
    c = rng.normal(size=poly_space_dim(k))
    d = polynomial_dofs(el, c)
    t = np.linspace(0.1, 0.9, 5)
    for e in range(5):
        tr = edge_trace(el.layout, el.geometry, e, d)
        a, b = poly[e], poly[(e + 1) % 5]
        pts = a + t[:, None] * (b - a)
        nu = el.geometry.normals[e]
        np.testing.assert_allclose(tr.eval_value(t), el.basis.values(pts) @ c, rtol=1e-11, atol=1e-11)
        np.testing.assert_allclose(tr.eval_normal(t), np.einsum("nsd,d,s->n", el.basis.gradient(pts), nu, c), rtol=1e-11, atol=1e-11)


def test_edge_trace_rejects_bad_vector():
    el = LocalElement(UNIT_SQUARE, 2)
    with pytest.raises(ValueError):
        edge_trace(el.layout, el.geometry, 0, np.zeros(5))
    with pytest.raises(ValueError):
        edge_trace(el.layout, el.geometry, 4, np.zeros(12))


# -- energy projection ------------------------------------------------------


def _scaled_coeffs(el, plain: dict) -> np.ndarray:
    """Scaled-monomial coefficients of a polynomial given in plain monomials x^a y^b."""
    pts = el.geometry.centroid + el.geometry.diameter * np.random.default_rng(1).uniform(-1, 1, (40, 2))
    vals = sum(c * pts[:, 0] ** a * pts[:, 1] ** b for (a, b), c in plain.items())
    coef, *_ = np.linalg.lstsq(el.basis.values(pts), vals, rcond=None)
    return coef


def test_projection_reproduces_polynomials_and_affine():
    for k in (2, 3, 4):
        el = LocalElement(PENTAGON, k)
        c = np.random.default_rng(k).normal(size=poly_space_dim(k))
        np.testing.assert_allclose(el.energy @ polynomial_dofs(el, c), c, rtol=1e-10, atol=1e-10)
    el = LocalElement(HEXAGON, 2)
    c = _scaled_coeffs(el, {(0, 0): 1.0, (1, 0): 2.0, (0, 1): -1.0})
    np.testing.assert_allclose(el.energy @ polynomial_dofs(el, c), c, atol=1e-12)


_HERMITE = {  # ascending power coefficients on [0, 1]
    "v0": np.array([1.0, 0, -3, 2]),
    "d0": np.array([0.0, 1, -2, 1]),
    "v1": np.array([0.0, 0, 3, -2]),
    "d1": np.array([0.0, 0, -1, 1]),
}


def _bicubic(values, grads, cross):
    """Bogner-Fox-Schmit bicubic on the unit square, as a 4x4 coefficient array C[i, j] of x^i y^j."""
    C = np.zeros((4, 4))
    for (cx, cy), u, g in zip([(0, 0), (1, 0), (1, 1), (0, 1)], values, grads):
        vx, dx = (_HERMITE["v0"], _HERMITE["d0"]) if cx == 0 else (_HERMITE["v1"], _HERMITE["d1"])
        vy, dy = (_HERMITE["v0"], _HERMITE["d0"]) if cy == 0 else (_HERMITE["v1"], _HERMITE["d1"])
        C += u * np.outer(vx, vy) + g[0] * np.outer(dx, vy) + g[1] * np.outer(vx, dy) + cross * np.outer(dx, dy)
    return C


def test_energy_projection_matches_bicubic_oracle(rng):
    # gradients chosen so that a constant cross derivative makes every normal
    # derivative trace linear: then the bicubic has exactly the virtual traces
    for _ in range(5):
        vals = rng.normal(size=4)
        c = rng.normal()
        g00, g10 = rng.normal(size=2), rng.normal(size=2)
        g01 = np.array([g00[0] + c, rng.normal()])
        g11 = np.array([g10[0] + c, g01[1] + c])
        g10[1] = g00[1] + c - 0.0
        grads = [g00, g10, g11, g01]
        # bottom: u_y(1,0) - u_y(0,0) = c ; top: u_y(1,1) - u_y(0,1) = c
        # left: u_x(0,1) - u_x(0,0) = c ; right: u_x(1,1) - u_x(1,0) = c
        assert np.isclose(grads[1][1] - grads[0][1], c) and np.isclose(grads[2][1] - grads[3][1], c)
        assert np.isclose(grads[3][0] - grads[0][0], c) and np.isclose(grads[2][0] - grads[1][0], c)
        B = _bicubic(vals, grads, c)

        # oracle: minimise |D^2(p - b)| over P2 with the three vertex-mean conditions
        x, w = np.polynomial.legendre.leggauss(6)
        x, w = 0.5 * (x + 1), 0.5 * w
        X, Y = np.meshgrid(x, x, indexing="ij")
        W = np.outer(w, w)
        bxx = P.polyval2d(X, Y, P.polyder(B, 2, axis=0))
        bxy = P.polyval2d(X, Y, P.polyder(P.polyder(B, 1, axis=0), 1, axis=1))
        byy = P.polyval2d(X, Y, P.polyder(B, 2, axis=1))
        ib = [np.sum(W * f) for f in (bxx, bxy, byy)]
        # plain basis 1, x, y, x^2, xy, y^2; Hessian-products of x^2, xy, y^2 are diag(4, 2, 4)
        M = np.zeros((6, 6))
        r = np.zeros(6)
        M[3, 3], M[4, 4], M[5, 5] = 4.0, 2.0, 4.0
        r[3], r[4], r[5] = 2 * ib[0], 2 * ib[1], 2 * ib[2]
        V = UNIT_SQUARE
        M[0] = np.mean([[1, vx, vy, vx**2, vx * vy, vy**2] for vx, vy in V], axis=0)
        M[1] = np.mean([[0, 1, 0, 2 * vx, vy, 0] for vx, vy in V], axis=0)
        M[2] = np.mean([[0, 0, 1, 0, vx, 2 * vy] for vx, vy in V], axis=0)
        r[0] = np.mean(vals)
        r[1] = np.mean([g[0] for g in grads])
        r[2] = np.mean([g[1] for g in grads])
        p = np.linalg.solve(M, r)

        el = LocalElement(UNIT_SQUARE, 2)
        h = el.geometry.diameter
        dofs = np.concatenate([vals, h * np.ravel(grads)])
        pts = rng.uniform(0, 1, (10, 2))
        got = el.basis.values(pts) @ (el.energy @ dofs)
        plain = np.column_stack([np.ones(10), pts[:, 0], pts[:, 1], pts[:, 0] ** 2, pts[:, 0] * pts[:, 1], pts[:, 1] ** 2])
        np.testing.assert_allclose(got, plain @ p, rtol=1e-9, atol=1e-9 * np.abs(plain @ p).max())


def test_idempotence_on_random_polygons(rng):
    for _ in range(20):
        poly, centre = random_star_polygon(rng)
        for k in (2, 3, 4):
            el = LocalElement(poly, k, fan_center=centre)
            C, D = el.energy, el.dofs_of_monomials
            assert np.abs(C @ D @ C - C).max() <= 1e-11 * np.abs(C).max()


# -- L2 and gradient projections -------------------------------------------


def _scaled_moments(poly, centre, h, deg):
    """int_K m_a m_b for scaled monomials of degree <= deg, by Green's theorem."""
    ex = monomial_exponents(deg).tolist()
    ref = (poly - centre) / h
    return np.array([[h**2 * monomial_integral_green(ref, a1 + a2, b1 + b2) for a2, b2 in ex] for a1, b1 in ex])


def test_l2_projection_k2_is_mean_of_energy_projection(rng):
    el = LocalElement(HEXAGON, 2)
    d = rng.normal(size=el.layout.size)
    mean = (el.quad.weights @ el.basis.values(el.quad.points)) @ (el.energy @ d) / el.geometry.area
    assert (el.l2 @ d)[0] == pytest.approx(mean, rel=1e-12)


def test_l2_projection_k3_pentagon_against_enhancement_oracle(rng):
    el = LocalElement(PENTAGON, 3)
    g = el.geometry
    d = rng.normal(size=el.layout.size)
    c3 = el.energy @ d
    full = _scaled_moments(PENTAGON, g.centroid, g.diameter, 3)
    # enhancement: moments of v against P1 equal those of its energy projection
    rhs = full[:3] @ c3
    expected = np.linalg.solve(full[:3, :3], rhs)
    np.testing.assert_allclose(el.l2 @ d, expected, rtol=1e-10, atol=1e-10 * np.abs(expected).max())


def test_l2_projection_reproduces_low_polynomials(rng):
    for k in (2, 3, 4):
        el = LocalElement(PENTAGON, k)
        n2 = poly_space_dim(k - 2)
        c = np.zeros(poly_space_dim(k))
        c[:n2] = rng.normal(size=n2)
        np.testing.assert_allclose(el.l2 @ polynomial_dofs(el, c), c[:n2], atol=1e-10 * np.abs(c).max())


def test_gradient_projection_hexagon_against_boundary_identity(rng):
    el = LocalElement(HEXAGON, 2)
    g = el.geometry
    h, xc = g.diameter, g.centroid
    d = rng.normal(size=el.layout.size)
    n = 6
    vals = d[:n]
    grads = d[n:].reshape(n, 2) / h
    c0 = (el.l2 @ d)[0]
    mass = _scaled_moments(HEXAGON, xc, h, 1)
    ref = (HEXAGON - xc) / h
    # int_K d m_b / dx for m_b in {1, xi, eta}: (0, |K|/h, 0) and (0, 0, |K|/h) for y
    area = h**2 * monomial_integral_green(ref, 0, 0)
    div_x = np.array([0.0, area / h, 0.0])
    div_y = np.array([0.0, 0.0, area / h])
    bx = np.zeros(3)
    by = np.zeros(3)
    s, w = np.polynomial.legendre.leggauss(8)
    for e in range(n):
        a, b = HEXAGON[e], HEXAGON[(e + 1) % n]
        ell = np.linalg.norm(b - a)
        tau = (b - a) / ell
        nu = np.array([tau[1], -tau[0]])
        spline = CubicHermiteSpline([0, ell], [vals[e], vals[(e + 1) % n]], [grads[e] @ tau, grads[(e + 1) % n] @ tau])
        sp = 0.5 * ell * (s + 1)
        pts = a + sp[:, None] * tau
        m = np.column_stack([np.ones(8), (pts[:, 0] - xc[0]) / h, (pts[:, 1] - xc[1]) / h])
        vw = spline(sp) * 0.5 * ell * w
        bx += nu[0] * (vw @ m)
        by += nu[1] * (vw @ m)
    ax = np.linalg.solve(mass, -c0 * div_x + bx)
    ay = np.linalg.solve(mass, -c0 * div_y + by)
    np.testing.assert_allclose(el.grad_x @ d, ax, rtol=1e-10, atol=1e-10 * np.abs(ax).max())
    np.testing.assert_allclose(el.grad_y @ d, ay, rtol=1e-10, atol=1e-10 * np.abs(ay).max())


def test_gradient_projection_exact_on_polynomials(rng):
    for _ in range(10):
        poly, centre = random_star_polygon(rng)
        for k in (2, 3, 4):
            el = LocalElement(poly, k, fan_center=centre)
            c = rng.normal(size=poly_space_dim(k))
            d = polynomial_dofs(el, c)
            pts = el.quad.points[:7]
            n1 = poly_space_dim(k - 1)
            sub = el.basis.values(pts)[:, :n1]
            grad = np.einsum("nsd,s->nd", el.basis.gradient(pts), c)
            scale = np.abs(grad).max()
            np.testing.assert_allclose(sub @ (el.grad_x @ d), grad[:, 0], atol=1e-10 * scale)
            np.testing.assert_allclose(sub @ (el.grad_y @ d), grad[:, 1], atol=1e-10 * scale)


def test_gradient_projection_of_constant_is_zero():
    el = LocalElement(HEXAGON, 3)
    d = np.zeros(el.layout.size)
    d[:6] = 1.0
    np.testing.assert_allclose(el.grad_x @ d, 0.0, atol=1e-13)
    np.testing.assert_allclose(el.grad_y @ d, 0.0, atol=1e-13)


# -- local matrices ---------------------------------------------------------


def test_polynomial_consistency_50_random_polygons():
    rng = np.random.default_rng(7)
    for _ in range(50):
        poly, _ = random_star_polygon(rng)
        centre, _ = chebyshev_kernel(poly)
        for k in (2, 3, 4):
            el = LocalElement(poly, k, fan_center=centre)
            A = el.consistency + el.stabilization
            for j in range(poly_space_dim(k)):
                c = np.zeros(poly_space_dim(k))
                c[j] = 1.0
                dp = polynomial_dofs(el, c)
                # a_K(p, v) = a_K(p, Pi v) for every virtual v
                exact = el.energy.T @ (el.hessian_gram @ c)
                scale = max(np.abs(exact).max(), np.sqrt(np.trace(el.hessian_gram)) * np.abs(el.energy).max() * 1e-3, 1e-300)
                assert np.abs(A @ dp - exact).max() <= 1e-10 * max(scale, np.abs(A).max())


@pytest.mark.parametrize("kind", ["combined", "dofi", "boundary"])
@pytest.mark.parametrize("k", [2, 3, 4])
def test_stiffness_kernel_is_affine(kind, k):
    el = LocalElement(PENTAGON, k, stabilization=kind)
    A = el.consistency + el.stabilization
    w = np.linalg.eigvalsh(A)
    assert np.sum(w < 1e-10 * w.max()) == 3
    affine = np.column_stack([polynomial_dofs(el, np.eye(poly_space_dim(k))[j]) for j in range(3)])
    np.testing.assert_allclose(A @ affine, 0.0, atol=1e-10 * w.max())
    # stabilization positive definite on the kernel of the projection
    P = el.dofs_of_monomials @ el.energy
    U, sv, _ = np.linalg.svd(np.eye(el.layout.size) - P)
    Z = U[:, sv > 1e-8]
    assert np.linalg.eigvalsh(Z.T @ el.stabilization @ Z).min() > 0


def test_symmetry_and_examples():
    A, B = local_matrices(UNIT_SQUARE, 2, np.eye(2))
    assert np.abs(A - A.T).max() <= 1e-12 * np.abs(A).max()
    assert np.abs(B - B.T).max() <= 1e-12 * np.abs(B).max()
    el = LocalElement(UNIT_SQUARE, 2)
    ax2 = polynomial_dofs(el, _scaled_coeffs(el, {(2, 0): 1.0}))
    ay2 = polynomial_dofs(el, _scaled_coeffs(el, {(0, 2): 1.0}))
    assert abs(ax2 @ A @ ay2) < 1e-12
    for poly in (UNIT_SQUARE, HEXAGON, PENTAGON):
        el = LocalElement(poly, 2)
        x = polynomial_dofs(el, _scaled_coeffs(el, {(1, 0): 1.0}))
        y = polynomial_dofs(el, _scaled_coeffs(el, {(0, 1): 1.0}))
        area = el.geometry.area
        assert x @ el.geometric_matrix(np.eye(2)) @ x == pytest.approx(area, rel=1e-12)
        assert x @ el.geometric_matrix(np.array([[0, 1], [1, 0.0]])) @ y == pytest.approx(area, rel=1e-12)


def test_eta_validation_and_scaling():
    el = LocalElement(PENTAGON, 3)
    with pytest.raises(ValueError):
        el.geometric_matrix(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        el.geometric_matrix(lambda p: np.broadcast_to([[0.0, 1.0], [2.0, 0.0]], (len(p), 2, 2)))
    eta = np.array([[1.3, 0.4], [0.4, -0.2]])
    B = el.geometric_matrix(eta)
    for c in (0.5, 3.0, 7.25):
        Bc = el.geometric_matrix(c * eta)
        assert np.abs(Bc - c * B).max() <= 1e-14 * np.abs(c * B).max()


def test_interpolant_of_polynomial_matches_polynomial_dofs(rng):
    el = LocalElement(PENTAGON, 4)
    c = rng.normal(size=poly_space_dim(4))
    f = lambda p: el.basis.values(p) @ c
    grad = lambda p: np.einsum("nsd,s->nd", el.basis.gradient(p), c)
    np.testing.assert_allclose(interpolate_function(el, f, grad), polynomial_dofs(el, c), atol=1e-12)
