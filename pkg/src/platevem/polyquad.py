"""Scaled monomial bases and quadrature on polygons and edges."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial

import numpy as np


def poly_space_dim(k: int) -> int:
    """Dimension of the bivariate polynomials of degree <= k (0 for k < 0)."""
    if k < 0:
        return 0
    return (k + 1) * (k + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(k: int) -> np.ndarray:
    """Exponents (a, b) of x^a y^b, |a+b| <= k, in graded-lexicographic order."""
    out = [(d - j, j) for d in range(k + 1) for j in range(d + 1)]
    arr = np.array(out, dtype=int).reshape(-1, 2)
    arr.flags.writeable = False
    return arr


def monomial_index(a: int, b: int) -> int:
    d = a + b
    return poly_space_dim(d - 1) + b


@dataclass(frozen=True)
class ScaledMonomialBasis:
    """m_alpha(x) = ((x - center) / h) ** alpha for |alpha| <= degree."""

    center: np.ndarray
    h: float
    degree: int

    @property
    def size(self) -> int:
        return poly_space_dim(self.degree)

    @property
    def exponents(self) -> np.ndarray:
        return monomial_exponents(self.degree)

    def derivative(self, points, dx: int = 0, dy: int = 0) -> np.ndarray:
        """Partial derivative d^(dx+dy) / dx^dx dy^dy of every basis function.

        Returns an array of shape (n_points, size).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xi = (pts[:, 0] - self.center[0]) / self.h
        eta = (pts[:, 1] - self.center[1]) / self.h
        k = self.degree
        xp = np.ones((pts.shape[0], k + 1))
        yp = np.ones((pts.shape[0], k + 1))
        for p in range(1, k + 1):
            xp[:, p] = xp[:, p - 1] * xi
            yp[:, p] = yp[:, p - 1] * eta
        out = np.zeros((pts.shape[0], self.size))
        scale = self.h ** (-(dx + dy))
        for i, (a, b) in enumerate(self.exponents):
            if a < dx or b < dy:
                continue
            c = factorial(a) // factorial(a - dx) * (factorial(b) // factorial(b - dy))
            out[:, i] = c * scale * xp[:, a - dx] * yp[:, b - dy]
        return out

    def values(self, points) -> np.ndarray:
        return self.derivative(points)

    def gradient(self, points) -> np.ndarray:
        """Shape (n_points, size, 2)."""
        return np.stack([self.derivative(points, 1, 0), self.derivative(points, 0, 1)], axis=-1)

    def hessian(self, points) -> np.ndarray:
        """Shape (n_points, size, 2, 2)."""
        hxx = self.derivative(points, 2, 0)
        hxy = self.derivative(points, 1, 1)
        hyy = self.derivative(points, 0, 2)
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

    def grad_laplacian(self, points) -> np.ndarray:
        """grad(Laplacian) = div(Hessian); shape (n_points, size, 2)."""
        gx = self.derivative(points, 3, 0) + self.derivative(points, 1, 2)
        gy = self.derivative(points, 2, 1) + self.derivative(points, 0, 3)
        return np.stack([gx, gy], axis=-1)

    def bilaplacian_coefficients(self) -> np.ndarray:
        """Matrix L with Delta^2 m_alpha = sum_beta L[beta, alpha] m_beta, |beta| <= degree-4."""
        n_low = poly_space_dim(self.degree - 4)
        out = np.zeros((n_low, self.size))
        s = self.h ** -4
        for i, (a, b) in enumerate(self.exponents):
            for da, db, c in ((4, 0, 1.0), (2, 2, 2.0), (0, 4, 1.0)):
                if a >= da and b >= db:
                    f = (factorial(a) // factorial(a - da)) * (factorial(b) // factorial(b - db))
                    out[monomial_index(a - da, b - db), i] += c * f * s
        return out


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Contract the leading (point) axis of `values` with the weights."""
        return np.tensordot(self.weights, values, axes=(0, 0))


@lru_cache(maxsize=None)
def _gauss_legendre01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _collapsed_triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    # Conical product rule on the reference triangle {s, t >= 0, s + t <= 1}.
    # Gauss-Jacobi(1, 0) in the collapsed direction absorbs the (1 - t) Jacobian.
    n = degree // 2 + 1
    u, wu = _gauss_legendre01(n)
    from scipy.special import roots_jacobi

    tj, wj = roots_jacobi(n, 1.0, 0.0)
    t = 0.5 * (tj + 1.0)
    wt = wj / 4.0
    s = np.outer(1.0 - t, u)
    tt = np.repeat(t[:, None], n, axis=1)
    w = np.outer(wt, wu)
    pts = np.column_stack([s.ravel(), tt.ravel()])
    return pts, w.ravel()


def triangle_quadrature(p0, p1, p2, degree: int) -> QuadratureRule:
    """Positive-weight rule exact to `degree` on the triangle (p0, p1, p2)."""
    p0, p1, p2 = (np.asarray(p, dtype=float) for p in (p0, p1, p2))
    ref, w = _collapsed_triangle_rule(degree)
    e1, e2 = p1 - p0, p2 - p0
    det = e1[0] * e2[1] - e1[1] * e2[0]
    pts = p0 + ref[:, :1] * e1 + ref[:, 1:] * e2
    return QuadratureRule(pts, w * abs(det), degree)


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_quadrature(polygon, degree: int, center=None) -> QuadratureRule:
    """Rule exact to `degree` on a polygon, fanning triangles from `center`.

    `center` defaults to the area centroid; it must see every edge (the polygon
    must be star-shaped with respect to it), otherwise ValueError is raised.
    """
    poly = np.asarray(polygon, dtype=float)
    if poly.ndim != 2 or poly.shape[0] < 3:
        raise ValueError("polygon needs at least three vertices")
    if _signed_area(poly) <= 0.0:
        raise ValueError("polygon must be counterclockwise with positive area")
    if center is None:
        center = polygon_centroid(poly)
    c = np.asarray(center, dtype=float)
    ref, w = _collapsed_triangle_rule(degree)
    nv = poly.shape[0]
    a = poly
    b = np.roll(poly, -1, axis=0)
    e1 = a - c
    e2 = b - c
    dets = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    scale = np.abs(poly - c).max()
    if np.any(dets <= 1e-14 * scale * scale):
        raise ValueError("polygon is not star-shaped with respect to the fan center")
    pts = c + ref[None, :, :1] * e1[:, None, :] + ref[None, :, 1:] * e2[:, None, :]
    wts = dets[:, None] * w[None, :]
    return QuadratureRule(pts.reshape(nv * len(w), 2), wts.ravel(), degree)


def polygon_centroid(polygon) -> np.ndarray:
    poly = np.asarray(polygon, dtype=float)
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def edge_quadrature(a, b, degree: int) -> QuadratureRule:
    """Gauss-Legendre rule with ceil((degree+1)/2) points on segment [a, b]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.hypot(*(b - a)))
    if length == 0.0:
        raise ValueError("zero-length edge")
    t, w = _gauss_legendre01(max(1, (degree + 2) // 2))
    pts = a + t[:, None] * (b - a)
    return QuadratureRule(pts, w * length, degree)


def gauss_legendre_unit(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1], exact to `degree`."""
    return _gauss_legendre01(max(1, (degree + 2) // 2))


@lru_cache(maxsize=None)
def shifted_legendre_coefficients(n: int) -> np.ndarray:
    """Row j holds power-basis coefficients of the Legendre polynomial P_j(2t - 1)."""
    out = np.zeros((n + 1, n + 1))
    for j in range(n + 1):
        for i in range(j + 1):
            out[j, i] = (-1) ** (j + i) * comb(j, i) * comb(j + i, i)
    return out


def shifted_legendre(n: int, t) -> np.ndarray:
    """Values of P_0..P_n(2t - 1) at the points t; shape (len(t), n + 1)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if n < 0:
        return np.zeros((t.size, 0))
    coef = shifted_legendre_coefficients(n)
    powers = t[:, None] ** np.arange(n + 1)[None, :]
    return powers @ coef.T
