"""Local C1 virtual element: degrees of freedom, projectors, element matrices.

Local DOF ordering for a polygon with n vertices and order k (r = max(3, k),
s = k - 1):

    [ v(x_i)                       i = 0..n-1              ]
    [ h dv/dx(x_i), h dv/dy(x_i)   interleaved per vertex   ]
    [ (1/|e|) int_e L_j v          j < r - 3, edge by edge  ]
    [ (h/|e|) int_e L_j d_nu v     j < s - 1, edge by edge  ]
    [ (1/|K|) int_K m_b v          |b| <= k - 4             ]

L_j are Legendre polynomials on the edge parametrised from v_i to v_{i+1},
nu is the outward normal and m_b the scaled monomials of the element.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.linalg as sla

from .mesh import ElementGeometry, polygon_geometry
from .polyquad import (
    ScaledMonomialBasis,
    gauss_legendre_unit,
    poly_space_dim,
    polygon_quadrature,
    shifted_legendre,
)

EtaLike = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class LocalDofLayout:
    k: int
    n_vertices: int

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("the C1 virtual element needs k >= 2")
        if self.n_vertices < 3:
            raise ValueError("an element needs at least three vertices")

    @property
    def r(self) -> int:
        return max(3, self.k)

    @property
    def s(self) -> int:
        return self.k - 1

    @property
    def n_trace_moments(self) -> int:
        return self.r - 3

    @property
    def n_normal_moments(self) -> int:
        return self.s - 1

    @property
    def n_interior(self) -> int:
        return poly_space_dim(self.k - 4)

    @property
    def size(self) -> int:
        n = self.n_vertices
        return 3 * n + (self.n_trace_moments + self.n_normal_moments) * n + self.n_interior

    def value(self, i: int) -> int:
        return i

    def grad(self, i: int, comp: int) -> int:
        return self.n_vertices + 2 * i + comp

    def trace_moment(self, e: int, j: int) -> int:
        return 3 * self.n_vertices + e * self.n_trace_moments + j

    def normal_moment(self, e: int, j: int) -> int:
        return 3 * self.n_vertices + self.n_vertices * self.n_trace_moments + e * self.n_normal_moments + j

    def interior(self, b: int) -> int:
        return self.size - self.n_interior + b

    def describe(self) -> list[tuple]:
        """One descriptor tuple per DOF, in storage order."""
        n = self.n_vertices
        out: list[tuple] = [("value", i) for i in range(n)]
        out += [("grad", i, c) for i in range(n) for c in (0, 1)]
        out += [("trace", e, j) for e in range(n) for j in range(self.n_trace_moments)]
        out += [("normal", e, j) for e in range(n) for j in range(self.n_normal_moments)]
        out += [("interior", b) for b in range(self.n_interior)]
        return out


def build_dof_layout(k: int, polygon) -> LocalDofLayout:
    return LocalDofLayout(int(k), int(np.asarray(polygon).shape[0]))


@dataclass(frozen=True)
class EdgeTrace:
    """Power-basis coefficients in the edge parameter t in [0, 1]."""

    value: np.ndarray
    normal_derivative: np.ndarray

    def eval_value(self, t) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), self.value)

    def eval_normal(self, t) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), self.normal_derivative)


class _EdgeMaps:
    """Linear maps from local DOFs to the trace and normal-derivative coefficients."""

    def __init__(self, layout: LocalDofLayout, geo: ElementGeometry, e: int):
        n, r, s = layout.n_vertices, layout.r, layout.s
        h = geo.diameter
        i, ip = e, (e + 1) % n
        ell = geo.lengths[e]
        tau, nu = geo.tangents[e], geo.normals[e]
        nd = layout.size

        # v|_e in P_r: endpoint values, endpoint d/dt, Legendre moments
        cond = np.zeros((r + 1, r + 1))
        data = np.zeros((r + 1, nd))
        p = np.arange(r + 1)
        cond[0, 0] = 1.0
        cond[1, :] = 1.0
        cond[2, 1] = 1.0
        cond[3, :] = p
        data[0, layout.value(i)] = 1.0
        data[1, layout.value(ip)] = 1.0
        for c in range(2):
            data[2, layout.grad(i, c)] = ell * tau[c] / h
            data[3, layout.grad(ip, c)] = ell * tau[c] / h
        nm = layout.n_trace_moments
        if nm:
            cond[4:, :] = _legendre_power_moments(nm - 1, r)
            for j in range(nm):
                data[4 + j, layout.trace_moment(e, j)] = 1.0
        self.value = np.linalg.solve(cond, data)

        # d_nu v|_e in P_s: endpoint normal derivatives, Legendre moments
        cond = np.zeros((s + 1, s + 1))
        data = np.zeros((s + 1, nd))
        cond[0, 0] = 1.0
        cond[1, :] = 1.0
        for c in range(2):
            data[0, layout.grad(i, c)] = nu[c] / h
            data[1, layout.grad(ip, c)] = nu[c] / h
        nm = layout.n_normal_moments
        if nm:
            cond[2:, :] = _legendre_power_moments(nm - 1, s)
            for j in range(nm):
                data[2 + j, layout.normal_moment(e, j)] = 1.0 / h
        self.normal = np.linalg.solve(cond, data)
        self.length = ell
        self.tangent = tau
        self.normal_vec = nu
        self.start = geo.vertices[i]
        self.end = geo.vertices[ip]


def _legendre_power_moments(jmax: int, deg: int) -> np.ndarray:
    """M[j, p] = int_0^1 L_j(t) t^p dt."""
    t, w = gauss_legendre_unit(jmax + deg)
    L = shifted_legendre(jmax, t)
    P = t[:, None] ** np.arange(deg + 1)[None, :]
    return (L * w[:, None]).T @ P


def edge_trace(layout: LocalDofLayout, geometry: ElementGeometry, edge: int, dofs) -> EdgeTrace:
    """Reconstruct v|_e and d_nu v|_e on local edge `edge` from a local DOF vector."""
    dofs = np.asarray(dofs, dtype=float)
    if dofs.shape != (layout.size,):
        raise ValueError(f"DOF vector has shape {dofs.shape}, layout expects ({layout.size},)")
    if layout.n_vertices != geometry.n_vertices or not 0 <= edge < layout.n_vertices:
        raise ValueError("edge/layout inconsistent with element geometry")
    maps = _EdgeMaps(layout, geometry, edge)
    return EdgeTrace(maps.value @ dofs, maps.normal @ dofs)


@dataclass(frozen=True)
class ElementOperators:
    """Projector matrices (DOFs -> scaled monomial coefficients) and local forms.

    Attributes
    ----------
    energy : (n_k, n_dof)        coefficients of the Hessian-energy projection
    l2 : (n_{k-2}, n_dof)        coefficients of the L2 projection onto P_{k-2}
    grad_x, grad_y : (n_{k-1}, n_dof)  L2 projection of the gradient onto P_{k-1}^2
    dofs_of_monomials : (n_dof, n_k)
    consistency, stabilization : (n_dof, n_dof), sum is the stiffness A_K
    geometric : (n_dof, n_dof)   B_K
    """

    layout: LocalDofLayout
    geometry: ElementGeometry
    basis: ScaledMonomialBasis
    energy: np.ndarray
    l2: np.ndarray
    grad_x: np.ndarray
    grad_y: np.ndarray
    dofs_of_monomials: np.ndarray
    hessian_gram: np.ndarray
    mass: np.ndarray
    consistency: np.ndarray
    stabilization: np.ndarray
    sigma: float
    geometric: np.ndarray | None

    @property
    def stiffness(self) -> np.ndarray:
        return self.consistency + self.stabilization

    @property
    def projection(self) -> np.ndarray:
        """DOF-to-DOF matrix of the energy projection."""
        return self.dofs_of_monomials @ self.energy


def _as_eta(eta: EtaLike) -> Callable[[np.ndarray], np.ndarray]:
    if callable(eta):
        return eta
    mat = np.asarray(eta, dtype=float)
    if mat.shape != (2, 2):
        raise ValueError("eta must be a 2x2 matrix or a callable returning (n, 2, 2)")
    if not np.allclose(mat, mat.T, rtol=0.0, atol=0.0):
        raise ValueError("eta must be symmetric")
    return lambda pts: np.broadcast_to(mat, (len(pts), 2, 2))


STABILIZATIONS = ("boundary", "dofi", "combined")


class LocalElement:
    """Geometry-dependent operators of one polygon; the load tensor enters only in B_K.

    ``stabilization`` selects the form added on the non-polynomial part
    w = v - Pi v of the DOF vector:

    * ``"dofi"``: sigma * |w|^2 over all DOFs, sigma = trace(consistency) / n_dof.
    * ``"boundary"``: sum over edges of |e| * int_e (d_tt w)^2 + (d_t d_nu w)^2,
      computed from the edge traces, plus the ``"dofi"`` term restricted to the
      interior moments (k >= 4), which the traces do not see.

    The result is multiplied by ``stab_scale``.
    """

    def __init__(self, vertices, k: int, fan_center=None, stabilization: str = "combined", stab_scale: float = 1.0):
        if stabilization not in STABILIZATIONS:
            raise ValueError(f"unknown stabilization {stabilization!r}")
        if not stab_scale > 0:
            raise ValueError("stab_scale must be positive")
        self.stabilization_kind = stabilization
        self.stab_scale = float(stab_scale)
        self.vertices = np.asarray(vertices, dtype=float)
        self.geometry = polygon_geometry(self.vertices)
        self.layout = LocalDofLayout(int(k), self.vertices.shape[0])
        k = self.layout.k
        geo = self.geometry
        self.basis = ScaledMonomialBasis(geo.centroid, geo.diameter, k)
        self.fan_center = fan_center
        self.quad = polygon_quadrature(self.vertices, 2 * k + 2, center=fan_center)
        self.edges = [_EdgeMaps(self.layout, geo, e) for e in range(self.layout.n_vertices)]
        self._edge_pts = self._edge_points()
        self._build()

    def _edge_points(self):
        r = self.layout.r
        t, w = gauss_legendre_unit(2 * max(r, self.layout.k) + 2)
        out = []
        for em in self.edges:
            pts = em.start + t[:, None] * (em.end - em.start)
            out.append((t, w * em.length, pts))
        return out

    def _trace_at(self, e: int, t: np.ndarray):
        """(value, grad) operators at edge points t: shapes (q, nd) and (q, 2, nd)."""
        em = self.edges[e]
        r, s = self.layout.r, self.layout.s
        V = t[:, None] ** np.arange(r + 1)[None, :]
        dV = np.zeros_like(V)
        dV[:, 1:] = np.arange(1, r + 1)[None, :] * t[:, None] ** np.arange(r)[None, :]
        val = V @ em.value
        dtau = (dV @ em.value) / em.length
        dnu = (t[:, None] ** np.arange(s + 1)[None, :]) @ em.normal
        grad = em.tangent[None, :, None] * dtau[:, None, :] + em.normal_vec[None, :, None] * dnu[:, None, :]
        return val, grad

    def _build(self):
        lay, geo, basis, quad = self.layout, self.geometry, self.basis, self.quad
        k, n, nd = lay.k, lay.n_vertices, lay.size
        nk = basis.size
        h = geo.diameter
        area = geo.area

        # polynomial Gram matrices over K
        hess = basis.hessian(quad.points)
        self.hessian_gram = np.einsum("q,qaij,qbij->ab", quad.weights, hess, hess)
        mvals = basis.values(quad.points)
        self.mass = (mvals * quad.weights[:, None]).T @ mvals

        # right-hand side of the energy projection, integrated by parts twice
        rhs = np.zeros((nk, nd))
        if lay.n_interior:
            lap2 = basis.bilaplacian_coefficients()
            for b in range(lay.n_interior):
                rhs[:, lay.interior(b)] += area * lap2[b, :]
        self._edge_ops = []
        for e in range(n):
            t, w, pts = self._edge_pts[e]
            nu = self.edges[e].normal_vec
            val, grad = self._trace_at(e, t)
            self._edge_ops.append((t, w, pts, val, grad))
            gl = basis.grad_laplacian(pts) @ nu  # (q, nk)
            hn = basis.hessian(pts) @ nu  # (q, nk, 2)
            rhs -= (gl * w[:, None]).T @ val
            rhs += np.einsum("q,qac,qcd->ad", w, hn, grad)

        # P1 kernel fixed by vertex means of the value and of h * gradient
        vpts = geo.vertices
        lhs = self.hessian_gram.copy()
        lhs[0] = basis.values(vpts).mean(axis=0)
        lhs[1] = h * basis.derivative(vpts, 1, 0).mean(axis=0)
        lhs[2] = h * basis.derivative(vpts, 0, 1).mean(axis=0)
        rhs[:3] = 0.0
        rhs[0, [lay.value(i) for i in range(n)]] = 1.0 / n
        rhs[1, [lay.grad(i, 0) for i in range(n)]] = 1.0 / n
        rhs[2, [lay.grad(i, 1) for i in range(n)]] = 1.0 / n
        try:
            self.energy = sla.solve(lhs, rhs)
        except sla.LinAlgError as exc:
            raise np.linalg.LinAlgError("singular energy-projection system; check element shape") from exc

        self.dofs_of_monomials = self._monomial_dofs()

        # L2 projection onto P_{k-2}: interior moments below k-3, enhancement above
        n2 = poly_space_dim(k - 2)
        n4 = poly_space_dim(k - 4)
        l2_rhs = np.zeros((n2, nd))
        for b in range(n4):
            l2_rhs[b, lay.interior(b)] = area
        l2_rhs[n4:] = self.mass[n4:n2, :] @ self.energy
        self.l2 = sla.solve(self.mass[:n2, :n2], l2_rhs, assume_a="pos")

        # L2 projection of the gradient onto P_{k-1}^2
        n1 = poly_space_dim(k - 1)
        sub = ScaledMonomialBasis(geo.centroid, h, k - 1)
        low = ScaledMonomialBasis(geo.centroid, h, max(k - 2, 0))
        dx = sub.derivative(quad.points, 1, 0)
        dy = sub.derivative(quad.points, 0, 1)
        lv = low.values(quad.points)[:, :n2]
        Qx = (dx * quad.weights[:, None]).T @ lv
        Qy = (dy * quad.weights[:, None]).T @ lv
        gx = -Qx @ self.l2
        gy = -Qy @ self.l2
        for e in range(n):
            t, w, pts, val, _ = self._edge_ops[e]
            nu = self.edges[e].normal_vec
            mv = sub.values(pts) * w[:, None]
            gx += nu[0] * mv.T @ val
            gy += nu[1] * mv.T @ val
        m1 = self.mass[:n1, :n1]
        self.grad_x = sla.solve(m1, gx, assume_a="pos")
        self.grad_y = sla.solve(m1, gy, assume_a="pos")

        # stiffness: consistency + scaled DOF-Euclidean stabilization
        C = self.energy
        self.consistency = C.T @ self.hessian_gram @ C
        self.consistency = 0.5 * (self.consistency + self.consistency.T)
        self.sigma = float(np.trace(self.consistency)) / nd
        I_P = np.eye(nd) - self.dofs_of_monomials @ C
        if self.stabilization_kind == "dofi":
            S = self.sigma * (I_P.T @ I_P)
        elif self.stabilization_kind == "combined":
            S = self.sigma * (I_P.T @ I_P) + self._boundary_form(I_P)
        else:
            S = self._boundary_form(I_P)
            if lay.n_interior:
                R = I_P[nd - lay.n_interior :]
                S += self.sigma * (R.T @ R)
        S = self.stab_scale * S
        self.stabilization = 0.5 * (S + S.T)

    def _boundary_form(self, I_P: np.ndarray) -> np.ndarray:
        lay = self.layout
        r, s = lay.r, lay.s
        t, w = gauss_legendre_unit(2 * r)
        d2 = np.zeros((len(t), r + 1))
        for p in range(2, r + 1):
            d2[:, p] = p * (p - 1) * t ** (p - 2)
        d1 = np.zeros((len(t), s + 1))
        for p in range(1, s + 1):
            d1[:, p] = p * t ** (p - 1)
        out = np.zeros((lay.size, lay.size))
        for em in self.edges:
            ell = em.length
            wt = (w * ell * ell)[:, None]
            vtt = (d2 @ em.value) @ I_P / ell**2
            vtn = (d1 @ em.normal) @ I_P / ell
            out += (vtt * wt).T @ vtt + (vtn * wt).T @ vtn
        return out

    def _monomial_dofs(self) -> np.ndarray:
        lay, geo, basis = self.layout, self.geometry, self.basis
        n, nd, nk = lay.n_vertices, lay.size, basis.size
        h = geo.diameter
        D = np.zeros((nd, nk))
        vpts = geo.vertices
        D[:n] = basis.values(vpts)
        gx = h * basis.derivative(vpts, 1, 0)
        gy = h * basis.derivative(vpts, 0, 1)
        for i in range(n):
            D[lay.grad(i, 0)] = gx[i]
            D[lay.grad(i, 1)] = gy[i]
        for e in range(n):
            t, w, pts, _, _ = self._edge_ops[e]
            wt = w / self.edges[e].length
            if lay.n_trace_moments:
                L = shifted_legendre(lay.n_trace_moments - 1, t)
                D[[lay.trace_moment(e, j) for j in range(lay.n_trace_moments)]] = (L * wt[:, None]).T @ basis.values(pts)
            if lay.n_normal_moments:
                L = shifted_legendre(lay.n_normal_moments - 1, t)
                dn = basis.gradient(pts) @ self.edges[e].normal_vec
                D[[lay.normal_moment(e, j) for j in range(lay.n_normal_moments)]] = h * (L * wt[:, None]).T @ dn
        for b in range(lay.n_interior):
            D[lay.interior(b)] = self.mass[b] / geo.area
        return D

    def geometric_matrix(self, eta: EtaLike) -> np.ndarray:
        """B_K = E^T M_eta E with E the projected-gradient coefficient map."""
        fn = _as_eta(eta)
        quad = self.quad
        n1 = poly_space_dim(self.layout.k - 1)
        vals = self.basis.values(quad.points)[:, :n1]
        et = np.asarray(fn(quad.points), dtype=float)
        if et.shape != (len(quad.points), 2, 2):
            raise ValueError("eta callable must return an array of shape (n_points, 2, 2)")
        if not np.array_equal(et[:, 0, 1], et[:, 1, 0]):
            raise ValueError("eta must be symmetric")
        E = (self.grad_x, self.grad_y)
        B = np.zeros((self.layout.size, self.layout.size))
        for a in range(2):
            for b in range(2):
                coef = quad.weights * et[:, a, b]
                if not np.any(coef):
                    continue
                M = (vals * coef[:, None]).T @ vals
                B += E[a].T @ M @ E[b]
        return 0.5 * (B + B.T)

    def operators(self, eta: EtaLike | None = None) -> ElementOperators:
        return ElementOperators(
            layout=self.layout,
            geometry=self.geometry,
            basis=self.basis,
            energy=self.energy,
            l2=self.l2,
            grad_x=self.grad_x,
            grad_y=self.grad_y,
            dofs_of_monomials=self.dofs_of_monomials,
            hessian_gram=self.hessian_gram,
            mass=self.mass,
            consistency=self.consistency,
            stabilization=self.stabilization,
            sigma=self.sigma,
            geometric=None if eta is None else self.geometric_matrix(eta),
        )


def local_matrices(vertices, k: int, eta: EtaLike, fan_center=None, **stab) -> tuple[np.ndarray, np.ndarray]:
    """(A_K, B_K) for one polygon; keyword arguments go to LocalElement."""
    el = LocalElement(vertices, k, fan_center=fan_center, **stab)
    return el.consistency + el.stabilization, el.geometric_matrix(eta)


def polynomial_dofs(element: LocalElement, coeffs) -> np.ndarray:
    """Local DOF vector of the polynomial sum_a coeffs[a] m_a (coeffs padded to P_k)."""
    c = np.zeros(element.basis.size)
    c[: len(coeffs)] = coeffs
    return element.dofs_of_monomials @ c


def interpolate_function(element: LocalElement, f, grad_f, interior_moments=None) -> np.ndarray:
    """Local DOFs of a smooth function from callables for f and its gradient.

    Edge and interior moments are evaluated by quadrature; ``grad_f`` returns
    an array of shape (n, 2).
    """
    lay, geo = element.layout, element.geometry
    n, h = lay.n_vertices, geo.diameter
    out = np.zeros(lay.size)
    vpts = geo.vertices
    out[:n] = f(vpts)
    g = grad_f(vpts)
    for i in range(n):
        out[lay.grad(i, 0)] = h * g[i, 0]
        out[lay.grad(i, 1)] = h * g[i, 1]
    for e in range(n):
        t, w, pts, _, _ = element._edge_ops[e]
        wt = w / element.edges[e].length
        if lay.n_trace_moments:
            L = shifted_legendre(lay.n_trace_moments - 1, t)
            for j in range(lay.n_trace_moments):
                out[lay.trace_moment(e, j)] = np.sum(wt * L[:, j] * f(pts))
        if lay.n_normal_moments:
            L = shifted_legendre(lay.n_normal_moments - 1, t)
            dn = grad_f(pts) @ element.edges[e].normal_vec
            for j in range(lay.n_normal_moments):
                out[lay.normal_moment(e, j)] = h * np.sum(wt * L[:, j] * dn)
    if lay.n_interior:
        q = element.quad
        mv = element.basis.values(q.points)[:, : lay.n_interior]
        fv = f(q.points)
        out[lay.size - lay.n_interior :] = (q.weights * fv) @ mv / geo.area
    return out
