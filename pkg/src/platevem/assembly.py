"""Global DOF numbering, boundary conditions and assembly of the pair (A, B)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .element import EtaLike, LocalElement
from .mesh import PolygonalMesh
from .polyquad import poly_space_dim

CONDITIONS = ("clamped", "simply_supported", "free")


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """The stiffness matrix failed the positive-definiteness check."""


@dataclass(frozen=True)
class DofMap:
    """Global numbering.

    Vertex v owns rows 3v (value), 3v+1 (d/dx), 3v+2 (d/dy). Edge dofs follow,
    trace moments before normal moments, with moments taken along the global
    edge direction low -> high vertex index and normal = that tangent turned
    clockwise. Interior moments come last.
    """

    k: int
    n_vertices: int
    n_edges: int
    n_cells: int
    local_index: tuple[np.ndarray, ...]
    local_scale: tuple[np.ndarray, ...]

    @property
    def r(self) -> int:
        return max(3, self.k)

    @property
    def s(self) -> int:
        return self.k - 1

    @property
    def per_edge(self) -> int:
        return (self.r - 3) + (self.s - 1)

    @property
    def per_cell(self) -> int:
        return poly_space_dim(self.k - 4)

    @property
    def size(self) -> int:
        return 3 * self.n_vertices + self.per_edge * self.n_edges + self.per_cell * self.n_cells

    def edge_dof(self, edge: int, j: int) -> int:
        """j-th dof of a global edge: trace moments first, then normal moments."""
        return 3 * self.n_vertices + self.per_edge * edge + j

    def cell_dof(self, cell: int, b: int) -> int:
        return 3 * self.n_vertices + self.per_edge * self.n_edges + self.per_cell * cell + b


def build_dof_map(mesh: PolygonalMesh, k: int, diameters=None) -> DofMap:
    """Local-to-global index and scale per cell: local_dof = scale * global_dof."""
    k = int(k)
    if k < 2:
        raise ValueError("k must be >= 2")
    r, s = max(3, k), k - 1
    nt, nn = r - 3, s - 1
    nint = poly_space_dim(k - 4)
    nv, ne = mesh.n_vertices, mesh.n_edges
    per_edge = nt + nn
    edge_base = 3 * nv
    cell_base = edge_base + per_edge * ne
    idx_all, scl_all = [], []
    for c, cell in enumerate(mesh.cells):
        m = len(cell)
        h = diameters[c] if diameters is not None else mesh.element_geometry(c).diameter
        size = 3 * m + per_edge * m + nint
        idx = np.empty(size, dtype=np.int64)
        scl = np.ones(size)
        cell_arr = np.asarray(cell)
        idx[:m] = 3 * cell_arr
        idx[m : 3 * m : 2] = 3 * cell_arr + 1
        idx[m + 1 : 3 * m : 2] = 3 * cell_arr + 2
        scl[m : 3 * m] = h
        gedges = mesh.cell_edges[c]
        for e in range(m):
            reversed_ = cell[e] > cell[(e + 1) % m]
            for j in range(nt):
                pos = 3 * m + e * nt + j
                idx[pos] = edge_base + per_edge * gedges[e] + j
                scl[pos] = (-1.0) ** j if reversed_ else 1.0
            for j in range(nn):
                pos = 3 * m + m * nt + e * nn + j
                idx[pos] = edge_base + per_edge * gedges[e] + nt + j
                # reversed: t -> 1 - t flips odd Legendre modes, normal flips sign
                scl[pos] = h * (-((-1.0) ** j) if reversed_ else 1.0)
        for b in range(nint):
            idx[size - nint + b] = cell_base + nint * c + b
        idx_all.append(idx)
        scl_all.append(scl)
    return DofMap(k, nv, ne, mesh.n_cells, tuple(idx_all), tuple(scl_all))


@dataclass(frozen=True)
class BoundarySpec:
    """Condition per boundary segment tag."""

    conditions: Mapping[int, str]

    def __post_init__(self):
        for tag, cond in self.conditions.items():
            if cond not in CONDITIONS:
                raise ValueError(f"unknown boundary condition {cond!r} for tag {tag}")

    @classmethod
    def clamped(cls, mesh: PolygonalMesh) -> "BoundarySpec":
        return cls({t: "clamped" for t in mesh.boundary_tags()})

    @classmethod
    def uniform(cls, mesh: PolygonalMesh, condition: str) -> "BoundarySpec":
        return cls({t: condition for t in mesh.boundary_tags()})

    @classmethod
    def preset(cls, name: str, mesh: PolygonalMesh) -> "BoundarySpec":
        if name == "clamped":
            return cls.clamped(mesh)
        if name == "ss_free_test3":
            if mesh.domain != "square":
                raise ValueError("ss_free_test3 is defined on the square only")
            # loaded edges x = 0 (tag 3) and x = 1 (tag 1) simply supported
            return cls({0: "free", 1: "simply_supported", 2: "free", 3: "simply_supported"})
        if name == "free":
            return cls.uniform(mesh, "free")
        raise ValueError(f"unknown boundary preset {name!r}")


def constrain(dofmap: DofMap, mesh: PolygonalMesh, bc: BoundarySpec) -> tuple[np.ndarray, np.ndarray]:
    """Return (free, constrained) global DOF index arrays."""
    fixed = np.zeros(dofmap.size, dtype=bool)
    tags = set(mesh.boundary_tags())
    missing = tags - set(bc.conditions)
    if missing:
        raise ValueError(f"boundary tags without a condition: {sorted(missing)}")
    edge_lookup = {tuple(e): i for i, e in enumerate(mesh.edges.tolist())}
    nt = dofmap.r - 3
    for a, b, tag in mesh.boundary_edges.tolist():
        cond = bc.conditions[tag]
        if cond == "free":
            continue
        gid = edge_lookup[(min(a, b), max(a, b))]
        edofs = [dofmap.edge_dof(gid, j) for j in range(dofmap.per_edge)]
        if cond == "clamped":
            for v in (a, b):
                fixed[3 * v : 3 * v + 3] = True
            fixed[edofs] = True
        else:
            d = mesh.vertices[b] - mesh.vertices[a]
            if abs(d[1]) <= 1e-12 * abs(d[0]):
                tangential = 1
            elif abs(d[0]) <= 1e-12 * abs(d[1]):
                tangential = 2
            else:
                raise ValueError("simply supported edges must be axis-aligned")
            for v in (a, b):
                fixed[3 * v] = True
                fixed[3 * v + tangential] = True
            fixed[edofs[:nt]] = True
    return np.flatnonzero(~fixed), np.flatnonzero(fixed)


@dataclass
class GlobalSystem:
    A: sp.csr_matrix
    B: sp.csr_matrix
    free: np.ndarray
    dofmap: DofMap
    mesh: PolygonalMesh
    elements: list = field(default_factory=list, repr=False)

    @property
    def n_free(self) -> int:
        return len(self.free)

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        """Full DOF vector with zeros on constrained entries."""
        out = np.zeros(self.dofmap.size, dtype=np.result_type(u_free, float))
        out[self.free] = u_free
        return out


def build_elements(mesh: PolygonalMesh, k: int, **stab) -> list[LocalElement]:
    """One LocalElement per cell; keyword arguments select the stabilization."""
    centers = mesh.kernel_centers
    return [LocalElement(mesh.cell_coords(c), k, fan_center=centers[c], **stab) for c in range(mesh.n_cells)]


def assemble_full(mesh: PolygonalMesh, k: int, eta: EtaLike, elements=None, dofmap=None):
    """Unconstrained global (A, B) together with the elements and the DOF map."""
    if elements is None:
        elements = build_elements(mesh, k)
    if dofmap is None:
        dofmap = build_dof_map(mesh, k, diameters=[el.geometry.diameter for el in elements])
    rows, cols, va, vb = [], [], [], []
    for c, el in enumerate(elements):
        idx, scl = dofmap.local_index[c], dofmap.local_scale[c]
        S = np.outer(scl, scl)
        AK = (el.consistency + el.stabilization) * S
        BK = el.geometric_matrix(eta) * S
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        va.append(AK.ravel())
        vb.append(BK.ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    n = dofmap.size
    A = sp.coo_matrix((np.concatenate(va), (rows, cols)), shape=(n, n)).tocsr()
    B = sp.coo_matrix((np.concatenate(vb), (rows, cols)), shape=(n, n)).tocsr()
    return A, B, elements, dofmap


def check_positive_definite(A) -> None:
    """Raise NotPositiveDefiniteError unless A admits an LDL^T with positive pivots."""
    n = A.shape[0]
    if n == 0:
        return
    if not sp.issparse(A) or n <= 400:
        import scipy.linalg as sla

        dense = A.toarray() if sp.issparse(A) else np.asarray(A)
        try:
            L = sla.cholesky(dense, lower=True)
        except sla.LinAlgError as exc:
            raise NotPositiveDefiniteError("stiffness matrix is not positive definite") from exc
        d = np.diag(L) ** 2
    else:
        lu = spla.splu(
            sp.csc_matrix(A),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
        d = lu.U.diagonal()
        if np.any(d <= 0.0):
            raise NotPositiveDefiniteError("stiffness matrix is not positive definite")
    if d.min() <= 1e-13 * d.max():
        raise NotPositiveDefiniteError("stiffness matrix is singular to working precision")


def assemble(
    mesh: PolygonalMesh,
    k: int,
    eta: EtaLike,
    bc: BoundarySpec | str = "clamped",
    elements=None,
    verify: bool = True,
) -> GlobalSystem:
    """Assemble and reduce to the free DOFs (homogeneous essential conditions)."""
    if isinstance(bc, str):
        bc = BoundarySpec.preset(bc, mesh)
    A, B, elements, dofmap = assemble_full(mesh, k, eta, elements=elements)
    free, _ = constrain(dofmap, mesh, bc)
    Af = A[free][:, free].tocsr()
    Bf = B[free][:, free].tocsr()
    Af = ((Af + Af.T) * 0.5).tocsr()
    Bf = ((Bf + Bf.T) * 0.5).tocsr()
    if verify:
        check_positive_definite(Af)
    return GlobalSystem(Af, Bf, free, dofmap, mesh, elements)


def write_matrix_market(matrix, path, comment: str = "") -> None:
    """Symmetric coordinate dump (1-based), readable by any MatrixMarket reader."""
    from scipy.io import mmwrite

    mmwrite(str(path), sp.coo_matrix(matrix), comment=comment, symmetry="symmetric")
