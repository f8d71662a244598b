"""Polygonal meshes of the unit square and the L-shaped domain.

Four families are provided, labelled T1..T4:

* ``T1`` trapezoids, N x N, all similar to (0,0), (1/2,0), (1/2,2/3), (0,1/3)
* ``T2`` flat-top hexagons clipped to the square (quads/pentagons on the boundary)
* ``T3`` right triangles, each grid square cut along its rising diagonal
* ``T4`` squares split into one convex and one concave quadrilateral
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

FAMILIES = ("T1", "T2", "T3", "T4")
DOMAINS = ("square", "lshape")
DOMAIN_AREA = {"square": 1.0, "lshape": 0.75}

# Boundary segments, counterclockwise, one tag per segment.
SEGMENTS = {
    "square": [((0, 0), (1, 0)), ((1, 0), (1, 1)), ((1, 1), (0, 1)), ((0, 1), (0, 0))],
    "lshape": [
        ((0, 0), (1, 0)),
        ((1, 0), (1, 0.5)),
        ((1, 0.5), (0.5, 0.5)),
        ((0.5, 0.5), (0.5, 1)),
        ((0.5, 1), (0, 1)),
        ((0, 1), (0, 0)),
    ],
}

MERGE_TOL = 1e-12


class MeshError(ValueError):
    """Invalid mesh data or unsupported generator request."""


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class ElementGeometry:
    vertices: np.ndarray
    centroid: np.ndarray
    diameter: float
    area: float
    normals: np.ndarray
    tangents: np.ndarray
    lengths: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]


def polygon_geometry(vertices) -> ElementGeometry:
    """Area centroid, diameter, and outward unit normals of a CCW polygon."""
    v = np.asarray(vertices, dtype=float)
    area = signed_area(v)
    if area <= 0.0:
        raise MeshError("polygon must be counterclockwise with positive area")
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    centroid = np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * area)
    diff = v[:, None, :] - v[None, :, :]
    diameter = float(np.sqrt((diff**2).sum(-1)).max())
    evec = np.roll(v, -1, axis=0) - v
    lengths = np.hypot(evec[:, 0], evec[:, 1])
    tangents = evec / lengths[:, None]
    normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])
    return ElementGeometry(v, centroid, diameter, area, normals, tangents, lengths)


def chebyshev_kernel(vertices) -> tuple[np.ndarray, float]:
    """Center and radius of the largest disc inside the polygon's kernel.

    The kernel of a CCW polygon is the intersection of the left half-planes of
    its edges; every point of the returned disc sees the whole polygon.
    Radius 0 means the kernel has empty interior.
    """
    v = np.asarray(vertices, dtype=float)
    geo_t = np.roll(v, -1, axis=0) - v
    lengths = np.hypot(geo_t[:, 0], geo_t[:, 1])
    # inward normal n_i = rot90(t_i); constraint n_i . (x - v_i) >= r
    n_in = np.column_stack([-geo_t[:, 1], geo_t[:, 0]]) / lengths[:, None]
    A_ub = np.column_stack([-n_in, np.ones(len(v))])
    b_ub = -(n_in * v).sum(axis=1)
    res = linprog(
        c=[0.0, 0.0, -1.0],
        A_ub=A_ub,
        b_ub=b_ub,
        bounds=[(None, None), (None, None), (0.0, None)],
        method="highs",
    )
    if res.status != 0:
        return v.mean(axis=0), 0.0
    return np.asarray(res.x[:2]), float(max(res.x[2], 0.0))


def is_convex(vertices) -> bool:
    v = np.asarray(vertices, dtype=float)
    e = np.roll(v, -1, axis=0) - v
    en = np.roll(e, -1, axis=0)
    cross = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
    return bool(np.all(cross > 0.0))


@dataclass(frozen=True)
class PolygonalMesh:
    """Immutable polygonal mesh.

    ``cells`` hold counterclockwise vertex cycles; ``boundary_edges`` is an
    integer array of rows (ia, ib, tag) oriented along the domain boundary.
    """

    vertices: np.ndarray
    cells: tuple[tuple[int, ...], ...]
    boundary_edges: np.ndarray
    family: str = "custom"
    N: int = 0
    domain: str = "square"
    _meta: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def cell_coords(self, c: int) -> np.ndarray:
        return self.vertices[list(self.cells[c])]

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique edges as rows (low, high) in first-seen order."""
        return self._edge_data[0]

    @cached_property
    def cell_edges(self) -> tuple[np.ndarray, ...]:
        """Global edge index of every local edge (v_i, v_{i+1}) of each cell."""
        return self._edge_data[1]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def _edge_data(self):
        index: dict[tuple[int, int], int] = {}
        per_cell = []
        for cell in self.cells:
            ids = []
            m = len(cell)
            for i in range(m):
                a, b = cell[i], cell[(i + 1) % m]
                key = (a, b) if a < b else (b, a)
                if key not in index:
                    index[key] = len(index)
                ids.append(index[key])
            per_cell.append(np.array(ids, dtype=int))
        edges = np.array(list(index.keys()), dtype=int).reshape(-1, 2)
        return edges, tuple(per_cell)

    @cached_property
    def kernel_centers(self) -> np.ndarray:
        """Fan center per cell: the centroid when it sees every edge, else a kernel point."""
        out = np.empty((self.n_cells, 2))
        for c in range(self.n_cells):
            poly = self.cell_coords(c)
            geo = polygon_geometry(poly)
            if is_convex(poly) or _sees_all_edges(poly, geo.centroid):
                out[c] = geo.centroid
            else:
                out[c] = chebyshev_kernel(poly)[0]
        return out

    def element_geometry(self, c: int) -> ElementGeometry:
        if not 0 <= c < self.n_cells:
            raise IndexError(f"cell index {c} out of range [0, {self.n_cells})")
        return polygon_geometry(self.cell_coords(c))

    def boundary_tags(self) -> list[int]:
        return sorted({int(t) for t in self.boundary_edges[:, 2]})

    def validate(self) -> None:
        """Raise MeshError unless every structural invariant holds."""
        nv = self.n_vertices
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("non-finite vertex coordinates")
        used = np.zeros(nv, dtype=bool)
        directed: dict[tuple[int, int], int] = {}
        total = 0.0
        for c, cell in enumerate(self.cells):
            if len(cell) < 3:
                raise MeshError(f"cell {c} has fewer than 3 vertices")
            if len(set(cell)) != len(cell):
                raise MeshError(f"cell {c} repeats a vertex")
            if min(cell) < 0 or max(cell) >= nv:
                raise MeshError(f"cell {c} references a vertex index out of range")
            used[list(cell)] = True
            area = signed_area(self.vertices[list(cell)])
            if area <= 0.0:
                raise MeshError(f"cell {c} is not counterclockwise (signed area {area:.3e})")
            total += area
            m = len(cell)
            for i in range(m):
                key = (cell[i], cell[(i + 1) % m])
                if key in directed:
                    raise MeshError(f"directed edge {key} appears twice")
                directed[key] = c
        if not used.all():
            raise MeshError("mesh has vertices not used by any cell")
        bset = set()
        for a, b, _ in self.boundary_edges:
            bset.add((int(a), int(b)))
        for a, b in directed:
            if (b, a) not in directed and (a, b) not in bset:
                raise MeshError(f"edge {(a, b)} is neither shared nor tagged boundary")
        for a, b in bset:
            if (a, b) not in directed:
                raise MeshError(f"boundary edge {(a, b)} is not a cell edge")
        if self.domain in DOMAIN_AREA:
            ref = DOMAIN_AREA[self.domain]
            if abs(total - ref) > 1e-12 * ref:
                raise MeshError(f"cell areas sum to {total!r}, expected {ref}")


def _sees_all_edges(poly: np.ndarray, point: np.ndarray) -> bool:
    a = poly - point
    b = np.roll(poly, -1, axis=0) - point
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return bool(np.all(cross > 1e-12 * np.abs(a).max() ** 2))


# ---------------------------------------------------------------------------
# construction helpers


def _assemble(polys: list[np.ndarray], family: str, N: int, domain: str) -> PolygonalMesh:
    """Merge coincident vertices, orient cells CCW, tag the boundary."""
    coords = np.concatenate(polys)
    label = _merge_labels(coords, MERGE_TOL)
    _, first, inverse = np.unique(label, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    vertices = coords[first[order]]
    cells = []
    pos = 0
    for p in polys:
        ids = [int(rank[inverse[pos + i]]) for i in range(len(p))]
        pos += len(p)
        # drop consecutive duplicates created by clipping
        clean = [v for i, v in enumerate(ids) if v != ids[i - 1]]
        if len(clean) < 3:
            continue
        if signed_area(vertices[clean]) < 0:
            clean.reverse()
        cells.append(tuple(clean))
    mesh = PolygonalMesh(vertices, tuple(cells), np.zeros((0, 3), dtype=int), family, N, domain)
    bnd = _tag_boundary(mesh, domain)
    return PolygonalMesh(vertices, tuple(cells), bnd, family, N, domain)


def _merge_labels(coords: np.ndarray, tol: float) -> np.ndarray:
    """Cluster label per point; points closer than `tol` share a label."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components
    from scipy.spatial import cKDTree

    pairs = cKDTree(coords).query_pairs(tol, output_type="ndarray")
    n = len(coords)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    return connected_components(graph, directed=False)[1]


def _tag_boundary(mesh: PolygonalMesh, domain: str) -> np.ndarray:
    count: dict[tuple[int, int], int] = {}
    directed = []
    for cell in mesh.cells:
        m = len(cell)
        for i in range(m):
            a, b = cell[i], cell[(i + 1) % m]
            key = (min(a, b), max(a, b))
            count[key] = count.get(key, 0) + 1
            directed.append((a, b))
    rows = []
    segs = SEGMENTS[domain]
    for a, b in directed:
        if count[(min(a, b), max(a, b))] != 1:
            continue
        mid = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
        rows.append((a, b, _segment_tag(mid, segs)))
    return np.array(rows, dtype=int).reshape(-1, 3)


def _segment_tag(point: np.ndarray, segs) -> int:
    for tag, (p, q) in enumerate(segs):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        d = q - p
        t = np.dot(point - p, d) / np.dot(d, d)
        if -1e-12 <= t <= 1 + 1e-12 and np.hypot(*(p + t * d - point)) < 1e-9:
            return tag
    raise MeshError(f"boundary edge midpoint {point} lies on no domain segment")


def _clip(poly: np.ndarray, x0: float, x1: float, y0: float, y1: float) -> np.ndarray:
    """Sutherland-Hodgman clip against an axis-aligned box."""

    def clip_one(p, axis, bound, keep_greater):
        out = []
        n = len(p)
        for i in range(n):
            cur, nxt = p[i], p[(i + 1) % n]
            cin = cur[axis] >= bound if keep_greater else cur[axis] <= bound
            nin = nxt[axis] >= bound if keep_greater else nxt[axis] <= bound
            if cin:
                out.append(cur)
            if cin != nin:
                t = (bound - cur[axis]) / (nxt[axis] - cur[axis])
                pt = cur + t * (nxt - cur)
                pt[axis] = bound
                out.append(pt)
        return np.array(out).reshape(-1, 2)

    p = np.asarray(poly, dtype=float)
    for axis, bound, greater in ((0, x0, True), (0, x1, False), (1, y0, True), (1, y1, False)):
        if len(p) == 0:
            break
        p = clip_one(p, axis, bound, greater)
    return p


def _box_polys(family: str, n: int, x0: float, y0: float, size: float) -> list[np.ndarray]:
    """Cells of one family on the square [x0, x0+size] x [y0, y0+size] with n cells per side."""
    d = size / n
    polys = []
    if family == "T3":
        for j in range(n):
            for i in range(n):
                a = (x0 + i * d, y0 + j * d)
                b = (x0 + (i + 1) * d, y0 + j * d)
                c = (x0 + (i + 1) * d, y0 + (j + 1) * d)
                e = (x0 + i * d, y0 + (j + 1) * d)
                polys.append(np.array([a, b, c]))
                polys.append(np.array([a, c, e]))
    elif family == "T1":
        if n % 2:
            raise MeshError("T1 trapezoidal meshes need an even number of cells per side")
        # vertex heights on column line i: pattern A for even i, B for odd i
        def line(i):
            first = 2.0 / 3.0 if i % 2 == 0 else 4.0 / 3.0
            ys = [0.0]
            for r in range(n):
                ys.append(ys[-1] + (first if r % 2 == 0 else 2.0 - first) * d)
            ys[-1] = size
            return np.array(ys)

        lines = [line(i) for i in range(n + 1)]
        for i in range(n):
            xl, xr = x0 + i * d, x0 + (i + 1) * d
            yl, yr = lines[i], lines[i + 1]
            for r in range(n):
                polys.append(
                    np.array([[xl, y0 + yl[r]], [xr, y0 + yr[r]], [xr, y0 + yr[r + 1]], [xl, y0 + yl[r + 1]]])
                )
    elif family == "T4":
        shift = 0.15 * d / np.sqrt(2.0)
        for j in range(n):
            for i in range(n):
                a = np.array([x0 + i * d, y0 + j * d])
                b = a + (d, 0.0)
                c = a + (d, d)
                e = a + (0.0, d)
                mid = a + (0.5 * d, 0.5 * d)
                if (i + j) % 2 == 0:
                    p = mid + (shift, -shift)  # toward b: (a, b, c, p) is the concave dart
                else:
                    p = mid + (-shift, shift)  # toward e: (a, p, c, e) is the concave dart
                polys.append(np.array([a, b, c, p]))
                polys.append(np.array([a, p, c, e]))
    elif family == "T2":
        polys.extend(_hex_polys(n, x0, y0, size))
    else:
        raise MeshError(f"unknown mesh family {family!r}")
    return polys


def _hex_polys(n: int, x0: float, y0: float, size: float) -> list[np.ndarray]:
    # Column j has centers at x = j/n; horizontal half-width R = 2/(3n), so that
    # neighbouring columns interlock. Even columns are centered on y = i/n, odd
    # columns on y = (i + 1/2)/n; the box clips through centers or flat edges.
    d = size / n
    R = 2.0 * d / 3.0
    H = d
    polys = []
    for j in range(n + 1):
        xc = x0 + j * d
        if j % 2 == 0:
            centers = [y0 + i * H for i in range(n + 1)]
        else:
            centers = [y0 + (i + 0.5) * H for i in range(n)]
        for yc in centers:
            hexagon = np.array(
                [
                    [xc - R, yc],
                    [xc - R / 2, yc - H / 2],
                    [xc + R / 2, yc - H / 2],
                    [xc + R, yc],
                    [xc + R / 2, yc + H / 2],
                    [xc - R / 2, yc + H / 2],
                ]
            )
            clipped = _clip(hexagon, x0, x0 + size, y0, y0 + size)
            if len(clipped) >= 3 and signed_area(clipped) > 1e-14 * d * d:
                polys.append(clipped)
    return polys


def generate_mesh(family: str, N: int, domain: str = "square") -> PolygonalMesh:
    """Build a member of one of the mesh families.

    N is the number of cells along each side of the unit square. For the
    L-shaped domain the three quadrant squares are meshed with N/2 cells per
    side each, so N must be even.
    """
    family = family.upper()
    if family not in FAMILIES:
        raise MeshError(f"unknown mesh family {family!r}; expected one of {FAMILIES}")
    if domain not in DOMAINS:
        raise MeshError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
    if int(N) != N or N < 2:
        raise MeshError("N must be an integer >= 2")
    N = int(N)
    if domain == "square":
        polys = _box_polys(family, N, 0.0, 0.0, 1.0)
    else:
        if family not in ("T3", "T4"):
            raise MeshError(f"family {family} is not supported on the L-shaped domain")
        if N % 2:
            raise MeshError("L-shaped meshes need an even N")
        m = N // 2
        polys = []
        for ox, oy in ((0.0, 0.0), (0.5, 0.0), (0.0, 0.5)):
            polys.extend(_box_polys(family, m, ox, oy, 0.5))
    mesh = _assemble(polys, family, N, domain)
    mesh.validate()
    return mesh


def expected_cell_count(family: str, N: int, domain: str = "square") -> int:
    family = family.upper()
    if domain == "lshape":
        return 3 * expected_cell_count(family, N // 2)
    if family in ("T1",):
        return N * N
    if family in ("T3", "T4"):
        return 2 * N * N
    if family == "T2":
        even_cols = N // 2 + 1
        odd_cols = (N + 1) // 2
        return even_cols * (N + 1) + odd_cols * N
    raise MeshError(f"unknown mesh family {family!r}")


# ---------------------------------------------------------------------------
# quality


@dataclass(frozen=True)
class MeshQualityReport:
    star_ratio: np.ndarray
    edge_ratio: np.ndarray
    threshold: float

    @property
    def min_star_ratio(self) -> float:
        return float(self.star_ratio.min())

    @property
    def min_edge_ratio(self) -> float:
        return float(self.edge_ratio.min())

    @property
    def flagged(self) -> np.ndarray:
        bad = (self.star_ratio < self.threshold) | (self.edge_ratio < self.threshold)
        return np.flatnonzero(bad)

    @property
    def ok(self) -> bool:
        return self.flagged.size == 0


def check_mesh_assumptions(mesh: PolygonalMesh, C_T: float = 0.2) -> MeshQualityReport:
    """Per-cell rho_K / h_K (kernel inscribed disc) and shortest-edge / h_K."""
    star = np.empty(mesh.n_cells)
    edge = np.empty(mesh.n_cells)
    for c in range(mesh.n_cells):
        geo = mesh.element_geometry(c)
        _, rho = chebyshev_kernel(geo.vertices)
        star[c] = rho / geo.diameter
        edge[c] = geo.lengths.min() / geo.diameter
    return MeshQualityReport(star, edge, float(C_T))


# ---------------------------------------------------------------------------
# text format


def write_mesh(mesh: PolygonalMesh, path) -> None:
    lines = ["pvem 1", f"{mesh.n_vertices} {mesh.n_cells}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [" ".join(str(v) for v in (len(cell), *cell)) for cell in mesh.cells]
    lines.append(str(len(mesh.boundary_edges)))
    lines += [f"{a} {b} {t}" for a, b, t in mesh.boundary_edges.tolist()]
    header = f"# family={mesh.family} N={mesh.N} domain={mesh.domain}"
    Path(path).write_text("\n".join([lines[0], header] + lines[1:]) + "\n")


def read_mesh(path) -> PolygonalMesh:
    raw = Path(path).read_text().splitlines()
    family, N, domain = "custom", 0, "custom"
    body = []
    for line in raw:
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            for tok in s[1:].split():
                key, _, val = tok.partition("=")
                if key == "family":
                    family = val
                elif key == "N":
                    N = int(val)
                elif key == "domain":
                    domain = val
            continue
        body.append(s.split())
    try:
        if body[0] != ["pvem", "1"]:
            raise MeshError("missing 'pvem 1' header")
        nv, nc = (int(t) for t in body[1])
        pos = 2
        verts = np.array([[float(t) for t in body[pos + i]] for i in range(nv)])
        pos += nv
        cells = []
        for c in range(nc):
            row = [int(t) for t in body[pos + c]]
            if row[0] != len(row) - 1:
                raise MeshError(f"cell {c}: declared {row[0]} vertices, found {len(row) - 1}")
            cells.append(tuple(row[1:]))
        pos += nc
        nb = int(body[pos][0])
        bnd = np.array([[int(t) for t in body[pos + 1 + i]] for i in range(nb)], dtype=int).reshape(-1, 3)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if verts.shape != (nv, 2):
        raise MeshError("vertex lines must have two coordinates")
    for c, cell in enumerate(cells):
        if min(cell) < 0 or max(cell) >= nv:
            raise MeshError(f"cell {c} references a vertex index out of range")
    mesh = PolygonalMesh(verts, tuple(cells), bnd, family, N, domain)
    mesh.validate()
    return mesh
