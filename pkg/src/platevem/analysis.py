"""Convergence studies, extrapolation, result tables and mode export."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit

from .assembly import GlobalSystem, NotPositiveDefiniteError, assemble, build_elements
from .eigensolver import (
    EigenBreakdownError,
    SolverConfig,
    dense_reference,
    kernel_dimension,
    solve_buckling,
)
from .mesh import PolygonalMesh, generate_mesh

ETA_CHOICES = ("eta1", "eta2", "eta3", "eta2_alpha")
BRANCHES = ("magnitude", "positive", "negative")

ETA1 = np.eye(2)
ETA2 = np.array([[1.0, 0.0], [0.0, 0.0]])
ETA3 = np.array([[0.0, 1.0], [1.0, 0.0]])


def eta_field(name: str, alpha: float = 0.0, L: float = 1.0):
    """Constant 2x2 tensor, or a callable for the linearly varying load."""
    if name == "eta1":
        return ETA1
    if name == "eta2":
        return ETA2
    if name == "eta3":
        return ETA3
    if name == "eta2_alpha":
        a = float(alpha)

        def varying(points):
            pts = np.asarray(points, dtype=float)
            out = np.zeros((len(pts), 2, 2))
            out[:, 0, 0] = 1.0 - a * pts[:, 1] / L
            return out

        return varying
    raise ValueError(f"unknown stress field {name!r}; choose from {ETA_CHOICES}")


def nondimensionalize(lam, L: float = 1.0):
    """Buckling coefficient lambda * L / pi^2."""
    if not L > 0:
        raise ValueError("plate side L must be positive")
    return np.asarray(lam) * L / math.pi**2


@dataclass(frozen=True)
class FitResult:
    order: float | None
    extrapolated: float | None
    monotone: bool
    lsq_order: float | None = None
    lsq_extrapolated: float | None = None


def fit_convergence(h: Sequence[float], values: Sequence[float]) -> FitResult:
    """Order and limit of lambda(h) ~ lambda_ex + C h^t from successive halvings.

    The closed form uses the last three points. With more points a nonlinear
    least-squares fit over all of them is added, started from the closed form.
    Sequences whose differences change sign or vanish are flagged, not fitted.
    """
    h = np.asarray(h, dtype=float)
    lam = np.asarray(values, dtype=float)
    if h.shape != lam.shape or h.ndim != 1 or len(h) < 3:
        raise ValueError("need at least three (h, lambda) pairs")
    if not np.allclose(h[:-1] / h[1:], 2.0, rtol=1e-9):
        raise ValueError("mesh sizes must halve from one level to the next")
    d = np.diff(lam)
    if np.any(d == 0) or not (np.all(d > 0) or np.all(d < 0)):
        return FitResult(None, None, False)
    l1, l2, l3 = lam[-3:]
    ratio = (l1 - l2) / (l2 - l3)
    if ratio <= 1.0:
        # differences not contracting: no positive order to report
        return FitResult(None, None, False)
    order = math.log2(ratio)
    extrap = l3 - (l2 - l3) ** 2 / (l1 - 2.0 * l2 + l3)
    lsq_t = lsq_x = None
    if len(lam) > 3:
        c0 = (l3 - extrap) / h[-1] ** order

        def model(hh, x, c, t):
            return x + c * hh**t

        try:
            popt, _ = curve_fit(model, h, lam, p0=(extrap, c0, order), maxfev=20000)
            lsq_x, _, lsq_t = (float(v) for v in popt)
        except RuntimeError:
            pass
    return FitResult(order, float(extrap), True, lsq_t, lsq_x)


@dataclass(frozen=True)
class StudyConfig:
    domain: str = "square"
    family: str = "T2"
    k: int = 2
    Ns: tuple[int, ...] = (8, 16, 32)
    eta: str = "eta1"
    alpha: float = 0.0
    bc: str = "clamped"
    nev: int = 4
    # which eigenvalues to keep: smallest |lambda|, or one sign only
    branch: str = "magnitude"
    stabilization: str = "combined"
    out_table: str | None = None
    out_report: str | None = None

    def __post_init__(self):
        if self.eta not in ETA_CHOICES:
            raise ValueError(f"unknown stress field {self.eta!r}")
        if self.branch not in BRANCHES:
            raise ValueError(f"unknown branch {self.branch!r}")
        if len(self.Ns) < 2:
            raise ValueError("a study needs at least two N values")
        Ns = list(self.Ns)
        if any(b != 2 * a for a, b in zip(Ns, Ns[1:])):
            raise ValueError("N values must double from one level to the next")
        if self.nev < 1:
            raise ValueError("nev must be >= 1")

    @property
    def label(self) -> str:
        eta = f"eta2_alpha={self.alpha:g}" if self.eta == "eta2_alpha" else self.eta
        return f"{self.domain} {self.family} k={self.k} {eta} {self.bc}"


PRESETS: dict[str, StudyConfig] = {
    "table1-k2-hex": StudyConfig(family="T2", k=2),
    "table1-k3-hex": StudyConfig(family="T2", k=3, Ns=(8, 16)),
    "table1-k2-t4": StudyConfig(family="T4", k=2),
    "table2-k2-t3": StudyConfig(family="T3", k=2, eta="eta3", branch="positive"),
    "table2-k2-t1": StudyConfig(family="T1", k=2, eta="eta3", branch="positive"),
    "table3-k2-t3": StudyConfig(domain="lshape", family="T3", k=2),
    "table3-k2-t4": StudyConfig(domain="lshape", family="T4", k=2),
    "table4-k2-hex": StudyConfig(family="T2", k=2, eta="eta2_alpha", bc="ss_free_test3", nev=1, branch="positive"),
}


@dataclass
class StudyRow:
    N: int
    n_free: int = 0
    eigenvalues: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    error: str | None = None

    @property
    def coefficients(self) -> list[float]:
        return [float(v) for v in nondimensionalize(self.eigenvalues)]


@dataclass
class ConvergenceReport:
    config: StudyConfig
    rows: list[StudyRow]
    fits: list[FitResult]

    def sequence(self, index: int) -> list[tuple[int, float]]:
        """(N, lambda_hat) pairs of one eigenvalue, over the successful levels."""
        return [(r.N, r.coefficients[index]) for r in self.rows if r.error is None]

    def extrapolated(self) -> list[float | None]:
        return [f.extrapolated for f in self.fits]

    def orders(self) -> list[float | None]:
        return [f.order for f in self.fits]

    def table(self) -> str:
        nev = self.config.nev
        show_abs = self.config.eta == "eta3"
        head = "  ".join(f"{'|lam_' + str(i + 1) + '|' if show_abs else 'lam_' + str(i + 1):>10s}" for i in range(nev))
        lines = [self.config.label, f"{'N':>8s}  {head}"]
        for r in self.rows:
            if r.error is not None:
                lines.append(f"{r.N:>8d}  FAILED: {r.error}")
                continue
            vals = np.abs(r.coefficients) if show_abs else r.coefficients
            lines.append(f"{r.N:>8d}  " + "  ".join(f"{v:10.4f}" for v in vals))

        def fmt(v, spec):
            return f"{v:10{spec}}" if v is not None else f"{'-':>10s}"

        def sgn(v):
            return None if v is None else (abs(v) if show_abs else v)

        if not self.fits:
            lines.append("no fit: fewer than three successful levels")
            return "\n".join(lines) + "\n"
        lines.append(f"{'Order':>8s}  " + "  ".join(fmt(f.order, ".2f") for f in self.fits))
        lines.append(f"{'Extrap.':>8s}  " + "  ".join(fmt(sgn(f.extrapolated), ".4f") for f in self.fits))
        if any(f.lsq_order is not None for f in self.fits):
            lines.append(f"{'LSQ ord':>8s}  " + "  ".join(fmt(f.lsq_order, ".2f") for f in self.fits))
            lines.append(f"{'LSQ ext':>8s}  " + "  ".join(fmt(sgn(f.lsq_extrapolated), ".4f") for f in self.fits))
        flagged = [str(i + 1) for i, f in enumerate(self.fits) if not f.monotone]
        if flagged:
            lines.append("non-monotone (not fitted): " + ", ".join(flagged))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        records = []
        for r in self.rows:
            if r.error is not None:
                records.append({"N": r.N, "error": r.error})
                continue
            for i, (lam, res) in enumerate(zip(r.eigenvalues, r.residuals)):
                records.append(
                    {"N": r.N, "index": i + 1, "lambda": lam, "lambda_hat": r.coefficients[i], "residual": res, "n_free": r.n_free}
                )
        fits = [dict(index=i + 1, **asdict(f)) for i, f in enumerate(self.fits)]
        cfg = asdict(self.config)
        cfg.pop("out_table")
        cfg.pop("out_report")
        cfg["Ns"] = list(cfg["Ns"])
        return {"config": cfg, "records": records, "fits": fits}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def build_system(config: StudyConfig, N: int) -> GlobalSystem:
    mesh = generate_mesh(config.family, N, config.domain)
    elements = build_elements(mesh, config.k, stabilization=config.stabilization)
    return assemble(mesh, config.k, eta_field(config.eta, config.alpha), config.bc, elements=elements)


def select_branch(lam: np.ndarray, branch: str, nev: int) -> np.ndarray:
    """Indices of the kept eigenvalues, ordered by magnitude."""
    order = np.argsort(np.abs(lam), kind="stable")
    if branch == "positive":
        order = order[lam[order] > 0]
    elif branch == "negative":
        order = order[lam[order] < 0]
    return order[:nev]


def solve_level(system: GlobalSystem, config: StudyConfig, solver: SolverConfig | None = None):
    """nev eigenpairs of one mesh level, restricted to the requested branch."""
    base = solver or SolverConfig()
    want = config.nev if config.branch == "magnitude" else 2 * config.nev + 2
    cap = max(system.n_free - 2, 1)
    while True:
        # the two signs need not interleave, so widen the window until enough are found
        want = min(want, cap)
        res = solve_buckling(system, replace(base, nev=want))
        keep = select_branch(res.eigenvalues, config.branch, config.nev)
        if len(keep) >= config.nev:
            break
        if want >= cap:
            raise EigenBreakdownError(f"fewer than {config.nev} eigenvalues on the {config.branch} branch")
        want *= 2
    return res.eigenvalues[keep], res.eigenvectors[:, keep], res.residuals[keep]


def run_study(config: StudyConfig, solver: SolverConfig | None = None) -> ConvergenceReport:
    """Solve every level, fit each eigenvalue and optionally write table and report."""
    rows = []
    for N in config.Ns:
        row = StudyRow(N)
        try:
            system = build_system(config, N)
            lam, _, res = solve_level(system, config, solver)
            row.n_free = system.n_free
            row.eigenvalues = [float(v) for v in lam]
            row.residuals = [float(v) for v in res]
        except (EigenBreakdownError, NotPositiveDefiniteError, np.linalg.LinAlgError) as exc:
            row.error = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    ok = [r for r in rows if r.error is None]
    fits = []
    # fits need three consecutive levels; a failed level leaves the study unfitted
    if len(ok) >= 3 and len(ok) == len(rows):
        h = [1.0 / r.N for r in ok]
        fits = [fit_convergence(h, [r.coefficients[i] for r in ok]) for i in range(config.nev)]
    report = ConvergenceReport(config, rows, fits)
    if config.out_table:
        Path(config.out_table).write_text(report.table())
    if config.out_report:
        Path(config.out_report).write_text(report.to_json())
    return report


def spectrum_census(system: GlobalSystem) -> tuple[int, int, int]:
    """(nonzero eigenvalues of the pencil, dim of the kernel of B, free DOFs), all dense."""
    lam, _, _ = dense_reference(system)
    return len(lam), kernel_dimension(system.B), system.n_free


def mode_point_values(system: GlobalSystem, u_free: np.ndarray):
    """Vertex values and fan-centre values of a discrete function.

    Vertices carry the value DOF itself (the virtual function is known there);
    each cell centre carries the energy projection evaluated at that point.
    """
    mesh, dm = system.mesh, system.dofmap
    full = system.expand(np.asarray(u_free, dtype=float))
    vertex = full[0 : 3 * mesh.n_vertices : 3].copy()
    centres = mesh.kernel_centers
    centre_vals = np.zeros(mesh.n_cells)
    for c, el in enumerate(system.elements):
        local = dm.local_scale[c] * full[dm.local_index[c]]
        coeff = el.energy @ local
        centre_vals[c] = float(el.basis.values(centres[c][None, :])[0] @ coeff)
    return vertex, centres, centre_vals


def export_mode(system: GlobalSystem, u_free: np.ndarray, path, title: str = "buckling mode") -> None:
    """Legacy ASCII VTK unstructured grid, each cell fanned into triangles from its centre."""
    mesh: PolygonalMesh = system.mesh
    if np.asarray(u_free).shape != (system.n_free,):
        raise ValueError(f"mode vector must have {system.n_free} entries")
    vertex, centres, centre_vals = mode_point_values(system, u_free)
    nv = mesh.n_vertices
    points = np.vstack([mesh.vertices, centres])
    values = np.concatenate([vertex, centre_vals])
    tris = []
    for c, cell in enumerate(mesh.cells):
        m = len(cell)
        for i in range(m):
            tris.append((nv + c, cell[i], cell[(i + 1) % m]))
    out = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {len(points)} double")
    out += [f"{x:.17g} {y:.17g} 0" for x, y in points]
    out.append(f"CELLS {len(tris)} {4 * len(tris)}")
    out += [f"3 {a} {b} {c}" for a, b, c in tris]
    out.append(f"CELL_TYPES {len(tris)}")
    out += ["5"] * len(tris)
    out.append(f"POINT_DATA {len(points)}")
    out.append("SCALARS buckling_mode double 1")
    out.append("LOOKUP_TABLE default")
    out += [f"{v:.17g}" for v in values]
    Path(path).write_text("\n".join(out) + "\n")
