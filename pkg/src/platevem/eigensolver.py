"""Generalized symmetric eigenproblem A u = lambda B u with A SPD, B indefinite.

Both paths work with mu = 1 / lambda, i.e. with the operator f -> A^{-1} B f,
which is self-adjoint in the A inner product; zero mu (the kernel of B) is
discarded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import GlobalSystem, NotPositiveDefiniteError, check_positive_definite

DENSE_LIMIT = 2000
ZERO_MU_RTOL = 1e-9


class EigenBreakdownError(RuntimeError):
    """Fewer nonzero eigenvalues exist than were requested."""


@dataclass(frozen=True)
class SolverConfig:
    nev: int = 4
    mode: str = "auto"  # auto | dense | iterative
    tol: float = 1e-12
    ncv: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.nev < 1:
            raise ValueError("nev must be >= 1")
        if self.mode not in ("auto", "dense", "iterative"):
            raise ValueError(f"unknown solver mode {self.mode!r}")


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    mode: str = "dense"
    info: dict = field(default_factory=dict)

    @property
    def mu(self) -> np.ndarray:
        return 1.0 / self.eigenvalues

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def pairs(self):
        return [(lam, self.eigenvectors[:, i]) for i, lam in enumerate(self.eigenvalues)]


def _as_matrices(system):
    if isinstance(system, GlobalSystem):
        return system.A, system.B
    A, B = system
    return A, B


def _normalize_signs(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    sgn = np.sign(V[idx, np.arange(V.shape[1])])
    sgn[sgn == 0] = 1.0
    return V * sgn


def _residuals(A, B, lam, V):
    AV = A @ V
    BV = B @ V
    num = np.linalg.norm(AV - BV * lam[None, :], axis=0)
    den = np.linalg.norm(AV, axis=0)
    return num / np.where(den > 0, den, 1.0)


def dense_reference(system, max_size: int = DENSE_LIMIT):
    """Every finite eigenvalue, as (lambda, vectors, mu_all).

    lambda is sorted by magnitude; mu_all is the full mu spectrum (including
    the zeros of the kernel of B) so that counts can be audited.
    """
    A, B = _as_matrices(system)
    n = A.shape[0]
    if n > max_size:
        raise ValueError(f"dense reference limited to {max_size} DOFs (got {n})")
    Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    Bd = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
    try:
        mu, V = sla.eigh(Bd, Ad)
    except sla.LinAlgError as exc:
        raise NotPositiveDefiniteError("A is not positive definite") from exc
    scale = np.abs(mu).max() if n else 0.0
    nz = np.abs(mu) > ZERO_MU_RTOL * scale if scale > 0 else np.zeros(n, dtype=bool)
    lam = 1.0 / mu[nz]
    V = V[:, nz]
    order = np.argsort(np.abs(lam), kind="stable")
    return lam[order], V[:, order], mu


def kernel_dimension(B, rtol: float = ZERO_MU_RTOL, scale: float | None = None) -> int:
    """Numerical nullity of B (dim Z_h), from its own spectrum."""
    Bd = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
    if Bd.shape[0] == 0:
        return 0
    w = np.linalg.eigvalsh(Bd)
    ref = np.abs(w).max() if scale is None else scale
    if ref == 0:
        return Bd.shape[0]
    return int(np.sum(np.abs(w) <= rtol * ref))


def solve_buckling(system, config: SolverConfig | None = None) -> EigenResult:
    """The `nev` nonzero eigenvalues of smallest magnitude, with A-orthonormal vectors."""
    config = config or SolverConfig()
    A, B = _as_matrices(system)
    n = A.shape[0]
    mode = config.mode
    if mode == "auto":
        mode = "dense" if n <= DENSE_LIMIT else "iterative"
    check_positive_definite(A)
    if mode == "dense":
        lam, V, _ = dense_reference((A, B), max_size=max(n, DENSE_LIMIT))
        if len(lam) < config.nev:
            raise EigenBreakdownError(f"only {len(lam)} nonzero eigenvalues exist, {config.nev} requested")
        lam, V = lam[: config.nev], V[:, : config.nev]
    else:
        lam, V = _arpack(A, B, config)
    V = _normalize_signs(V)
    res = _residuals(A, B, lam, V)
    return EigenResult(lam, V, res, mode)


def _arpack(A, B, config: SolverConfig):
    n = A.shape[0]
    if config.nev >= n - 1:
        raise EigenBreakdownError("iterative mode needs nev < n - 1; use dense mode")
    A = sp.csc_matrix(A)
    B = sp.csr_matrix(B)
    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    Minv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    v0 = np.random.default_rng(config.seed).standard_normal(n)
    ncv = config.ncv or min(n, max(2 * config.nev + 1, 40))
    mu, V = spla.eigsh(B, k=config.nev, M=A, Minv=Minv, which="LM", v0=v0, ncv=ncv, tol=config.tol)
    scale = np.abs(mu).max()
    if scale == 0 or np.any(np.abs(mu) <= ZERO_MU_RTOL * scale):
        raise EigenBreakdownError("kernel of B reached before nev nonzero eigenvalues")
    lam = 1.0 / mu
    order = np.argsort(np.abs(lam), kind="stable")
    lam, V = lam[order], V[:, order]
    # A-orthonormalize (ARPACK returns M-orthonormal vectors already; this removes drift)
    G = V.T @ (A @ V)
    L = np.linalg.cholesky(0.5 * (G + G.T))
    V = np.linalg.solve(L, V.T).T
    return lam, V
