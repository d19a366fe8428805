"""Principal eigenpair by inverse power iteration, plus spectral diagnostics.

Power iteration on the solution operator ``T = A^{-1}`` started inside the
positive cone converges to the positive eigenvector of ``T``; its
eigenvalue ``rho(T)`` gives ``lambda_1 = 1 / rho(T)``.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .grid import Grid
from .operator import DiscreteOperator, DriftField, assemble
from .solver import factorization, matvec_long, solve_extended

log = logging.getLogger(__name__)


class EigenConvergenceError(RuntimeError):
    def __init__(self, message: str, last_residual: float = float("nan"), partial=None):
        super().__init__(message)
        self.last_residual = last_residual
        self.partial = partial


class PositivityError(RuntimeError):
    """The converged eigenvector has non-positive entries."""


@dataclass
class EigenResult:
    lambda1: float
    phi1: np.ndarray = field(repr=False)
    residual_inf: float
    iterations: int
    sub_moduli: list[float] = field(default_factory=list)
    sub_eigenvalues: list[complex] = field(default_factory=list, repr=False)
    history: list[tuple[float, float]] = field(default_factory=list, repr=False)
    cone_epsilon: float = float("nan")
    tolerance: float = 1e-10
    flags: list[str] = field(default_factory=list)

    @property
    def spectral_gap(self) -> float:
        """Smallest subdominant modulus minus lambda_1 (nan if none computed)."""
        return min(self.sub_moduli) - self.lambda1 if self.sub_moduli else float("nan")

    def summary(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "residual_inf": self.residual_inf,
            "iterations": self.iterations,
            "min_phi1": float(np.min(self.phi1)),
            "cone_epsilon": self.cone_epsilon,
            "spectral_gap": self.spectral_gap,
            "sub_moduli": list(self.sub_moduli),
            "sub_eigenvalues": [
                {"modulus": abs(z), "argument": float(np.angle(z)), "re": z.real, "im": z.imag}
                for z in self.sub_eigenvalues
            ],
            "tolerance": self.tolerance,
            "flags": list(self.flags),
            "history": [{"lambda": lam, "residual_inf": r} for lam, r in self.history],
        }

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(_finite(self.summary()), indent=2, sort_keys=True),
                        encoding="utf-8")
        return path

    def phi_to_csv(self, path, grid: Grid) -> Path:
        path = Path(path)
        cols = ["x", "y"][: grid.dimension]
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([*cols, "phi1"])
            for p, v in zip(grid.nodes, self.phi1):
                w.writerow([*(repr(float(c)) for c in p), repr(float(v))])
        return path


def _finite(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    return obj


def _rayleigh_residual(A: DiscreteOperator, v: np.ndarray) -> tuple[float, np.ndarray]:
    """Least-squares eigenvalue for ``v`` and the residual ``A v - lam v`` (extended precision)."""
    Av = matvec_long(A, v)
    vl = v.astype(np.longdouble)
    lam = (vl @ Av) / (vl @ vl)
    return float(lam), (Av - lam * vl).astype(float)


def eigen_residual(A: DiscreteOperator, phi, lam: float) -> float:
    """``|A phi - lam phi|_inf`` evaluated in extended precision."""
    vl = np.asarray(phi, dtype=np.longdouble)
    return float(np.max(np.abs(matvec_long(A, vl) - np.longdouble(lam) * vl)))


def cone_epsilon(phi: np.ndarray, grid: Grid) -> float:
    """Largest ``eps`` with ``phi >= eps * dist(x, boundary)`` at every node."""
    return float(np.min(np.asarray(phi, dtype=float) / grid.boundary_distance))


def principal_eig(A: DiscreteOperator, tol: float = 1e-10, max_iter: int = 1000,
                  k_sub: int = 0, start: np.ndarray | None = None) -> EigenResult:
    """Principal eigenpair of ``A`` by power iteration on ``T = A^{-1}``.

    Each step solves ``A x = v`` by mixed-precision refinement, so for dense
    operators ``phi1`` is carried (and returned) as ``np.longdouble``; the
    residual of a double-rounded eigenvector cannot drop below roughly
    ``eps * |A|_inf``, which exceeds the usual tolerances on fine grids.
    Starts from ``dist(x, boundary)`` (or ``start``), normalizes each
    iterate to max 1 and stops once ``|A phi - lambda phi|_inf <= tol`` with
    ``lambda`` the Rayleigh quotient of the iterate. With ``k_sub > 0`` the
    ``k_sub`` eigenvalues of smallest modulus are computed as well and all
    but the principal one are stored in ``sub_moduli``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    flags = A.hypothesis_flags()
    if "s outside (0,1/2]" in flags:
        log.warning("s=%s is outside the theorem-backed range (0, 1/2]", A.s)
    grid = A.grid
    v = np.array(grid.boundary_distance if start is None else start, dtype=np.longdouble)
    if v.shape != (A.size,) or not np.any(v):
        raise ValueError("start vector must be a nonzero interior vector")
    v = v / v[np.argmax(np.abs(v))]
    history = []
    residual_inf = float("inf")
    for it in range(1, max_iter + 1):
        x = solve_extended(A, v)
        v = x / x[np.argmax(np.abs(x))]
        lam, r = _rayleigh_residual(A, v)
        residual_inf = float(np.max(np.abs(r)))
        history.append((lam, residual_inf))
        if residual_inf <= tol:
            break
    else:
        raise EigenConvergenceError(
            f"inverse iteration did not reach residual {tol:.1e} in {max_iter} iterations "
            f"(last residual {residual_inf:.3e})", residual_inf)
    if np.min(v) <= 0.0:
        raise PositivityError(
            f"principal eigenvector has non-positive entries (min {np.min(v):.3e} "
            f"at node {int(np.argmin(v))})"
        )
    res = EigenResult(lambda1=lam, phi1=v, residual_inf=residual_inf, iterations=it,
                      history=history, cone_epsilon=cone_epsilon(v, grid), tolerance=tol,
                      flags=flags)
    if k_sub > 0:
        eigs = subdominant_eigs(A, k_sub)
        res.sub_eigenvalues = drop_principal(eigs, lam)
        res.sub_moduli = [abs(z) for z in res.sub_eigenvalues]
    return res


def drop_principal(eigs: list[complex], lam: float) -> list[complex]:
    i = int(np.argmin([abs(z - lam) for z in eigs]))
    return eigs[:i] + eigs[i + 1:]


def subdominant_eigs(A: DiscreteOperator, k: int = 6, tol: float = 0.0) -> list[complex]:
    """The ``k`` eigenvalues of ``A`` with smallest modulus, sorted by modulus.

    Arnoldi (ARPACK) on ``T = A^{-1}`` applied through the cached
    factorization; eigenvalues ``rho`` of ``T`` map back to ``1 / rho``.
    ``tol = 0`` requests machine precision.
    """
    n = A.size
    if not 1 <= k <= n - 2:
        raise ValueError(f"k must lie in [1, {n - 2}] for {n} unknowns")
    fac, _ = factorization(A)
    T = spla.LinearOperator((n, n), matvec=fac.solve, dtype=float)
    v0 = A.grid.boundary_distance / np.max(A.grid.boundary_distance)
    ncv = min(n, max(2 * k + 1, 20))
    try:
        rho = spla.eigs(T, k=k, which="LM", v0=v0, tol=tol, ncv=ncv,
                        maxiter=100 * n, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        got = [complex(1.0 / z) for z in exc.eigenvalues]
        raise EigenConvergenceError(
            f"Arnoldi converged for {len(got)} of {k} eigenvalues", partial=got) from exc
    lam = [complex(1.0 / z) for z in rho]
    lam = [complex(z.real, 0.0) if abs(z.imag) <= 1e-12 * abs(z) else z for z in lam]
    return sorted(lam, key=lambda z: (abs(z), z.imag))


def minmax_quotient(A: DiscreteOperator, u) -> float:
    """``min_i (A u)_i / u_i`` for a strictly positive interior vector ``u``."""
    u = np.asarray(u)
    if u.dtype != np.longdouble:
        u = u.astype(float)
    if u.shape != (A.size,):
        raise ValueError(f"u has shape {u.shape}, expected ({A.size},)")
    if not np.all(u > 0):
        raise ValueError(
            f"u must be strictly positive at every node (min {np.min(u):.3e} at node {int(np.argmin(u))})"
        )
    Au = matvec_long(A, u)
    return float(np.min(Au / u.astype(np.longdouble)))


def rayleigh_lambda1(grid: Grid, s: float | None, **assemble_kw) -> float:
    """Smallest eigenvalue of the symmetric drift-free matrix (discrete Rayleigh minimum)."""
    A = assemble(grid, s, DriftField.zero(grid.dimension), 0.0, **assemble_kw)
    M = A.matrix
    if A.dense:
        return float(sla.eigh(M, eigvals_only=True, subset_by_index=[0, 0])[0])
    val = spla.eigsh(M, k=1, sigma=0.0, which="LM", return_eigenvectors=False)
    return float(val[0])
