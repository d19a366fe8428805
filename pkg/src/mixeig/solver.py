"""Linear solves ``A u = f`` (the solution operator T) and the continuation sweep."""

from __future__ import annotations

import csv
import logging
import warnings
import weakref
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .operator import DiscreteOperator, DriftField, assemble
from .grid import Grid

log = logging.getLogger(__name__)

ITERATIVE_LIMIT = 20_000
DEFAULT_TOL = 1e-12
_EPS = np.finfo(float).eps


class SingularOperatorError(np.linalg.LinAlgError):
    """The discrete operator is (numerically) singular, so ``A u = f`` has no unique solution."""


class SolveError(RuntimeError):
    pass


@dataclass
class SolveReport:
    u: np.ndarray
    residual_inf: float
    bound_ratio: float
    factorization_reused: bool
    refinement_steps: int = 0
    tolerance: float = DEFAULT_TOL


class _Factorization:
    def __init__(self, A: DiscreteOperator):
        M = A.matrix
        self.dense = A.dense
        if self.dense:
            with warnings.catch_warnings():
                # singularity is detected below and raised as an error
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                self.lu = sla.lu_factor(M, check_finite=True)
            anorm = np.abs(M).sum(axis=1).max()
            # reciprocal condition estimate in the infinity norm
            gecon = sla.get_lapack_funcs("gecon", (self.lu[0],))
            rcond, info = gecon(self.lu[0], anorm, norm="I")
            self.rcond = float(rcond)
            if not np.all(np.diag(self.lu[0])) or self.rcond < _EPS:
                raise SingularOperatorError(
                    f"operator matrix is singular to working precision (rcond={self.rcond:.3e})"
                )
        else:
            try:
                self.lu = spla.splu(sp.csc_matrix(M))
            except RuntimeError as exc:
                raise SingularOperatorError(f"operator matrix is singular: {exc}") from exc
            self.rcond = float("nan")

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.dense:
            return sla.lu_solve(self.lu, b, check_finite=False)
        return self.lu.solve(b)


# factorizations keyed by operator identity; operators are immutable
_FACTORS: "weakref.WeakKeyDictionary[DiscreteOperator, _Factorization]" = weakref.WeakKeyDictionary()
_LONG: "weakref.WeakKeyDictionary[DiscreteOperator, np.ndarray]" = weakref.WeakKeyDictionary()


def factorization(A: DiscreteOperator) -> tuple[_Factorization, bool]:
    """Cached factorization of ``A``; the flag is True when it was reused."""
    fac = _FACTORS.get(A)
    if fac is not None:
        return fac, True
    fac = _Factorization(A)
    _FACTORS[A] = fac
    return fac, False


def residual(A: DiscreteOperator, u: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``f - A u``, accumulated in extended precision for dense operators."""
    if A.dense:
        L = _LONG.get(A)
        if L is None:
            L = np.asarray(A.matrix, dtype=np.longdouble)
            _LONG[A] = L
        r = f.astype(np.longdouble) - L @ u.astype(np.longdouble)
        return r.astype(float)
    return f - A.matrix @ u


def matvec_long(A: DiscreteOperator, u: np.ndarray) -> np.ndarray:
    """``A u`` in extended precision (dense) returned as longdouble."""
    if A.dense:
        L = _LONG.get(A)
        if L is None:
            L = np.asarray(A.matrix, dtype=np.longdouble)
            _LONG[A] = L
        return L @ u.astype(np.longdouble)
    return np.asarray(A.matrix @ u, dtype=np.longdouble)


def solve_extended(A: DiscreteOperator, f, max_refine: int = 4) -> np.ndarray:
    """Solve ``A x = f`` to extended precision by mixed-precision refinement.

    The LU factors stay in double precision; residuals and the iterate are
    carried in ``np.longdouble``. Only meaningful for dense operators; sparse
    ones fall back to a double-precision solve.
    """
    f = np.asarray(f, dtype=np.longdouble)
    fac, _ = factorization(A)
    if not A.dense:
        return np.asarray(solve(A, f.astype(float)).u, dtype=np.longdouble)
    x = fac.solve(f.astype(float)).astype(np.longdouble)
    prev = np.inf
    for _ in range(max_refine):
        r = f - matvec_long(A, x)
        rnorm = float(np.max(np.abs(r)))
        if rnorm == 0.0 or rnorm >= prev:
            break
        prev = rnorm
        x = x + fac.solve(r.astype(float)).astype(np.longdouble)
    if not np.all(np.isfinite(x)):
        raise SingularOperatorError("solution is not finite; operator is numerically singular")
    return x


def attainable_residual(A: DiscreteOperator, u: np.ndarray) -> float:
    """Rounding floor of ``|f - A u|_inf`` for a solution stored in double precision."""
    M = A.matrix
    row = np.abs(M) @ np.abs(u)
    return float(4.0 * _EPS * np.max(np.asarray(row).ravel()))


def solve(A: DiscreteOperator, f, tol: float = DEFAULT_TOL, max_refine: int = 6) -> SolveReport:
    """Solve ``A u = f`` by LU with iterative refinement.

    Dense operators refine in extended precision: residuals and the iterate
    are ``np.longdouble`` (returned as such), so ``|f - A u|_inf <= tol (1 + |f|_inf)``
    is reachable even when ``eps |A| |u|`` exceeds it. Sparse operators refine
    in double precision and stop at the larger of the target and the rounding
    floor ``4 eps max_i sum_j |A_ij| |u_j|``. Operators larger than
    :data:`ITERATIVE_LIMIT` use restarted GMRES on the matrix-free product.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (A.size,):
        raise ValueError(f"f has shape {f.shape}, expected ({A.size},)")
    if not np.all(np.isfinite(f)):
        raise ValueError("right-hand side must be finite")
    if not tol > 0:
        raise ValueError("tol must be positive")
    fnorm = float(np.max(np.abs(f))) if f.size else 0.0
    if fnorm == 0.0:
        # T 0 = 0 exactly; still factor so singular operators surface
        reused = A.size <= ITERATIVE_LIMIT and factorization(A)[1]
        return SolveReport(np.zeros_like(f), 0.0, 0.0, reused, 0, tol)
    target = tol * (1.0 + fnorm)
    if A.size > ITERATIVE_LIMIT:
        return _solve_iterative(A, f, tol, target, fnorm)
    fac, reused = factorization(A)
    if A.dense:
        u, rnorm, steps = _refine_long(A, fac, f, target, max_refine)
    else:
        u = fac.solve(f)
        steps = 0
        r = residual(A, u, f)
        rnorm = float(np.max(np.abs(r)))
        while rnorm > max(target, attainable_residual(A, u)) and steps < max_refine:
            u_new = u + fac.solve(r)
            steps += 1
            r_new = residual(A, u_new, f)
            rnew = float(np.max(np.abs(r_new)))
            if rnew >= rnorm:
                break
            u, r, rnorm = u_new, r_new, rnew
    if not np.all(np.isfinite(u)):
        raise SingularOperatorError("solution is not finite; operator is numerically singular")
    return SolveReport(u, rnorm, float(np.max(np.abs(u))) / fnorm, reused, steps, tol)


def _refine_long(A, fac, f, target, max_refine):
    fl = f.astype(np.longdouble)
    u = fac.solve(f).astype(np.longdouble)
    r = fl - matvec_long(A, u)
    rnorm = float(np.max(np.abs(r)))
    steps = 0
    while rnorm > target and steps < max_refine:
        u_new = u + fac.solve(r.astype(float)).astype(np.longdouble)
        steps += 1
        r_new = fl - matvec_long(A, u_new)
        rnew = float(np.max(np.abs(r_new)))
        if rnew >= rnorm:
            break
        u, r, rnorm = u_new, r_new, rnew
    return u, rnorm, steps


def _solve_iterative(A, f, tol, target, fnorm) -> SolveReport:
    op = spla.LinearOperator((A.size, A.size), matvec=A.apply, dtype=float)
    diag = np.asarray(A.matrix.diagonal()) if not A.dense else np.diag(A.matrix)
    prec = spla.LinearOperator((A.size, A.size), matvec=lambda x: x / diag, dtype=float)
    u, info = spla.gmres(op, f, rtol=tol, atol=0.0, restart=200, maxiter=200, M=prec)
    r = f - A.apply(u)
    rnorm = float(np.max(np.abs(r)))
    if info != 0 and rnorm > target:
        raise SolveError(f"GMRES did not converge (info={info}, residual={rnorm:.3e})")
    return SolveReport(u, rnorm, float(np.max(np.abs(u))) / fnorm, False, 0, tol)


@dataclass
class SweepRow:
    lam: float
    bound_ratio: float
    residual_inf: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    spread: float
    flagged: bool
    threshold: float = 100.0

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "bound_ratio", "residual_inf"])
            for r in self.rows:
                w.writerow([repr(r.lam), repr(r.bound_ratio), repr(r.residual_inf)])
        return path


class ContinuationError(RuntimeError):
    def __init__(self, lam: float, cause: Exception):
        super().__init__(f"solve failed at lambda={lam}: {cause}")
        self.lam = lam
        self.cause = cause


def continuation_sweep(grid: Grid, s: float | None, q: DriftField, f, lambda_list,
                       drift_scheme: str = "central", tol: float = DEFAULT_TOL,
                       threshold: float = 100.0, **assemble_kw) -> SweepResult:
    """Solve ``L_lambda u = f`` along the homotopy and record ``|u|_inf / |f|_inf``.

    The symmetric part is assembled once; each lambda only rescales the
    drift matrix. The result is flagged when the largest ratio exceeds the
    smallest by more than ``threshold``.
    """
    lams = [float(x) for x in lambda_list]
    if not lams:
        raise ValueError("lambda_list must be nonempty")
    if any(not 0.0 <= x <= 1.0 for x in lams):
        raise ValueError("every lambda must lie in [0, 1]")
    base = assemble(grid, s, q, 0.0, drift_scheme, **assemble_kw)
    rows = []
    for lam in lams:
        try:
            rep = solve(base.with_lambda(lam), f, tol)
        except (np.linalg.LinAlgError, SolveError) as exc:
            raise ContinuationError(lam, exc) from exc
        rows.append(SweepRow(lam, rep.bound_ratio, rep.residual_inf))
    ratios = np.array([r.bound_ratio for r in rows])
    spread = float(ratios.max() / ratios.min()) if ratios.min() > 0 else float("inf")
    flagged = spread > threshold
    if flagged:
        log.warning("bound ratio spread %.3g exceeds %.3g along the homotopy", spread, threshold)
    return SweepResult(rows, spread, flagged, threshold)
