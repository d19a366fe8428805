"""Assembly of L_lambda = -Delta + (-Delta)^s + lambda q . grad on interior nodes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .expr import compile_expression
from .frac_kernel import FracParams, WeightTable, apply_frac, build_weights, frac_matrix
from .grid import Grid

# dense storage below this many unknowns, CSR above
DENSE_LIMIT = 3000

SCHEMES = ("central", "upwind")


class DriftField:
    """Drift vector field ``q`` sampled at arbitrary points.

    ``rule`` maps an (m, d) array of points to an (m, d) array of drift
    vectors. ``holder_note`` is free text describing the intended
    smoothness; it is recorded, never checked.
    """

    def __init__(self, rule: Callable[[np.ndarray], np.ndarray], dimension: int,
                 description: str = "custom", holder_note: str = "C^{0,alpha}"):
        self.rule = rule
        self.dimension = dimension
        self.description = description
        self.holder_note = holder_note
        self.is_zero = False

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        q = np.asarray(self.rule(pts), dtype=float).reshape(pts.shape[0], self.dimension)
        if not np.all(np.isfinite(q)):
            raise ValueError(f"drift {self.description!r} is not finite at every point")
        return q

    def __repr__(self):
        return f"DriftField({self.description!r})"

    def sup(self, grid: Grid) -> float:
        """Sup-norm of |q| over the grid nodes."""
        q = self(grid.nodes)
        return float(np.max(np.linalg.norm(q, axis=1))) if q.size else 0.0

    @classmethod
    def zero(cls, dimension: int = 1) -> "DriftField":
        field_ = cls(lambda p: np.zeros((p.shape[0], dimension)), dimension, "zero", "C^infinity")
        field_.is_zero = True
        return field_

    @classmethod
    def constant(cls, c, dimension: int = 1) -> "DriftField":
        vec = np.broadcast_to(np.asarray(c, dtype=float), (dimension,)).copy()
        if not np.all(np.isfinite(vec)):
            raise ValueError("constant drift must be finite")
        field_ = cls(lambda p: np.tile(vec, (p.shape[0], 1)), dimension,
                     f"constant {vec.tolist() if dimension > 1 else float(vec[0])}", "C^infinity")
        field_.is_zero = not np.any(vec)
        return field_

    @classmethod
    def from_expression(cls, exprs, dimension: int = 1) -> "DriftField":
        """One expression string per component, e.g. ``"sin(2*pi*x)"`` or ``["y", "-x"]``."""
        if isinstance(exprs, str):
            exprs = [exprs]
        if len(exprs) != dimension:
            raise ValueError(f"need {dimension} drift expression(s), got {len(exprs)}")
        funcs = [compile_expression(e, dimension) for e in exprs]

        def rule(p):
            return np.column_stack([f(p) for f in funcs])

        return cls(rule, dimension, "expression " + "; ".join(exprs))

    @classmethod
    def from_table(cls, axes, values, dimension: int = 1) -> "DriftField":
        """Piecewise-linear interpolation of sampled values.

        1D: ``axes`` is the sample abscissae, ``values`` has shape (m,).
        2D: ``axes`` is ``(xs, ys)``, ``values`` has shape (len(xs), len(ys), 2).
        Points outside the table are clamped to its edge values.
        """
        if dimension == 1:
            xs = np.asarray(axes, dtype=float).ravel()
            vs = np.asarray(values, dtype=float).ravel()
            if xs.shape != vs.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
                raise ValueError("1D drift table needs >= 2 strictly increasing samples")

            def rule(p):
                return np.interp(p[:, 0], xs, vs)[:, None]
        else:
            from scipy.interpolate import RegularGridInterpolator

            xs, ys = (np.asarray(a, dtype=float) for a in axes)
            vs = np.asarray(values, dtype=float)
            if vs.shape != (xs.size, ys.size, 2):
                raise ValueError("2D drift table values must have shape (nx, ny, 2)")
            interp = RegularGridInterpolator((xs, ys), vs, bounds_error=False, fill_value=None)

            def rule(p):
                clamped = np.column_stack([np.clip(p[:, 0], xs[0], xs[-1]),
                                           np.clip(p[:, 1], ys[0], ys[-1])])
                return interp(clamped)
        return cls(rule, dimension, "sampled table", "Lipschitz (piecewise linear)")


def _check_length(u, grid: Grid) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.interior_count,):
        raise ValueError(f"u has shape {u.shape}, expected ({grid.interior_count},)")
    return u


def _pad(u, grid: Grid) -> np.ndarray:
    return np.pad(u.reshape(grid.shape), 1)


def apply_local(u, grid: Grid) -> np.ndarray:
    """Second-order central difference for -Delta with zero exterior values."""
    u = _check_length(u, grid)
    U = _pad(u, grid)
    h2 = grid.h * grid.h
    if grid.dimension == 1:
        out = (2.0 * U[1:-1] - U[:-2] - U[2:]) / h2
    else:
        c = U[1:-1, 1:-1]
        out = (4.0 * c - U[:-2, 1:-1] - U[2:, 1:-1] - U[1:-1, :-2] - U[1:-1, 2:]) / h2
    return out.ravel()


def apply_drift(u, grid: Grid, q: DriftField, scheme: str = "central") -> np.ndarray:
    """Discrete ``q . grad u``; ``upwind`` picks the one-sided difference against the flow."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown drift scheme {scheme!r}")
    u = _check_length(u, grid)
    qv = q(grid.nodes)
    U = _pad(u, grid)
    h = grid.h
    out = np.zeros(grid.interior_count)
    for axis in range(grid.dimension):
        inner = [slice(1, -1)] * grid.dimension
        lo, hi = list(inner), list(inner)
        lo[axis], hi[axis] = slice(0, -2), slice(2, None)
        c = U[tuple(inner)].ravel()
        back = U[tuple(lo)].ravel()
        fwd = U[tuple(hi)].ravel()
        qa = qv[:, axis]
        if scheme == "central":
            out += qa * (fwd - back) / (2.0 * h)
        else:
            out += np.where(qa > 0, qa * (c - back), qa * (fwd - c)) / h
    return out


def local_matrix(grid: Grid) -> sp.csr_matrix:
    n, h2 = grid.n, grid.h * grid.h
    T = sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    if grid.dimension == 1:
        return (T / h2).tocsr()
    eye = sp.identity(n)
    return ((sp.kron(T, eye) + sp.kron(eye, T)) / h2).tocsr()


def drift_matrix(grid: Grid, q: DriftField, scheme: str = "central") -> sp.csr_matrix:
    """Sparse matrix of :func:`apply_drift` (lambda = 1)."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown drift scheme {scheme!r}")
    n, h, m = grid.n, grid.h, grid.interior_count
    qv = q(grid.nodes)
    idx = np.arange(m).reshape(grid.shape)
    rows, cols, vals = [], [], []
    for axis in range(grid.dimension):
        stride = 1 if grid.dimension == 1 else (n if axis == 0 else 1)
        pos = idx.ravel() if grid.dimension == 1 else np.unravel_index(idx.ravel(), grid.shape)[axis]
        pos = np.asarray(pos)
        i = idx.ravel()
        qa = qv[:, axis]
        has_back, has_fwd = pos > 0, pos < n - 1
        if scheme == "central":
            entries = [(i[has_fwd], i[has_fwd] + stride, qa[has_fwd] / (2 * h)),
                       (i[has_back], i[has_back] - stride, -qa[has_back] / (2 * h))]
        else:
            pos_q, neg_q = qa > 0, qa < 0
            b, f = pos_q & has_back, neg_q & has_fwd
            entries = [(i[pos_q], i[pos_q], qa[pos_q] / h),
                       (i[b], i[b] - stride, -qa[b] / h),
                       (i[neg_q], i[neg_q], -qa[neg_q] / h),
                       (i[f], i[f] + stride, qa[f] / h)]
        for r, c, v in entries:
            rows.append(r)
            cols.append(c)
            vals.append(v)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(m, m))


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Discrete ``L_lambda`` on the interior nodes of ``grid``.

    ``s = None`` switches the fractional term off and ``local = False`` the
    Laplacian; both are diagnostic configurations used by the analytic
    benchmarks. The matrix is dense below :data:`DENSE_LIMIT` unknowns.
    """

    grid: Grid
    s: float | None
    q: DriftField = field(repr=False)
    lambda_homotopy: float = 1.0
    drift_scheme: str = "central"
    local: bool = True
    table: WeightTable | None = field(default=None, repr=False)
    transposed: bool = False

    @property
    def size(self) -> int:
        return self.grid.interior_count

    @property
    def dense(self) -> bool:
        return self.size < DENSE_LIMIT

    @cached_property
    def q_sup(self) -> float:
        return self.q.sup(self.grid)

    @property
    def cell_peclet(self) -> float:
        """h * sup|q| / 2, scaled by the homotopy parameter."""
        return self.grid.h * self.q_sup * abs(self.lambda_homotopy) / 2.0

    @property
    def has_drift(self) -> bool:
        return not self.q.is_zero and self.lambda_homotopy != 0.0

    @cached_property
    def base_matrix(self):
        """``A_local + A_frac`` (symmetric)."""
        m = self.size
        A = local_matrix(self.grid) if self.local else sp.csr_matrix((m, m))
        if self.dense:
            A = A.toarray()
            if self.table is not None:
                A = A + frac_matrix(self.grid, self.table)
        elif self.table is not None:
            A = (A + sp.csr_matrix(frac_matrix(self.grid, self.table))).tocsr()
        return A

    @cached_property
    def drift_part(self):
        """Drift matrix at lambda = 1."""
        D = drift_matrix(self.grid, self.q, self.drift_scheme)
        return D.toarray() if self.dense else D

    @cached_property
    def matrix(self):
        A = self.base_matrix
        if self.has_drift:
            A = A + self.lambda_homotopy * self.drift_part
        if self.transposed:
            A = A.T
        if not self.dense:
            A = sp.csr_matrix(A)
        else:
            A = np.ascontiguousarray(A)
            A.setflags(write=False)
        return A

    def apply(self, u) -> np.ndarray:
        """Matrix-free product, equal to ``matrix @ u`` up to rounding."""
        if self.transposed:
            return np.asarray(self.matrix @ _check_length(u, self.grid)).ravel()
        u = _check_length(u, self.grid)
        out = np.zeros_like(u)
        if self.local:
            out += apply_local(u, self.grid)
        if self.table is not None:
            out += apply_frac(u, self.grid, self.table)
        if self.has_drift:
            out += self.lambda_homotopy * apply_drift(u, self.grid, self.q, self.drift_scheme)
        return out

    def with_lambda(self, lam: float) -> "DiscreteOperator":
        """Same operator at another homotopy parameter, sharing the symmetric part."""
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"homotopy parameter must lie in [0, 1], got {lam}")
        new = replace(self, lambda_homotopy=float(lam))
        for name in ("base_matrix", "drift_part", "q_sup"):
            if name in self.__dict__:
                new.__dict__[name] = self.__dict__[name]
        return new

    def transpose(self) -> "DiscreteOperator":
        """Discrete formal adjoint (the transposed matrix)."""
        new = replace(self, transposed=not self.transposed)
        for name in ("base_matrix", "drift_part", "q_sup"):
            if name in self.__dict__:
                new.__dict__[name] = self.__dict__[name]
        return new

    def hypothesis_flags(self) -> list[str]:
        flags = []
        if self.s is not None and not 0.0 < self.s <= 0.5:
            flags.append("s outside (0,1/2]")
        if self.grid.dimension == 2:
            flags.append("domain violates C^{2,alpha} (hypothesis-violating domain: box corners)")
        return flags

    def to_coo_text(self, path) -> Path:
        """Dump nonzero entries as ``row col value`` lines."""
        path = Path(path)
        M = sp.coo_matrix(self.matrix)
        with path.open("w", encoding="utf-8") as fh:
            fh.write("row col value\n")
            for r, c, v in zip(M.row, M.col, M.data):
                if v != 0.0:
                    fh.write(f"{r} {c} {v!r}\n")
        return path


def assemble(grid: Grid, s: float | None, q: DriftField | None = None,
             lambda_homotopy: float = 1.0, drift_scheme: str = "central", *,
             local: bool = True, frac_params: FracParams | None = None) -> DiscreteOperator:
    """Assemble ``A_local + A_frac + lambda * A_drift`` for ``grid``.

    ``s`` must lie in (0, 1); pass ``None`` to omit the fractional term.
    """
    if s is not None and not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    if not 0.0 <= lambda_homotopy <= 1.0:
        raise ValueError(f"homotopy parameter must lie in [0, 1], got {lambda_homotopy}")
    if drift_scheme not in SCHEMES:
        raise ValueError(f"unknown drift scheme {drift_scheme!r}")
    if q is None:
        q = DriftField.zero(grid.dimension)
    if q.dimension != grid.dimension:
        raise ValueError(f"drift has dimension {q.dimension}, grid has {grid.dimension}")
    table = None
    if s is not None:
        params = frac_params or FracParams(s)
        if not math.isclose(params.s, s):
            raise ValueError("frac_params.s disagrees with s")
        table = build_weights(grid, params)
    op = DiscreteOperator(grid=grid, s=s, q=q, lambda_homotopy=float(lambda_homotopy),
                          drift_scheme=drift_scheme, local=local, table=table)
    op.q_sup  # validates finiteness of q on the grid
    return op
