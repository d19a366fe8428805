"""Lattice discretization of the fractional Laplacian with zero exterior data.

For a grid function ``u`` extended by zero outside the domain the discrete
operator reads::

    (-Delta)^s u_i  ~=  sum_k w_k (u_i - u_{i+k})  +  tail * u_i

The weights integrate ``C_{N,s} |z|^{-N-2s}`` exactly against the
piecewise-(bi)linear interpolant of ``u`` outside the cell ``[-h, h]^N``.
Inside that cell a second-order Taylor expansion turns the principal value
into a multiple of the standard second difference. Beyond the truncation
radius ``R`` the interpolant vanishes identically, so the far field reduces
to the closed-form multiple ``tail * u_i``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate, signal

from .grid import Grid

_GAUSS_POINTS = 20
_GAUSS_POINTS_2D = 16


def kernel_constant(N: int, s: float) -> float:
    """Normalization ``C_{N,s}`` making the symbol of ``(-Delta)^s`` equal to ``|xi|^{2s}``."""
    if N not in (1, 2):
        raise ValueError(f"N must be 1 or 2, got {N}")
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    # lgamma keeps full precision when Gamma(1 - s) is large near s -> 1.
    log_ratio = math.lgamma(N / 2 + s) - math.lgamma(1.0 - s)
    return math.pi ** (-N / 2) * 2.0 ** (2 * s) * s * math.exp(log_ratio)


@dataclass(frozen=True)
class FracParams:
    s: float
    tail_radius_factor: float = 2.0
    near_correction: str = "taylor2"

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not self.tail_radius_factor >= 2.0:
            raise ValueError(
                f"tail_radius_factor must be >= 2, got {self.tail_radius_factor}"
            )
        if self.near_correction not in ("taylor2", "none"):
            raise ValueError(
                f"near_correction must be 'taylor2' or 'none', got {self.near_correction!r}"
            )


@dataclass(frozen=True, eq=False)
class WeightTable:
    """Offset weights of the discrete fractional Laplacian.

    ``offsets`` has shape (m, d) and covers every nonzero lattice offset
    inside the truncation box; ``weights`` already contain ``C_{N,s}``.
    ``kernel`` is the same data laid out as a dense (2K+1)^d stencil.
    """

    s: float
    h: float
    dimension: int
    radius: float
    offsets: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    tail_coefficient: float
    kernel: np.ndarray = field(repr=False)
    near_correction: str = "taylor2"

    @property
    def reach(self) -> int:
        return (self.kernel.shape[0] - 1) // 2

    @property
    def diagonal(self) -> float:
        """Coefficient of ``u_i`` in the discrete operator."""
        return float(math.fsum(self.weights.tolist()) + self.tail_coefficient)

    def to_csv(self, path) -> Path:
        path = Path(path)
        cols = ["k", "l"][: self.dimension]
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write(
                f"# s={self.s!r},h={self.h!r},tail_coefficient={self.tail_coefficient!r}\n"
            )
            w = csv.writer(fh)
            w.writerow([*cols, "weight"])
            for off, wt in zip(self.offsets, self.weights):
                w.writerow([*(int(o) for o in off), repr(float(wt))])
        return path


@lru_cache(maxsize=None)
def _gauss(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def _hat_weights_1d(s: float, K: int) -> np.ndarray:
    """Integrals of the unit-spacing hat at offset k = 1..K against t^{-1-2s} on [1, K].

    The integrand is smooth on every cell since cells start at t >= 1, so a
    fixed Gauss rule is accurate to rounding; no special case is needed at
    s = 1/2 where the closed-form antiderivative switches to a logarithm.
    """
    g, gw = _gauss(_GAUSS_POINTS)
    k = np.arange(1, K + 1, dtype=float)[:, None]
    p = -1.0 - 2.0 * s
    left = (gw * g * (k - 1.0 + g) ** p).sum(axis=1)  # cell [k-1, k]
    right = (gw * (1.0 - g) * (k + g) ** p).sum(axis=1)  # cell [k, k+1]
    left[0] = 0.0  # [0, 1] lies in the singular cell
    right[-1] = 0.0  # beyond the truncation radius
    return left + right


def _cell_moments_2d(s: float, K: int) -> np.ndarray:
    """Bilinear moments of |t|^{-2-2s} over the unit cells [c1, c1+1] x [c2, c2+1], 0 <= c1, c2 < K.

    Returns ``M[a, b, c1, c2] = int psi_a(t1 - c1) psi_b(t2 - c2) |t|^{-2-2s}`` with
    ``psi_0(g) = 1 - g`` and ``psi_1(g) = g``. Cells close to the origin are
    split into 4 x 4 subcells before applying the tensor Gauss rule.
    """
    g, gw = _gauss(_GAUSS_POINTS_2D)
    p = -1.0 - s  # |t|^{-2-2s} = (t1^2 + t2^2)^{-1-s}
    M = np.zeros((2, 2, K, K))
    c = np.arange(K, dtype=float)

    def accumulate(sub, lo1, lo2, c1, c2, sl1, sl2):
        # sub: subcell width; lo*: subcell offsets inside the unit cell
        t1 = c1[:, None, None, None] + lo1 + sub * g[None, None, :, None]
        t2 = c2[None, :, None, None] + lo2 + sub * g[None, None, None, :]
        kern = (t1 * t1 + t2 * t2) ** p * (sub * sub) * (gw[:, None] * gw[None, :])
        g1 = (t1 - c1[:, None, None, None])
        g2 = (t2 - c2[None, :, None, None])
        for a, psi1 in enumerate((1.0 - g1, g1)):
            for b, psi2 in enumerate((1.0 - g2, g2)):
                M[a, b, sl1, sl2] += (kern * psi1 * psi2).sum(axis=(2, 3))

    near = min(K, 4)
    # far cells: single Gauss panel, processed in row blocks to bound memory
    block = max(1, 200_000 // (K * _GAUSS_POINTS_2D ** 2))
    for start in range(0, K, block):
        stop = min(K, start + block)
        rows = c[start:stop]
        accumulate(1.0, 0.0, 0.0, rows, c, slice(start, stop), slice(0, K))
    # redo the near block with composite panels
    M[:, :, :near, :near] = 0.0
    nsub = 4
    for i in range(nsub):
        for j in range(nsub):
            accumulate(1.0 / nsub, i / nsub, j / nsub, c[:near], c[:near],
                       slice(0, near), slice(0, near))
    return M


def _square_angular(power: float) -> float:
    """8 * int_0^{pi/4} cos(theta)^power dtheta (polar integrals over square exteriors)."""
    val, _ = integrate.quad(lambda th: math.cos(th) ** power, 0.0, math.pi / 4,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return 8.0 * val


def singular_cell_coefficient(N: int, s: float) -> float:
    """Factor ``c`` such that the Taylor-corrected singular cell contributes
    ``c * h^{-2s} * sum_{nearest neighbours} (u_i - u_nb)`` (without C_{N,s})."""
    if N == 1:
        return 1.0 / (2.0 - 2.0 * s)
    # (1/4) * int_{[-1,1]^2} |z|^{-2s} dz
    return 0.25 * _square_angular(2.0 * s - 2.0) / (2.0 - 2.0 * s)


def exterior_integral(N: int, s: float, R: float) -> float:
    """int of |z|^{-N-2s} outside [-R, R]^N (without C_{N,s})."""
    if N == 1:
        return R ** (-2.0 * s) / s
    return R ** (-2.0 * s) / (2.0 * s) * _square_angular(2.0 * s)


def build_weights(grid: Grid, params: FracParams) -> WeightTable:
    """Assemble the offset weights for ``grid`` and order ``params.s``."""
    s, h, N = params.s, grid.h, grid.dimension
    C = kernel_constant(N, s)
    K = max(int(math.ceil(params.tail_radius_factor * grid.spec.diameter / h - 1e-9)),
            grid.n + 1)
    R = K * h
    scale = C * h ** (-2.0 * s)
    taylor = params.near_correction == "taylor2"
    if N == 1:
        w = _hat_weights_1d(s, K)
        if taylor:
            w[0] += singular_cell_coefficient(1, s)
        w *= scale
        kernel = np.concatenate([w[::-1], [0.0], w])
        offsets = np.concatenate([-np.arange(K, 0, -1), np.arange(1, K + 1)])[:, None]
        weights = np.concatenate([w[::-1], w])
    else:
        M = _cell_moments_2d(s, K)
        # full moment table over cells c in [-K, K-1], by reflection t -> -t
        full = np.zeros((2, 2, 2 * K, 2 * K))
        for a in range(2):
            for b in range(2):
                q = M[a, b]
                qa = M[1 - a, b]
                qb = M[a, 1 - b]
                qab = M[1 - a, 1 - b]
                full[a, b, K:, K:] = q
                full[a, b, :K, K:] = qa[::-1, :]
                full[a, b, K:, :K] = qb[:, ::-1]
                full[a, b, :K, :K] = qab[::-1, ::-1]
        # central square [-1, 1]^2 is the singular cell
        full[:, :, K - 1:K + 1, K - 1:K + 1] = 0.0
        # node (k, l) collects cells (k-1, l-1) with (g, g), (k, l-1) with (1-g, g), ...
        W = np.zeros((2 * K + 1, 2 * K + 1))
        W[1:, 1:] += full[1, 1]  # cell (k-1, l-1): node at its upper-right corner
        W[:-1, 1:] += full[0, 1]  # cell (k, l-1)
        W[1:, :-1] += full[1, 0]  # cell (k-1, l)
        W[:-1, :-1] += full[0, 0]  # cell (k, l)
        W[K, K] = 0.0
        if taylor:
            c = singular_cell_coefficient(2, s)
            for dk, dl in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                W[K + dk, K + dl] += c
        W *= scale
        # exact symmetry under offset negation, then axis swap (pairwise sums commute)
        W = 0.5 * (W + W[::-1, ::-1])
        W = 0.5 * (W + W.T)
        kernel = W
        kk, ll = np.meshgrid(np.arange(-K, K + 1), np.arange(-K, K + 1), indexing="ij")
        mask = ~((kk == 0) & (ll == 0))
        offsets = np.column_stack([kk[mask], ll[mask]])
        weights = W[mask]
    tail = C * exterior_integral(N, s, R)
    for arr in (offsets, weights, kernel):
        arr.setflags(write=False)
    return WeightTable(s=s, h=h, dimension=N, radius=R, offsets=offsets,
                       weights=weights, tail_coefficient=tail, kernel=kernel,
                       near_correction=params.near_correction)


def analytic_diagonal(N: int, s: float, h: float, near_correction: str = "taylor2") -> float:
    """Closed-form value of ``sum_k w_k + tail``, independent of the truncation radius."""
    C = kernel_constant(N, s)
    near = 2 * N * singular_cell_coefficient(N, s) if near_correction == "taylor2" else 0.0
    return C * h ** (-2.0 * s) * (near + exterior_integral(N, s, 1.0))


def _coupling_kernel(grid: Grid, table: WeightTable) -> np.ndarray:
    """Stencil restricted to offsets that can join two interior nodes."""
    K, m = table.reach, grid.n - 1
    if table.dimension == 1:
        return table.kernel[K - m:K + m + 1]
    return table.kernel[K - m:K + m + 1, K - m:K + m + 1]


def apply_frac(u, grid: Grid, table: WeightTable) -> np.ndarray:
    """Discrete ``(-Delta)^s u`` at interior nodes, exterior values taken as zero."""
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.interior_count,):
        raise ValueError(
            f"u has shape {u.shape}, expected ({grid.interior_count},)"
        )
    if table.dimension != grid.dimension or not math.isclose(table.h, grid.h, rel_tol=1e-12):
        raise ValueError("weight table was built for a different grid")
    kern = _coupling_kernel(grid, table)
    m = grid.n - 1
    if grid.dimension == 1:
        coupled = np.convolve(u, kern, mode="full")[m:m + grid.n]
    else:
        U = u.reshape(grid.shape)
        full = signal.convolve(U, kern, mode="full", method="direct")
        coupled = full[m:m + grid.n, m:m + grid.n].ravel()
    return table.diagonal * u - coupled


def frac_matrix(grid: Grid, table: WeightTable) -> np.ndarray:
    """Dense matrix of :func:`apply_frac` (symmetric, block Toeplitz in 2D)."""
    kern = _coupling_kernel(grid, table)
    m = grid.n - 1
    idx = np.arange(grid.n)
    D = idx[None, :] - idx[:, None] + m  # offset j - i, shifted
    if grid.dimension == 1:
        A = -kern[D]
    else:
        A = -kern[D[:, None, :, None], D[None, :, None, :]]
        A = A.reshape(grid.interior_count, grid.interior_count)
    A[np.diag_indices_from(A)] = table.diagonal
    return A
