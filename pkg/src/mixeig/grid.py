"""Uniform lattices on intervals and axis-aligned boxes.

Only interior nodes are stored. Every lattice point outside the interior
index set carries the value zero, which makes the exterior Dirichlet
condition exact under zero extension.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class DomainSpec:
    """Domain description: ``dimension`` in {1, 2}, per-axis bounds, ``n`` interior nodes per axis."""

    dimension: int
    bounds: tuple[tuple[float, float], ...]
    n: int

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if len(bounds) != self.dimension:
            raise ValueError(
                f"expected {self.dimension} axis bounds, got {len(bounds)}"
            )
        for k, (a, b) in enumerate(bounds):
            if not b > a:
                raise ValueError(f"axis {k}: upper bound {b} must exceed lower bound {a}")
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"n must be an integer >= 3, got {self.n}")
        if self.dimension == 2:
            h0, h1 = (b - a for a, b in bounds)
            if not math.isclose(h0, h1, rel_tol=1e-12, abs_tol=0.0):
                raise ValueError(
                    "2D cells must be square: both axes need the same length "
                    f"for a common n (got {h0} and {h1})"
                )

    @property
    def h(self) -> float:
        a, b = self.bounds[0]
        return (b - a) / (self.n + 1)

    @property
    def diameter(self) -> float:
        return math.sqrt(sum((b - a) ** 2 for a, b in self.bounds))

    @property
    def is_box(self) -> bool:
        return self.dimension == 2

    @classmethod
    def interval(cls, a: float, b: float, n: int) -> "DomainSpec":
        return cls(1, ((a, b),), n)

    @classmethod
    def box(cls, xb: tuple[float, float], yb: tuple[float, float], n: int) -> "DomainSpec":
        return cls(2, (tuple(xb), tuple(yb)), n)


@dataclass(frozen=True, eq=False)
class Grid:
    spec: DomainSpec
    nodes: np.ndarray = field(repr=False)
    boundary_distance: np.ndarray = field(repr=False)
    h: float

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def interior_count(self) -> int:
        return self.nodes.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        """Lattice shape of the interior block."""
        return (self.n,) * self.dimension

    @property
    def x(self) -> np.ndarray:
        """Node coordinates as a 1D array (1D grids) or an (m, 2) array."""
        return self.nodes[:, 0] if self.dimension == 1 else self.nodes

    def boundary_adjacent(self) -> np.ndarray:
        """Indices of nodes one spacing away from the boundary."""
        return np.flatnonzero(np.isclose(self.boundary_distance, self.h, rtol=1e-9, atol=0.0))

    def inside(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points lying in the open domain; ``points`` has shape (m,) or (m, d)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        mask = np.ones(pts.shape[0], dtype=bool)
        for k, (a, b) in enumerate(self.spec.bounds):
            mask &= (pts[:, k] > a) & (pts[:, k] < b)
        return mask

    def to_csv(self, path) -> Path:
        path = Path(path)
        cols = ["x", "y"][: self.dimension]
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["index", *cols, "boundary_distance"])
            for i in range(self.interior_count):
                w.writerow([i, *(repr(float(c)) for c in self.nodes[i]),
                            repr(float(self.boundary_distance[i]))])
        return path


def _distance_to_faces(points: np.ndarray, bounds) -> np.ndarray:
    d = np.full(points.shape[0], np.inf)
    for k, (a, b) in enumerate(bounds):
        d = np.minimum(d, np.minimum(points[:, k] - a, b - points[:, k]))
    return d


def build_grid(spec: DomainSpec) -> Grid:
    """Lay out the interior lattice of ``spec``.

    Node ``i`` of a 1D grid sits at ``a + (i + 1) h``. In 2D nodes are
    ordered row-major with the x index varying slowest, i.e. node
    ``i * n + j`` is at ``(a0 + (i + 1) h, a1 + (j + 1) h)``.
    """
    h = spec.h
    axes = [a + h * np.arange(1, spec.n + 1) for a, _ in spec.bounds]
    if spec.dimension == 1:
        nodes = axes[0][:, None]
    else:
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        nodes = np.column_stack([X.ravel(), Y.ravel()])
    nodes.setflags(write=False)
    dist = _distance_to_faces(nodes, spec.bounds)
    dist.setflags(write=False)
    return Grid(spec=spec, nodes=nodes, boundary_distance=dist, h=h)


def dist_to_boundary(grid: Grid, node_index: int) -> float:
    """Euclidean distance from interior node ``node_index`` to the boundary."""
    if not 0 <= node_index < grid.interior_count:
        raise IndexError(
            f"node index {node_index} out of range for {grid.interior_count} nodes"
        )
    return float(grid.boundary_distance[node_index])
