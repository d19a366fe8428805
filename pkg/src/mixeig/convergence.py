"""Grid convergence of lambda_1 and observed orders."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from scipy.optimize import brentq

from .eigen import principal_eig
from .grid import DomainSpec, build_grid
from .operator import DriftField, assemble


@dataclass
class ConvergenceRow:
    n: int
    h: float
    lambda1: float
    order: float = float("nan")


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, partial: list[ConvergenceRow]):
        super().__init__(message)
        self.partial = partial


def observed_order(h, lam) -> float:
    """Order ``p`` with ``lam(h) = lam* + C h^p`` through three levels.

    Solves ``(l1 - l2) / (l2 - l3) = (h1^p - h2^p) / (h2^p - h3^p)``; for exact
    halvings this is ``log2((l1 - l2) / (l2 - l3))``. Returns nan when the
    differences change sign (non-monotone sequence).
    """
    h1, h2, h3 = h
    l1, l2, l3 = lam
    d1, d2 = l1 - l2, l2 - l3
    if d2 == 0.0 or d1 / d2 <= 0.0:
        return float("nan")
    target = math.log(d1 / d2)

    def g(p):
        return math.log((h1 ** p - h2 ** p) / (h2 ** p - h3 ** p)) - target

    lo, hi = 1e-3, 12.0
    if g(lo) * g(hi) > 0:
        return float("nan")
    return brentq(g, lo, hi, xtol=1e-12)


def converge(domain: DomainSpec, levels, s: float | None, q: DriftField | None = None,
             scheme: str = "central", tol: float = 1e-10, **assemble_kw) -> list[ConvergenceRow]:
    """lambda_1 per grid level and observed orders from consecutive triples.

    The order of row k uses levels k-2, k-1, k; the first two rows carry nan.
    """
    levels = sorted(int(n) for n in levels)
    if len(levels) < 3:
        raise ValueError("need at least 3 grid levels")
    rows: list[ConvergenceRow] = []
    for n in levels:
        spec = DomainSpec(domain.dimension, domain.bounds, n)
        grid = build_grid(spec)
        try:
            e = principal_eig(assemble(grid, s, q, 1.0, scheme, **assemble_kw), tol=tol)
        except Exception as exc:
            raise ConvergenceError(f"eigensolve failed at n={n}: {exc}", rows) from exc
        rows.append(ConvergenceRow(n, spec.h, e.lambda1))
    for k in range(2, len(rows)):
        trio = rows[k - 2:k + 1]
        rows[k].order = observed_order([r.h for r in trio], [r.lambda1 for r in trio])
    return rows


def rows_to_csv(rows: list[ConvergenceRow], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "h", "lambda1", "observed_order"])
        for r in rows:
            w.writerow([r.n, repr(r.h), repr(r.lambda1), repr(r.order)])
    return path
