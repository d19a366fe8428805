"""Killed drift-diffusion-jump paths: survival decay as an independent estimate of lambda_1.

Convention: ``e^{-tL}`` is the semigroup of the process with drift ``-q``,
diffusion matrix ``2 I`` (generator ``Delta``) and an isotropic ``2s``-stable
jump part with characteristic function ``exp(-t |k|^{2s})``, whose generator
is ``-(-Delta)^s`` with the ``C_{N,s}`` normalization. Paths start at the
domain center and are killed the first step they land outside the domain.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import DomainSpec
from .operator import DriftField

MIN_WINDOW_SURVIVORS = 50
FIT_WINDOW = (0.05, 0.5)
CHUNK_PATHS = 5000
MIN_GROUPS = 20


class InsufficientStatistics(RuntimeError):
    """Too few survivors to fit a decay rate; ``curve`` holds the raw counts."""

    def __init__(self, message: str, curve: "SurvivalCurve"):
        super().__init__(message)
        self.curve = curve


@dataclass(frozen=True)
class PathParams:
    dt: float
    n_paths: int
    horizon: float
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0 or not self.horizon > 0:
            raise ValueError("dt and horizon must be positive")
        if self.n_paths < 1000:
            raise ValueError("n_paths must be at least 1000")
        if self.dt > 1e-2 * self.horizon:
            raise ValueError("dt must not exceed horizon / 100")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ValueError(f"horizon/dt = {steps} is not an integer")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))


def chunk_sizes(n_paths: int) -> list[int]:
    """Deterministic split of the paths into independent groups (never depends on threads)."""
    groups = max(MIN_GROUPS, math.ceil(n_paths / CHUNK_PATHS))
    base, extra = divmod(n_paths, groups)
    return [base + (i < extra) for i in range(groups)]


@dataclass
class SurvivalCurve:
    times: np.ndarray = field(repr=False)
    survivors: np.ndarray = field(repr=False)
    n_paths: int
    lambda_hat: float = float("nan")
    ci_half_width: float = float("nan")
    fit_window: tuple[float, float] = (float("nan"), float("nan"))
    group_survivors: np.ndarray | None = field(default=None, repr=False)

    @property
    def fraction(self) -> np.ndarray:
        return self.survivors / self.n_paths

    def median_survival_time(self) -> float:
        below = np.flatnonzero(self.survivors <= self.n_paths / 2)
        return float(self.times[below[0]]) if below.size else float("inf")

    def summary(self) -> dict:
        return {"lambda_hat": self.lambda_hat, "ci_half_width": self.ci_half_width,
                "fit_window": list(self.fit_window), "n_paths": self.n_paths,
                "median_survival_time": self.median_survival_time()}

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "survivors", "fraction"])
            for t, c in zip(self.times, self.survivors):
                w.writerow([repr(float(t)), int(c), repr(c / self.n_paths)])
        return path

    def to_json(self, path) -> Path:
        path = Path(path)
        data = {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v))
                for k, v in self.summary().items()}
        path.write_text(json.dumps(data, indent=2, sort_keys=True), encoding="utf-8")
        return path


def stable_sample(alpha: float, scale: float, rng: np.random.Generator, size) -> np.ndarray:
    """Symmetric alpha-stable draws with characteristic function ``exp(-|scale k|^alpha)``.

    Chambers-Mallows-Stuck: with ``V ~ U(-pi/2, pi/2)`` and ``W ~ Exp(1)``,
    ``sin(a V) / cos(V)^(1/a) * (cos((1-a) V) / W)^((1-a)/a)``.
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError("alpha_stable must lie in (0, 2)")
    V = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, size)
    if alpha == 1.0:
        return scale * np.tan(V)
    W = rng.standard_exponential(size)
    X = (np.sin(alpha * V) / np.cos(V) ** (1.0 / alpha)
         * (np.cos((1.0 - alpha) * V) / W) ** ((1.0 - alpha) / alpha))
    return scale * X


def stable_increment(alpha_stable: float, scale: float, seed_stream: np.random.Generator) -> float:
    """One symmetric ``alpha_stable``-stable draw from the generator ``seed_stream``."""
    return float(stable_sample(alpha_stable, scale, seed_stream, None))


def positive_stable(beta: float, rng: np.random.Generator, size) -> np.ndarray:
    """Positive beta-stable draws with Laplace transform ``exp(-u^beta)`` (Kanter)."""
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    U = rng.uniform(0.0, 1.0, size) * math.pi
    E = rng.standard_exponential(size)
    return (np.sin(beta * U) / np.sin(U) ** (1.0 / beta)
            * (np.sin((1.0 - beta) * U) / E) ** ((1.0 - beta) / beta))


def isotropic_jumps(alpha: float, dt: float, rng: np.random.Generator, m: int, dim: int) -> np.ndarray:
    """Jumps over ``dt`` with characteristic function ``exp(-dt |k|^alpha)`` in ``dim`` dimensions."""
    if dim == 1:
        return stable_sample(alpha, dt ** (1.0 / alpha), rng, (m, 1))
    # sub-Gaussian: sqrt(A) N(0, 2 I) with A positive (alpha/2)-stable
    A = positive_stable(alpha / 2.0, rng, m) * dt ** (2.0 / alpha)
    return np.sqrt(A)[:, None] * rng.normal(0.0, math.sqrt(2.0), (m, dim))


def _run_group(domain: DomainSpec, s, q: DriftField, p: PathParams, local: bool,
               seed_seq: np.random.SeedSequence, m: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    lo = np.array([b[0] for b in domain.bounds])
    hi = np.array([b[1] for b in domain.bounds])
    x = np.tile(0.5 * (lo + hi), (m, 1))
    counts = np.zeros(p.steps + 1, dtype=np.int64)
    counts[0] = m
    sq = math.sqrt(2.0 * p.dt)
    for k in range(1, p.steps + 1):
        if not q.is_zero:
            x = x - p.dt * q(x)
        if local:
            x = x + sq * rng.standard_normal(x.shape)
        if s is not None:
            x = x + isotropic_jumps(2.0 * s, p.dt, rng, x.shape[0], x.shape[1])
        x = x[np.all((x > lo) & (x < hi), axis=1)]
        counts[k] = x.shape[0]
        if counts[k] == 0:
            break
    return counts


def fit_decay(times: np.ndarray, survivors: np.ndarray, n_paths: int,
              window: tuple[float, float] | None = None):
    """Least-squares decay rate of log-survival over the fraction window ``[0.05, 0.5]``."""
    frac = survivors / n_paths
    if window is None:
        sel = (frac >= FIT_WINDOW[0]) & (frac <= FIT_WINDOW[1])
    else:
        sel = (times >= window[0]) & (times <= window[1]) & (survivors > 0)
    if np.count_nonzero(sel) < 3:
        return float("nan"), (float("nan"), float("nan")), sel
    slope = np.polyfit(times[sel], np.log(frac[sel]), 1)[0]
    return float(-slope), (float(times[sel][0]), float(times[sel][-1])), sel


def simulate_survival(domain: DomainSpec, s: float | None, q: DriftField, p: PathParams,
                      threads: int = 1, local: bool = True) -> SurvivalCurve:
    """Survival counts of killed paths and the fitted decay rate ``lambda_hat``.

    ``s=None`` disables jumps (pure drift-diffusion). Paths are split into a
    fixed number of groups, each with its own Philox stream spawned from
    ``p.seed``; group counts are summed in order, so the result is identical
    for any ``threads``. The 95% half-width is a delete-one-group jackknife.
    Raises :class:`InsufficientStatistics` (carrying the curve) when the fit
    window holds fewer than 50 survivors.
    """
    if s is not None and not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0, 1)")
    if q.dimension != domain.dimension:
        raise ValueError("drift dimension does not match the domain")
    sizes = chunk_sizes(p.n_paths)
    seqs = np.random.SeedSequence(p.seed).spawn(len(sizes))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        groups = list(pool.map(lambda a: _run_group(domain, s, q, p, local, *a), zip(seqs, sizes)))
    G = np.vstack(groups)
    survivors = G.sum(axis=0)
    times = p.dt * np.arange(p.steps + 1)
    curve = SurvivalCurve(times, survivors, p.n_paths, group_survivors=G)
    lam, window, sel = fit_decay(times, survivors, p.n_paths)
    if not np.isfinite(lam) or survivors[sel].min() < MIN_WINDOW_SURVIVORS:
        raise InsufficientStatistics(
            f"fit window holds too few survivors (need >= {MIN_WINDOW_SURVIVORS} and 3 time points)", curve)
    curve.lambda_hat, curve.fit_window = lam, window
    # jackknife over groups, same window
    loo = []
    for j, m in enumerate(sizes):
        rest = survivors - G[j]
        loo.append(fit_decay(times, rest, p.n_paths - m, window)[0])
    loo = np.array(loo)
    g = len(sizes)
    var = (g - 1) / g * float(np.sum((loo - loo.mean()) ** 2))
    curve.ci_half_width = 1.96 * math.sqrt(var)
    return curve
