"""Quantitative checks of the maximum principle, the Hopf lemma and its barrier."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .eigen import EigenResult, minmax_quotient, principal_eig
from .frac_kernel import kernel_constant
from .grid import Grid
from .operator import DiscreteOperator, DriftField, assemble
from .solver import solve

NEG_TOL = 1e-12


@dataclass
class Verdict:
    """Outcome of one named check; ``gating`` verdicts decide the exit status."""

    name: str
    passed: bool
    tolerance: dict
    metrics: dict = field(default_factory=dict)
    gating: bool = True
    seeds: list[int] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


class PropertyViolation(AssertionError):
    def __init__(self, verdict: Verdict):
        super().__init__(f"{verdict.name} failed: {verdict.metrics}")
        self.verdict = verdict


def _finish(verdict: Verdict, raise_on_failure: bool) -> Verdict:
    if raise_on_failure and verdict.gating and not verdict.passed:
        raise PropertyViolation(verdict)
    return verdict


def trial_seeds(master: int, trials: int) -> list[int]:
    """Per-trial seeds: the first word of ``SeedSequence(master).spawn(trials)[k]``."""
    children = np.random.SeedSequence(master).spawn(trials)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def random_source(n: int, seed: int) -> np.ndarray:
    """Nonnegative, not identically zero source with random support density."""
    rng = np.random.default_rng(seed)
    density = rng.uniform(0.02, 1.0)
    f = rng.random(n) * (rng.random(n) < density)
    if not np.any(f):
        f[rng.integers(n)] = 1.0
    return f


def check_max_principle(A: DiscreteOperator, trials: int = 100, seed: int = 0,
                        threads: int = 1, raise_on_failure: bool = False) -> Verdict:
    """Solve ``A u = f`` for seeded ``f >= 0`` and check ``u > 0`` inside, plus ``f = 0 => u = 0``.

    Only upwind (or drift-free) assemblies carry the M-matrix sign pattern,
    so central-drift runs are reported as informational.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    gating = A.drift_scheme == "upwind" or not A.has_drift
    seeds = trial_seeds(seed, trials)

    def run(trial_seed):
        f = random_source(A.size, trial_seed)
        u = solve(A, f).u
        return trial_seed, f, float(np.min(u))

    # trials are independent; results are consumed in seed order
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        outcomes = list(pool.map(run, seeds))
    worst = min(m for _, _, m in outcomes)
    failures = [(sd, f) for sd, f, m in outcomes if not (m > 0.0 and m >= -NEG_TOL)]
    u0 = solve(A, np.zeros(A.size)).u
    zero_ok = not np.any(u0)
    metrics = {"trials": trials, "min_u_over_trials": worst, "zero_source_max_abs_u": float(np.max(np.abs(u0))),
               "failed_trials": len(failures)}
    if failures:
        sd, f = failures[0]
        metrics["first_failure"] = {"seed": sd, "f": f.tolist()}
    notes = [] if gating else ["central drift: discrete maximum principle not guaranteed (informational)"]
    v = Verdict("max_principle", not failures and zero_ok,
                {"u_min_strict": 0.0, "u_global_min": -NEG_TOL}, metrics, gating, seeds, notes)
    return _finish(v, raise_on_failure)


def hopf_quotients(phi, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Boundary-adjacent node indices and the one-sided quotients ``phi(x_adj) / h``.

    With ``phi = 0`` on the boundary, ``-phi(x_adj) / h`` approximates the
    outward normal derivative, so a positive quotient is the discrete Hopf sign.
    """
    idx = grid.boundary_adjacent()
    phi = np.asarray(phi, dtype=float)
    return idx, phi[idx] / grid.h


def check_hopf(e: EigenResult, grid: Grid, raise_on_failure: bool = False) -> Verdict:
    idx, quot = hopf_quotients(e.phi1, grid)
    eps = float(np.min(quot))
    metrics = {"epsilon": eps, "min_node": int(idx[np.argmin(quot)]),
               "min_location": grid.nodes[idx[np.argmin(quot)]].tolist()}
    if grid.dimension == 1:
        metrics["left_quotient"] = float(quot[0])
        metrics["right_quotient"] = float(quot[-1])
    v = Verdict("hopf", eps > 0.0, {"epsilon_min": 0.0}, metrics)
    return _finish(v, raise_on_failure)


def check_minmax(A: DiscreteOperator, e: EigenResult, n_vectors: int = 20, seed: int = 0,
                 rel_tol: float = 1e-6, raise_on_failure: bool = False) -> Verdict:
    """Max-inf dominance over seeded positive vectors and equality at ``phi1``."""
    grid = A.grid
    rng = np.random.default_rng(seed)
    d = grid.boundary_distance / np.max(grid.boundary_distance)
    vectors = [d, np.ones(A.size)]
    while len(vectors) < n_vectors:
        kind = len(vectors) % 3
        if kind == 0:
            vectors.append(rng.uniform(0.05, 1.0, A.size))
        elif kind == 1:
            vectors.append(d ** rng.uniform(0.5, 2.0) * rng.uniform(0.5, 1.5, A.size))
        else:
            vectors.append(np.asarray(e.phi1, dtype=float) * np.exp(0.3 * rng.standard_normal(A.size)))
    values = [minmax_quotient(A, u) for u in vectors[:n_vectors]]
    bound = e.lambda1 * (1.0 + rel_tol)
    at_phi = minmax_quotient(A, e.phi1)
    eq_tol = 10.0 * e.residual_inf
    metrics = {"max_quotient": float(max(values)), "lambda1": e.lambda1,
               "quotient_at_phi1": at_phi, "phi1_gap": abs(at_phi - e.lambda1),
               "n_vectors": len(values)}
    passed = max(values) <= bound and abs(at_phi - e.lambda1) <= eq_tol
    v = Verdict("minmax", passed, {"dominance_rel": rel_tol, "equality_abs": eq_tol}, metrics,
                seeds=[seed])
    return _finish(v, raise_on_failure)


def check_adjoint(A: DiscreteOperator, tol: float = 1e-10, rel_tol: float = 1e-8,
                  raise_on_failure: bool = False) -> Verdict:
    """Principal eigenvalues of ``A`` and its transpose must coincide."""
    e = principal_eig(A, tol=tol)
    et = principal_eig(A.transpose(), tol=tol)
    rel = abs(e.lambda1 - et.lambda1) / abs(e.lambda1)
    dist = float(np.max(np.abs(np.asarray(e.phi1, float) - np.asarray(et.phi1, float))))
    metrics = {"lambda1": e.lambda1, "lambda1_adjoint": et.lambda1, "relative_difference": rel,
               "eigenvector_sup_distance": dist, "symmetric": not A.has_drift}
    v = Verdict("adjoint", rel <= rel_tol, {"eigenvalue_rel": rel_tol}, metrics)
    return _finish(v, raise_on_failure)


def toeplitz_lambda1(c: float, grid: Grid, scheme: str = "central") -> float:
    """Exact smallest eigenvalue of the tridiagonal local + constant-drift matrix."""
    h, n = grid.h, grid.n
    if scheme == "central":
        sub, diag, sup = -1 / h**2 - c / (2 * h), 2 / h**2, -1 / h**2 + c / (2 * h)
    elif c >= 0:
        sub, diag, sup = -1 / h**2 - c / h, 2 / h**2 + c / h, -1 / h**2
    else:
        sub, diag, sup = -1 / h**2, 2 / h**2 - c / h, -1 / h**2 + c / h
    if sub * sup <= 0:
        raise ValueError("cell Peclet number too large: tridiagonal matrix is not sign-symmetric")
    return diag - 2.0 * math.sqrt(sub * sup) * math.cos(math.pi / (n + 1))


def drift_benchmark(c: float, grid: Grid, scheme: str = "central", tol: float = 1e-10,
                    raise_on_failure: bool = False) -> Verdict:
    """Local operator plus constant drift on an interval: ``lambda_1 = (pi/l)^2 + c^2/4``.

    The tolerance is grid dependent: the computed value must match the exact
    eigenvalue of the tridiagonal matrix to 1e-8 relative, and its distance to
    the continuum value may not exceed twice the discretization error of that
    exact discrete value.
    """
    if grid.dimension != 1:
        raise ValueError("drift benchmark is defined on intervals")
    a, b = grid.spec.bounds[0]
    ell = b - a
    A = assemble(grid, None, DriftField.constant(c), 1.0, scheme)
    e = principal_eig(A, tol=tol)
    exact = (math.pi / ell) ** 2 + c * c / 4
    discrete = toeplitz_lambda1(c, grid, scheme)
    disc_err = abs(discrete - exact)
    allowed = 2.0 * disc_err + 1e-9 * exact
    metrics = {"lambda1": e.lambda1, "continuum": exact, "discrete_exact": discrete,
               "relative_error": abs(e.lambda1 - exact) / exact}
    passed = (abs(e.lambda1 - discrete) <= 1e-8 * exact
              and abs(e.lambda1 - exact) <= allowed)
    v = Verdict("drift_benchmark", passed,
                {"vs_discrete_rel": 1e-8, "vs_continuum_abs": allowed}, metrics)
    return _finish(v, raise_on_failure)


# ---------------------------------------------------------------------------
# Barrier function of the Hopf lemma proof


@dataclass
class BarrierConfig:
    xbar: tuple[float, ...]
    r: float
    s: float
    q: DriftField
    alpha: float | None = None
    x0: tuple[float, ...] | None = None
    alpha_cap: float = 2.0 ** 16
    scheme: str = "central"

    def __post_init__(self):
        self.xbar = tuple(float(c) for c in np.atleast_1d(self.xbar))
        if self.x0 is not None:
            self.x0 = tuple(float(c) for c in np.atleast_1d(self.x0))
        if not self.r > 0:
            raise ValueError("r must be positive")
        if not 0.0 < self.s < 1.0:
            raise ValueError("s must lie in (0, 1)")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")


@dataclass
class BarrierReport:
    M_estimate: float
    analytic_M: float
    alpha_used: float
    max_Lv_on_K: float
    max_Lv_scaled: float
    passed: bool
    touching_points: list
    K_nodes: int
    normal_derivative: float
    normal_derivative_numeric: float
    normal_derivative_rel_error: float
    v_on_sphere_max_abs: float
    v_outside_max: float
    trace: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def touching_points(cfg: BarrierConfig, grid: Grid) -> list[np.ndarray]:
    """Boundary points where the ball ``B_r(xbar)`` touches the domain boundary."""
    xbar = np.asarray(cfg.xbar)
    if xbar.size != grid.dimension:
        raise ValueError("xbar dimension does not match the grid")
    pts = []
    for k, (a, b) in enumerate(grid.spec.bounds):
        lo, hi = xbar[k] - cfg.r, xbar[k] + cfg.r
        if lo < a - 1e-12 or hi > b + 1e-12:
            raise ValueError(f"ball B_r(xbar) leaves the domain along axis {k}")
        for face, end in ((a, lo), (b, hi)):
            if math.isclose(end, face, rel_tol=0.0, abs_tol=1e-12):
                p = xbar.copy()
                p[k] = face
                pts.append(p)
    if not pts:
        raise ValueError("ball B_r(xbar) does not touch the boundary")
    if cfg.x0 is not None:
        x0 = np.asarray(cfg.x0)
        pts = [p for p in pts if np.allclose(p, x0, atol=1e-12)]
        if not pts:
            raise ValueError(f"x0={cfg.x0} is not a touching point of B_r(xbar)")
    return pts


def _K(x, xbar):
    d = np.asarray(x) - xbar
    return np.sqrt(np.sum(d * d, axis=-1) + 1.0)


def barrier_v(x, cfg: BarrierConfig, alpha: float):
    """``v(x) = exp(-alpha K(x)) - exp(-alpha sqrt(1 + r^2))``; accepts complex input."""
    xbar = np.asarray(cfg.xbar)
    x = np.asarray(x)
    d = x - xbar
    K = np.sqrt(np.sum(d * d, axis=-1) + 1.0)
    return np.exp(-alpha * K) - math.exp(-alpha * math.sqrt(1.0 + cfg.r ** 2))


def _directional_frac(x, xbar, s, N, func, second, far_tail=None, scale=1.0):
    """``C_{N,s}/2 int (2F(x) - F(x+y) - F(x-y)) |y|^{-N-2s} dy`` for smooth ``F``.

    ``func(points)`` evaluates F, ``second(e)`` its second derivative along the
    unit direction ``e`` at ``x``. Radial integrals use a Taylor cell near 0.
    ``far_tail(e, Y)``, when given, replaces the quadrature on ``[Y, inf)``.
    ``scale`` is the length over which F varies; the Taylor cell is 1e-3 of it,
    small enough for the quartic remainder and large enough to avoid roundoff
    in the second difference.
    """
    C = kernel_constant(N, s)
    Fx = func(x[None, :])[0]
    dist = float(np.linalg.norm(x - xbar))

    def radial(e):
        e = np.asarray(e, dtype=float)
        delta = 1e-3 * scale
        near = -second(e) * delta ** (2 - 2 * s) / (2 - 2 * s)

        def g(rho):
            pts = np.stack([x + rho * e, x - rho * e])
            fp, fm = func(pts)
            return (2.0 * Fx - fp - fm) * rho ** (-1.0 - 2 * s)

        along = abs(float(np.dot(x - xbar, e)))
        Y = along + dist + 4.0
        brk = sorted({p for p in (along, dist, 1.0) if delta < p < Y})
        with warnings.catch_warnings():
            # roundoff near the requested tolerance is harmless here
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            mid, _ = integrate.quad(g, delta, Y, points=brk or None, limit=400,
                                    epsabs=0.0, epsrel=1e-11)
            if far_tail is None:
                far, _ = integrate.quad(g, Y, np.inf, limit=400, epsabs=1e-14, epsrel=1e-10)
            else:
                far = far_tail(e, Y)
        return near + mid + far

    if N == 1:
        return C * radial([1.0])
    # half circle of directions; the integrand is smooth and pi-periodic in theta
    th, tw = np.polynomial.legendre.leggauss(48)
    th = 0.5 * math.pi * (th + 1.0)
    tw = 0.5 * math.pi * tw
    total = sum(w * radial([math.cos(t), math.sin(t)]) for t, w in zip(th, tw))
    return C * total


def frac_barrier_scaled(x, cfg: BarrierConfig, alpha: float) -> float:
    """``exp(alpha) (-Delta)^s v(x)``, i.e. the fractional term on the scaled barrier."""
    xbar = np.asarray(cfg.xbar)
    x = np.asarray(x, dtype=float)
    N = x.size

    def w(pts):
        return np.exp(-alpha * (_K(pts, xbar) - 1.0))

    def second(e):
        d = x - xbar
        K = math.sqrt(float(d @ d) + 1.0)
        de = float(d @ e)
        return math.exp(-alpha * (K - 1.0)) * (alpha ** 2 * de * de / K ** 2 - alpha * (1.0 / K - de * de / K ** 3))

    return _directional_frac(x, xbar, cfg.s, N, w, second, scale=1.0 / (1.0 + alpha))


def frac_of_K(x, cfg: BarrierConfig) -> float:
    """``(-Delta)^s K(x)``; infinite for s <= 1/2 because K grows linearly."""
    if cfg.s <= 0.5:
        return -math.inf
    xbar = np.asarray(cfg.xbar)
    x = np.asarray(x, dtype=float)

    def second(e):
        d = x - xbar
        K = math.sqrt(float(d @ d) + 1.0)
        de = float(d @ e)
        return 1.0 / K - de * de / K ** 3

    s = cfg.s
    d = x - xbar
    Kx = math.sqrt(float(d @ d) + 1.0)

    def far_tail(e, Y):
        # 2K(x) - K(x+re) - K(x-re) = 2(K(x) - r) + (2r - K(x+re) - K(x-re)); the first part
        # integrates in closed form, the second is rewritten without cancellation
        de = float(d @ e)
        c = float(d @ d) + 1.0

        def rem(r):
            kp = math.sqrt(c + 2 * r * de + r * r)
            km = math.sqrt(c - 2 * r * de + r * r)
            return (-(c + 2 * r * de) / (r + kp) - (c - 2 * r * de) / (r + km)) * r ** (-1.0 - 2 * s)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(rem, Y, np.inf, limit=400, epsabs=1e-15, epsrel=1e-11)
        return 2 * Kx * Y ** (-2 * s) / (2 * s) - 2 * Y ** (1 - 2 * s) / (2 * s - 1) + val

    return _directional_frac(x, xbar, s, x.size, lambda p: _K(p, xbar), second, far_tail)


def analytic_M(cfg: BarrierConfig, grid: Grid) -> float:
    """The closed-form bound from the proof of the Hopf lemma (recorded, not asserted)."""
    N, s = grid.dimension, cfg.s
    corners = np.array(np.meshgrid(*grid.spec.bounds, indexing="ij")).reshape(N, -1).T
    D = float(max(np.max(np.linalg.norm(corners, axis=1)), np.linalg.norm(cfg.xbar)))
    omega = 2.0 if N == 1 else 2.0 * math.pi  # surface measure of the unit sphere
    C = kernel_constant(N, s)
    diam = grid.spec.diameter
    return C * (1 + (3 + D) * D) * omega / (2 - 2 * s) + 2 * omega * (diam ** 2 + 1) / (2 * s)


def _lattice_Lv_scaled(x, cfg: BarrierConfig, alpha: float, grid: Grid) -> float:
    """Discrete ``e^alpha L v`` at node ``x``: finite differences of the globally defined v."""
    h = grid.h
    N = x.size

    def vs(p):
        return np.exp(alpha) * barrier_v(p, cfg, alpha) if alpha < 700 else _v_scaled(p, cfg, alpha)

    c = vs(x[None, :])[0]
    q = cfg.q(x[None, :])[0]
    total = 0.0
    for k in range(N):
        e = np.zeros(N)
        e[k] = h
        fwd, back = vs(np.stack([x + e]))[0], vs(np.stack([x - e]))[0]
        total += (2.0 * c - fwd - back) / h ** 2
        if cfg.scheme == "central":
            total += q[k] * (fwd - back) / (2 * h)
        else:
            total += q[k] * ((c - back) if q[k] > 0 else (fwd - c)) / h
    return total + frac_barrier_scaled(x, cfg, alpha)


def _v_scaled(p, cfg, alpha):
    xbar = np.asarray(cfg.xbar)
    return np.exp(-alpha * (_K(p, xbar) - 1.0)) - math.exp(-alpha * (math.sqrt(1.0 + cfg.r ** 2) - 1.0))


def lens_nodes(cfg: BarrierConfig, grid: Grid) -> np.ndarray:
    """Indices of grid nodes in ``K = B_r(xbar) & B_{r/2}(x0)`` for the touching points."""
    xbar = np.asarray(cfg.xbar)
    nodes = grid.nodes
    in_ball = np.linalg.norm(nodes - xbar, axis=1) < cfg.r
    in_lens = np.zeros(len(nodes), dtype=bool)
    for x0 in touching_points(cfg, grid):
        in_lens |= np.linalg.norm(nodes - x0, axis=1) < cfg.r / 2
    return np.flatnonzero(in_ball & in_lens)


def normal_derivative(cfg: BarrierConfig, alpha: float, x0) -> tuple[float, float]:
    """Analytic ``d_nu v(x0) = -alpha r e^{-alpha K(x0)} / K(x0)`` and a complex-step value."""
    xbar = np.asarray(cfg.xbar)
    x0 = np.asarray(x0, dtype=float)
    nu = (x0 - xbar) / np.linalg.norm(x0 - xbar)
    K0 = float(_K(x0, xbar))
    analytic = -alpha * cfg.r * math.exp(-alpha * K0) / K0
    step = 1e-30
    numeric = float(np.imag(barrier_v(x0 + 1j * step * nu, cfg, alpha))) / step
    return analytic, numeric


def barrier_verify(cfg: BarrierConfig, grid: Grid, sample_points: int = 5) -> BarrierReport:
    """Evaluate the barrier ``v`` and the discrete ``L v`` on the lens ``K``.

    If ``cfg.alpha`` is unset, alpha doubles from 1 until ``max_K L v < 0`` or
    ``cfg.alpha_cap`` is passed. The fractional part of ``L v`` is computed by
    direct quadrature of the analytic ``v``; the local and drift parts use the
    lattice differences of ``v`` (defined on all of R^N, not zero-extended).
    """
    pts = touching_points(cfg, grid)
    idx = lens_nodes(cfg, grid)
    if idx.size == 0:
        raise ValueError("no grid nodes inside the lens K; refine the grid")
    xs = grid.nodes[idx]
    alphas = [cfg.alpha] if cfg.alpha is not None else []
    if not alphas:
        a = 1.0
        while a <= cfg.alpha_cap:
            alphas.append(a)
            a *= 2.0
    trace = []
    alpha_used, best = alphas[-1], math.inf
    for a in alphas:
        vals = np.array([_lattice_Lv_scaled(x, cfg, a, grid) for x in xs])
        m = float(np.max(vals))
        trace.append({"alpha": a, "max_Lv_scaled": m})
        alpha_used, best = a, m
        if m < 0.0:
            break
    passed = best < 0.0
    max_true = best * math.exp(-alpha_used)
    # M: sup of |(-Delta)^s K| over sampled lens nodes
    sample = xs[np.linspace(0, len(xs) - 1, min(sample_points, len(xs))).astype(int)]
    notes = []
    if cfg.s <= 0.5:
        M_est = math.inf
        notes.append("(-Delta)^s K diverges for s <= 1/2 since K grows linearly; M is unbounded")
    else:
        M_est = float(max(abs(frac_of_K(x, cfg)) for x in sample))
    x0 = pts[0]
    nd, nd_num = normal_derivative(cfg, alpha_used, x0)
    xbar = np.asarray(cfg.xbar)
    sphere = [xbar + cfg.r * np.eye(grid.dimension)[k] * sgn
              for k in range(grid.dimension) for sgn in (1, -1)]
    v_sphere = float(max(abs(barrier_v(p, cfg, alpha_used)) for p in sphere))
    outside = [xbar + (cfg.r + t) * np.eye(grid.dimension)[0] for t in (1e-3, 0.1, 1.0, 10.0)]
    v_out = float(max(barrier_v(p, cfg, alpha_used) for p in outside))
    return BarrierReport(
        M_estimate=M_est, analytic_M=analytic_M(cfg, grid), alpha_used=alpha_used,
        max_Lv_on_K=max_true, max_Lv_scaled=best, passed=passed,
        touching_points=[p.tolist() for p in pts], K_nodes=int(idx.size),
        normal_derivative=nd, normal_derivative_numeric=nd_num,
        normal_derivative_rel_error=abs(nd - nd_num) / abs(nd),
        v_on_sphere_max_abs=v_sphere, v_outside_max=v_out, trace=trace, notes=notes)
