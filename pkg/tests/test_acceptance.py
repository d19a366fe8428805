"""Acceptance criteria 1-15, one PASS/FAIL line each (see the terminal summary)."""

import math
import time

import numpy as np
import pytest
from scipy import integrate

from mixeig import properties as P
from mixeig.convergence import converge
from mixeig.eigen import minmax_quotient, principal_eig, rayleigh_lambda1, subdominant_eigs
from mixeig.frac_kernel import FracParams, apply_frac, build_weights, kernel_constant
from mixeig.grid import DomainSpec, build_grid
from mixeig.montecarlo import PathParams, simulate_survival
from mixeig.operator import DriftField, assemble
from mixeig.solver import continuation_sweep

S_CASES = (0.2, 0.35, 0.5)
Q_CASES = {"0": DriftField.zero(), "1": DriftField.constant(1.0),
           "sin(2*pi*x)": DriftField.from_expression("sin(2*pi*x)")}


def unit(n):
    return build_grid(DomainSpec.interval(0, 1, n))


def bump(x):
    return np.clip(1 - x ** 2, 0, None) ** 2


@pytest.fixture(scope="module")
def cases():
    """The nine (s, q) eigenproblems on (0, 1) with n = 400."""
    t0 = time.perf_counter()
    g = unit(400)
    out = []
    for s in S_CASES:
        for name, q in Q_CASES.items():
            A = assemble(g, s, q)
            out.append((s, name, A, principal_eig(A, tol=1e-10, k_sub=6)))
    return g, out, time.perf_counter() - t0


def test_c01_constant(report_line):
    a = kernel_constant(1, 0.5)
    b = kernel_constant(1, 0.25)
    ea = abs(a - 1 / math.pi) / (1 / math.pi)
    eb = abs(b - math.sqrt(2) / (4 * math.sqrt(math.pi))) / (math.sqrt(2) / (4 * math.sqrt(math.pi)))
    ok = ea < 5e-11 and eb < 5e-11
    report_line(1, ok, f"rel err C(1,1/2)={ea:.1e}, C(1,1/4)={eb:.1e} (10 digits)")
    assert ok


def test_c02_operator_limits(report_line):
    t0 = time.perf_counter()
    g = build_grid(DomainSpec.interval(-1, 1, 400))
    x = g.nodes[:, 0]
    u = bump(x)
    hi = apply_frac(u, g, build_weights(g, FracParams(0.999)))
    lap = 4 - 12 * x ** 2
    third = np.abs(x) <= 1 / 3
    e_hi = np.max(np.abs(hi - lap)[third]) / np.max(np.abs(lap[third]))
    lo = apply_frac(u, g, build_weights(g, FracParams(0.001)))
    c = np.argmin(np.abs(x))
    e_lo = abs(lo[c] - u[c]) / abs(u[c])
    dt = time.perf_counter() - t0
    ok = e_hi <= 0.05 and e_lo <= 0.05 and dt < 10
    report_line(2, ok, f"s=0.999 rel sup err {e_hi:.2e}; s=0.001 center rel err {e_lo:.2e} (<=5%); {dt:.1f}s")
    assert ok


def test_c03_quadrature_oracle(report_line):
    t0 = time.perf_counter()
    g = build_grid(DomainSpec.interval(-1, 1, 400))
    x = g.nodes[:, 0]
    c = int(np.argmin(np.abs(x)))
    errs = []
    for s in S_CASES:
        Lu = apply_frac(bump(x), g, build_weights(g, FracParams(s)))[c]
        # C int_0^inf (2u(0) - u(y) - u(-y)) y^(-1-2s) dy for the even bump centered at x_c
        x0 = x[c]

        def f(y):
            return (2 * bump(x0) - bump(x0 + y) - bump(x0 - y)) * y ** (-1 - 2 * s)

        pts = sorted({1 - x0, 1 + x0})
        val = integrate.quad(f, 0, pts[0], limit=200, epsrel=1e-12)[0]
        val += integrate.quad(f, pts[0], pts[1], limit=200, epsrel=1e-12)[0]
        val += integrate.quad(f, pts[1], np.inf, limit=200, epsrel=1e-12)[0]
        ref = kernel_constant(1, s) * val
        errs.append(abs(Lu - ref) / abs(ref))
    dt = time.perf_counter() - t0
    ok = max(errs) <= 1e-3 and dt < 30
    report_line(3, ok, "rel err " + ", ".join(f"s={s}:{e:.1e}" for s, e in zip(S_CASES, errs))
                + f" (<=1e-3); {dt:.1f}s")
    assert ok


def test_c04_local_benchmark(report_line):
    t0 = time.perf_counter()
    g = unit(800)
    l0 = principal_eig(assemble(g, None)).lambda1
    l2 = principal_eig(assemble(g, None, DriftField.constant(2.0))).lambda1
    e0 = abs(l0 - math.pi ** 2) / math.pi ** 2
    e2 = abs(l2 - math.pi ** 2 - 1) / (math.pi ** 2 + 1)
    dt = time.perf_counter() - t0
    ok = e0 <= 1e-3 and e2 <= 2e-3 and dt < 10
    report_line(4, ok, f"q=0 rel err {e0:.1e} (<=0.1%), q=2 rel err {e2:.1e} (<=0.2%); {dt:.1f}s")
    assert ok


def test_c05_krein_rutman(cases, report_line):
    g, out, dt = cases
    worst_res = max(e.residual_inf for *_, e in out)
    min_phi = min(float(np.min(e.phi1)) for *_, e in out)
    min_gap = min(e.spectral_gap for *_, e in out)
    ok = worst_res <= 1e-10 and min_phi > 0 and min_gap > 0 and dt < 120
    report_line(5, ok, f"9 cases: max residual {worst_res:.1e}, min phi1 {min_phi:.2e}, "
                       f"min gap {min_gap:.3g}; {dt:.1f}s")
    assert ok


def test_c06_dominance(cases, report_line):
    t0 = time.perf_counter()
    g, out, _ = cases
    worst = math.inf
    for s, name, A, e in out:
        ev = subdominant_eigs(A, 6)
        worst = min(worst, min(abs(z) for z in ev) / e.lambda1 - 1)
    dt = time.perf_counter() - t0
    ok = worst >= -1e-8 and dt < 120
    report_line(6, ok, f"min |lambda|/lambda1 - 1 over k=6 spectra = {worst:.1e} (>= -1e-8); {dt:.1f}s")
    assert ok


def test_c07_minmax(cases, report_line):
    t0 = time.perf_counter()
    g, out, _ = cases
    ok = True
    worst_excess, worst_fix = -math.inf, 0.0
    for k, (s, name, A, e) in enumerate(out):
        v = P.check_minmax(A, e, 20, seed=k)
        ok &= v.passed
        worst_excess = max(worst_excess, v.metrics["max_quotient"] / e.lambda1 - 1)
        q = minmax_quotient(A, e.phi1)
        worst_fix = max(worst_fix, abs(q - e.lambda1) / max(e.residual_inf, 1e-300))
    dt = time.perf_counter() - t0
    ok = ok and worst_excess <= 1e-6 and worst_fix <= 10 and dt < 60
    report_line(7, ok, f"max quotient/lambda1 - 1 = {worst_excess:.1e} (<=1e-6); "
                       f"|q(phi1)-lambda1|/residual <= {worst_fix:.2f} (<=10); {dt:.1f}s")
    assert ok


def test_c08_max_principle(report_line):
    t0 = time.perf_counter()
    A = assemble(unit(200), 0.3, DriftField.constant(3.0), 1.0, "upwind")
    v = P.check_max_principle(A, 100, seed=2024)
    dt = time.perf_counter() - t0
    ok = v.passed and v.gating and dt < 60
    report_line(8, ok, f"100 trials, failed {v.metrics['failed_trials']}, min interior u "
                       f"{v.metrics['min_u_over_trials']:.2e}, f=0 max|u| {v.metrics['zero_source_max_abs_u']:.0e}; {dt:.1f}s")
    assert ok


def test_c09_hopf(cases, report_line):
    t0 = time.perf_counter()
    g, out, _ = cases
    eps = min(P.check_hopf(e, g).metrics["epsilon"] for *_, e in out)
    g8 = unit(800)
    v = P.check_hopf(principal_eig(assemble(g8, None)), g8)
    qerr = max(abs(v.metrics[k] - math.pi) / math.pi for k in ("left_quotient", "right_quotient"))
    dt = time.perf_counter() - t0
    ok = eps > 0 and qerr <= 0.02 and dt < 30
    report_line(9, ok, f"min boundary quotient {eps:.3g} (>0); local quotient vs pi rel err {qerr:.1e} "
                       f"(<=2%); {dt:.1f}s")
    assert ok


def test_c10_barrier(report_line):
    t0 = time.perf_counter()
    g = unit(200)
    parts, ok = [], True
    for s in (0.3, 0.7):
        rep = P.barrier_verify(P.BarrierConfig(xbar=0.5, r=0.5, s=s, q=DriftField.constant(1.0)), g)
        K0 = math.sqrt(1 + 0.25)
        formula = -rep.alpha_used * 0.5 * math.exp(-rep.alpha_used * K0) / K0
        rel = abs(rep.normal_derivative - formula) / abs(formula)
        ok &= (rep.passed and rep.alpha_used <= 2 ** 16 and rep.max_Lv_on_K < 0
               and rep.normal_derivative < 0 and rel <= 1e-8 and rep.normal_derivative_rel_error <= 1e-8)
        parts.append(f"s={s}: alpha={rep.alpha_used:g}, max_K Lv={rep.max_Lv_on_K:.2e}, "
                     f"d_nu v rel err {max(rel, rep.normal_derivative_rel_error):.0e}")
    dt = time.perf_counter() - t0
    ok = ok and dt < 60
    report_line(10, ok, "; ".join(parts) + f"; {dt:.1f}s")
    assert ok


def test_c11_continuation(report_line):
    t0 = time.perf_counter()
    g = unit(200)
    res = continuation_sweep(g, 0.25, DriftField.constant(5.0), np.ones(g.interior_count),
                             [0, 0.25, 0.5, 0.75, 1.0])
    dt = time.perf_counter() - t0
    ok = len(res.rows) == 5 and res.spread < 100 and not res.flagged and dt < 30
    report_line(11, ok, f"5 solves nonsingular, bound_ratio spread {res.spread:.3f} (<100); {dt:.1f}s")
    assert ok


def test_c12_rayleigh(report_line):
    t0 = time.perf_counter()
    g = unit(400)
    errs = []
    for s in (0.2, 0.5):
        r = rayleigh_lambda1(g, s)
        p = principal_eig(assemble(g, s)).lambda1
        errs.append(abs(r - p) / p)
    dt = time.perf_counter() - t0
    ok = max(errs) <= 1e-8 and dt < 30
    report_line(12, ok, f"rel diff s=0.2:{errs[0]:.1e}, s=0.5:{errs[1]:.1e} (<=1e-8); {dt:.1f}s")
    assert ok


def test_c13_adjoint(cases, report_line):
    t0 = time.perf_counter()
    g, out, _ = cases
    worst_rel, min_dist = 0.0, math.inf
    ok = True
    for s, name, A, e in out:
        v = P.check_adjoint(A)
        worst_rel = max(worst_rel, v.metrics["relative_difference"])
        ok &= v.passed
        if name != "0":
            min_dist = min(min_dist, v.metrics["eigenvector_sup_distance"])
    dt = time.perf_counter() - t0
    ok = ok and worst_rel <= 1e-8 and min_dist > 1e-3 and dt < 60
    report_line(13, ok, f"max rel lambda diff {worst_rel:.1e} (<=1e-8); min eigvec distance with drift "
                        f"{min_dist:.3g} (>1e-3); {dt:.1f}s")
    assert ok


@pytest.mark.slow
def test_c14_monte_carlo(report_line):
    t0 = time.perf_counter()
    dom = DomainSpec.interval(-1, 1, 400)
    g = build_grid(dom)
    mixed = simulate_survival(dom, 0.5, DriftField.zero(), PathParams(1e-4, 100_000, 1.5, seed=14), threads=4)
    lam_mixed = principal_eig(assemble(g, 0.5)).lambda1
    brown = simulate_survival(dom, None, DriftField.zero(), PathParams(1e-4, 100_000, 2.0, seed=15), threads=4)
    lam_local = principal_eig(assemble(g, None)).lambda1
    e1 = abs(mixed.lambda_hat - lam_mixed) / lam_mixed
    e2 = abs(brown.lambda_hat - lam_local) / lam_local
    dt = time.perf_counter() - t0
    ok = e1 <= 0.15 and e2 <= 0.10 and dt < 300
    report_line(14, ok, f"s=0.5: {mixed.lambda_hat:.4f}+-{mixed.ci_half_width:.3f} vs {lam_mixed:.4f} "
                        f"(rel {e1:.3f} <=0.15); Brownian: {brown.lambda_hat:.4f} vs {lam_local:.4f} "
                        f"(rel {e2:.3f} <=0.10); {dt:.0f}s")
    assert ok


def test_c15_convergence(report_line):
    t0 = time.perf_counter()
    levels = [100, 200, 400, 800]
    local = converge(DomainSpec.interval(0, 1, 10), levels, None)
    frac = converge(DomainSpec.interval(0, 1, 10), levels, 0.25)
    p_local = local[-1].order
    p_frac = [r.order for r in frac[2:]]
    info_met = all(np.isfinite(p) and p >= 1.0 for p in p_frac)
    dt = time.perf_counter() - t0
    ok = abs(p_local - 2.0) <= 0.2 and dt < 180
    lams = ", ".join(f"{r.lambda1:.7f}" for r in frac)
    report_line(15, ok, f"local order {p_local:.3f} (2+-0.2, gating); s=0.25 orders "
                        f"{[round(p, 3) for p in p_frac]} informational, "
                        f"{'met' if info_met else 'not met: lambda1 non-monotone ' + lams}; {dt:.1f}s")
    assert ok
