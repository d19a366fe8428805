"""One function per CLI task: compute, write data files, return verdicts."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import properties as props
from .config import RunConfig
from .convergence import converge, rows_to_csv
from .eigen import drop_principal, principal_eig, subdominant_eigs
from .expr import compile_expression
from .frac_kernel import FracParams
from .grid import build_grid
from .montecarlo import InsufficientStatistics, PathParams, simulate_survival
from .operator import assemble
from .solver import attainable_residual, continuation_sweep, solve

log = logging.getLogger(__name__)


@dataclass
class TaskOutput:
    results: dict = field(default_factory=dict)
    verdicts: list[props.Verdict] = field(default_factory=list)
    files: list[str] = field(default_factory=list)
    plots: list[dict] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)


def _assemble(cfg: RunConfig, grid, scheme: str | None = None, lam: float = 1.0):
    kw = {"local": cfg.local}
    if cfg.fractional:
        kw["frac_params"] = FracParams(cfg.s, cfg.tail_radius_factor, cfg.near_correction)
    return assemble(grid, cfg.s_effective, cfg.drift, lam, scheme or cfg.scheme, **kw)


def _check_keys(cfg: RunConfig, allowed: set[str]):
    from .config import ConfigError

    extra = set(cfg.params) - allowed
    if extra:
        raise ConfigError(f"{cfg.task}.{sorted(extra)[0]}", "unknown parameter")


def _param(cfg: RunConfig, key: str, default, kind=float):
    from .config import ConfigError

    val = cfg.params.get(key, default)
    name = f"{cfg.task}.{key}"
    if kind is float and (isinstance(val, bool) or not isinstance(val, (int, float))):
        raise ConfigError(name, f"expected a number, got {val!r}")
    if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
        raise ConfigError(name, f"expected an integer, got {val!r}")
    if kind is list and not isinstance(val, list):
        raise ConfigError(name, f"expected an array, got {val!r}")
    if kind is str and not isinstance(val, str):
        raise ConfigError(name, f"expected a string, got {val!r}")
    return float(val) if kind is float else val


def _source(cfg: RunConfig, grid, text: str) -> np.ndarray:
    from .config import ConfigError

    try:
        f = compile_expression(text, grid.dimension)
    except ValueError as exc:
        raise ConfigError(f"{cfg.task}.f", str(exc)) from None
    return f(grid.nodes)


def _vector_csv(path: Path, grid, columns: dict[str, np.ndarray]) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*["x", "y"][: grid.dimension], *columns])
        cols = list(columns.values())
        for i, p in enumerate(grid.nodes):
            w.writerow([*(repr(float(c)) for c in p), *(repr(float(c[i])) for c in cols)])
    return path


def _profile_plot(file: str, grid, y: str, title: str) -> dict:
    if grid.dimension == 1:
        return {"file": file, "kind": "line", "x": "x", "y": [y], "xlabel": "x", "ylabel": y,
                "xscale": "linear", "yscale": "linear", "title": title}
    return {"file": file, "kind": "heatmap", "x": "x", "y": ["y"], "value": y, "xlabel": "x",
            "ylabel": "y", "title": title}


def _peclet_guard(cfg: RunConfig, A, out: TaskOutput) -> str:
    """Scheme for property checks: upwind when the central cell-Peclet condition fails."""
    if A.drift_scheme == "central" and A.has_drift and A.cell_peclet >= 1.0:
        msg = f"cell Peclet number {A.cell_peclet:.3g} >= 1: property checks use upwind"
        log.warning(msg)
        out.flags.append(msg)
        return "upwind"
    return A.drift_scheme


def task_solve(cfg: RunConfig, out_dir: Path, threads: int) -> TaskOutput:
    _check_keys(cfg, {"f", "tol"})
    out = TaskOutput()
    grid = build_grid(cfg.domain)
    A = _assemble(cfg, grid)
    _peclet_guard(cfg, A, out)
    f = _source(cfg, grid, _param(cfg, "f", "1", str))
    tol = _param(cfg, "tol", 1e-12)
    rep = solve(A, f, tol)
    target = max(tol * (1 + float(np.max(np.abs(f)))), attainable_residual(A, rep.u))
    out.results = {"residual_inf": rep.residual_inf, "bound_ratio": rep.bound_ratio,
                   "refinement_steps": rep.refinement_steps, "min_u": float(np.min(rep.u)),
                   "max_u": float(np.max(rep.u))}
    out.verdicts.append(props.Verdict("solve_residual", rep.residual_inf <= target,
                                      {"residual_inf": target}, {"residual_inf": rep.residual_inf}))
    _vector_csv(out_dir / "u.csv", grid, {"f": f, "u": rep.u})
    out.files.append("u.csv")
    out.plots.append(_profile_plot("u.csv", grid, "u", "solution u of L u = f"))
    return out


def _eig(cfg: RunConfig, A, k_sub=0):
    tol = _param(cfg, "tol", 1e-10)
    max_iter = _param(cfg, "max_iter", 1000, int)
    return principal_eig(A, tol=tol, max_iter=max_iter, k_sub=k_sub)


def _eig_outputs(e, grid, out: TaskOutput, out_dir: Path, stem="phi1"):
    e.phi_to_csv(out_dir / f"{stem}.csv", grid)
    e.to_json(out_dir / "eigen.json")
    out.files += [f"{stem}.csv", "eigen.json"]
    out.plots.append(_profile_plot(f"{stem}.csv", grid, "phi1", "principal eigenfunction"))
    with (out_dir / "history.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "lambda", "residual_inf"])
        for i, (lam, r) in enumerate(e.history, 1):
            w.writerow([i, repr(lam), repr(r)])
    out.files.append("history.csv")
    out.plots.append({"file": "history.csv", "kind": "line", "x": "iteration", "y": ["residual_inf"],
                      "xlabel": "iteration", "ylabel": "residual (sup norm)", "xscale": "linear",
                      "yscale": "log", "title": "inverse iteration convergence"})


def _eig_verdicts(e, out: TaskOutput):
    out.verdicts.append(props.Verdict("eigen_residual", e.residual_inf <= e.tolerance,
                                      {"residual_inf": e.tolerance}, {"residual_inf": e.residual_inf,
                                                                      "iterations": e.iterations}))
    out.verdicts.append(props.Verdict("positivity", float(np.min(e.phi1)) > 0,
                                      {"min_phi1": 0.0}, {"min_phi1": float(np.min(e.phi1)),
                                                          "cone_epsilon": e.cone_epsilon}))


def _dominance(e, out: TaskOutput):
    if not e.sub_moduli:
        return
    bound = e.lambda1 - 1e-8 * e.lambda1
    out.verdicts.append(props.Verdict("dominance", min(e.sub_moduli) >= bound,
                                      {"modulus_min": bound},
                                      {"min_sub_modulus": min(e.sub_moduli), "spectral_gap": e.spectral_gap}))


def task_eig(cfg: RunConfig, out_dir: Path, threads: int) -> TaskOutput:
    _check_keys(cfg, {"tol", "max_iter", "k_sub"})
    out = TaskOutput()
    grid = build_grid(cfg.domain)
    A = _assemble(cfg, grid)
    _peclet_guard(cfg, A, out)
    e = _eig(cfg, A, _param(cfg, "k_sub", 6, int))
    hopf = props.check_hopf(e, grid)
    out.results = {"lambda1": e.lambda1, "residual_inf": e.residual_inf, "iterations": e.iterations,
                   "hopf_epsilon": hopf.metrics["epsilon"], "spectral_gap": e.spectral_gap,
                   "cone_epsilon": e.cone_epsilon}
    out.flags += e.flags
    _eig_verdicts(e, out)
    _dominance(e, out)
    out.verdicts.append(hopf)
    _eig_outputs(e, grid, out, out_dir)
    return out


def task_spectrum(cfg: RunConfig, out_dir: Path, threads: int) -> TaskOutput:
    _check_keys(cfg, {"tol", "max_iter", "k"})
    out = TaskOutput()
    grid = build_grid(cfg.domain)
    A = _assemble(cfg, grid)
    k = _param(cfg, "k", 6, int)
    e = _eig(cfg, A)
    eigs = subdominant_eigs(A, k)
    e.sub_eigenvalues = drop_principal(eigs, e.lambda1)
    e.sub_moduli = [abs(z) for z in e.sub_eigenvalues]
    with (out_dir / "spectrum.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "re", "im", "modulus", "argument"])
        for j, z in enumerate(eigs):
            w.writerow([j, repr(z.real), repr(z.imag), repr(abs(z)), repr(float(np.angle(z)))])
    out.files.append("spectrum.csv")
    out.plots.append({"file": "spectrum.csv", "kind": "scatter", "x": "re", "y": ["im"],
                      "xlabel": "Re lambda", "ylabel": "Im lambda", "title": "eigenvalues of smallest modulus"})
    out.results = {"lambda1": e.lambda1, "eigenvalues": [[z.real, z.imag] for z in eigs],
                   "spectral_gap": e.spectral_gap}
    out.flags += e.flags
    _eig_verdicts(e, out)
    _dominance(e, out)
    return out


def task_minmax(cfg: RunConfig, out_dir: Path, threads: int) -> TaskOutput:
    _check_keys(cfg, {"tol", "max_iter", "n_vectors"})
    out = TaskOutput()
    grid = build_grid(cfg.domain)
    A = _assemble(cfg, grid)
    e = _eig(cfg, A)
    v = props.check_minmax(A, e, _param(cfg, "n_vectors", 20, int), cfg.seed)
    out.verdicts.append(v)
    out.results = dict(v.metrics)
    out.flags += e.flags
    return out


def task_verify(cfg: RunConfig, out_dir: Path, threads: int) -> TaskOutput:
    _check_keys(cfg, {"tol", "max_iter", "trials", "n_vectors"})
    out = TaskOutput()
    grid = build_grid(cfg.domain)
    A = _assemble(cfg, grid)
    scheme = _peclet_guard(cfg, A, out)
    trials = _param(cfg, "trials", 100, int)
    # the discrete maximum principle is theorem-backed on the upwind assembly only
    Aup = A if A.drift_scheme == "upwind" or not A.has_drift else _assemble(cfg, grid, "upwind")
    out.verdicts.append(props.check_max_principle(Aup, trials, cfg.seed, threads))
    if Aup is not A:
        info = props.check_max_principle(A, trials, cfg.seed, threads)
        info.name = "max_principle_central"
        out.verdicts.append(info)
    B = A if scheme == A.drift_scheme else Aup
    e = _eig(cfg, B)
    out.flags += e.flags
    _eig_verdicts(e, out)
    out.verdicts.append(props.check_hopf(e, grid))
    out.verdicts.append(props.check_minmax(B, e, _param(cfg, "n_vectors", 20, int), cfg.seed))
    out.verdicts.append(props.check_adjoint(B, tol=_param(cfg, "tol", 1e-10)))
    out.results = {"lambda1": e.lambda1, "passed": all(v.passed for v in out.verdicts if v.gating)}
    return out


def task_barrier(cfg: RunConfig, out_dir: Path, threads: int) -> TaskOutput:
    from .config import ConfigError

    _check_keys(cfg, {"xbar", "r", "alpha", "x0", "alpha_cap"})
    out = TaskOutput()
    grid = build_grid(cfg.domain)
    if "xbar" not in cfg.params or "r" not in cfg.params:
        raise ConfigError("barrier.xbar" if "xbar" not in cfg.params else "barrier.r",
                          "missing required field")
    alpha = cfg.params.get("alpha")
    try:
        bc = props.BarrierConfig(xbar=cfg.params["xbar"], r=_param(cfg, "r", 0.0), s=cfg.s,
                                 q=cfg.drift, alpha=None if alpha is None else float(alpha),
                                 x0=cfg.params.get("x0"), alpha_cap=_param(cfg, "alpha_cap", 2.0 ** 16),
                                 scheme=cfg.scheme)
        rep = props.barrier_verify(bc, grid)
    except ValueError as exc:
        raise ConfigError("barrier", str(exc)) from None
    data = rep.to_dict()
    (out_dir / "barrier.json").write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True),
                                          encoding="utf-8")
    with (out_dir / "barrier_trace.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "max_Lv_scaled"])
        for row in rep.trace:
            w.writerow([repr(row["alpha"]), repr(row["max_Lv_scaled"])])
    out.files += ["barrier.json", "barrier_trace.csv"]
    out.plots.append({"file": "barrier_trace.csv", "kind": "line", "x": "alpha", "y": ["max_Lv_scaled"],
                      "xlabel": "alpha", "ylabel": "max over K of exp(alpha) L v", "xscale": "log",
                      "yscale": "linear", "title": "barrier alpha search"})
    out.verdicts.append(props.Verdict("barrier_sign", rep.passed, {"max_Lv_on_K": 0.0},
                                      {"alpha_used": rep.alpha_used, "max_Lv_on_K": rep.max_Lv_on_K,
                                       "max_Lv_scaled": rep.max_Lv_scaled,
                                       "trace": rep.trace}))
    out.verdicts.append(props.Verdict(
        "barrier_normal_derivative",
        rep.normal_derivative < 0 and rep.normal_derivative_rel_error <= 1e-8,
        {"relative_error": 1e-8},
        {"analytic": rep.normal_derivative, "numeric": rep.normal_derivative_numeric,
         "relative_error": rep.normal_derivative_rel_error}))
    out.results = {"alpha_used": rep.alpha_used, "M_estimate": rep.M_estimate,
                   "analytic_M": rep.analytic_M, "pass": rep.passed}
    out.flags += rep.notes
    return out


def task_mc(cfg: RunConfig, out_dir: Path, threads: int) -> TaskOutput:
    from .config import ConfigError

    _check_keys(cfg, {"dt", "n_paths", "horizon", "compare_eigen", "rel_tol"})
    out = TaskOutput()
    try:
        p = PathParams(_param(cfg, "dt", 1e-4), _param(cfg, "n_paths", 100_000, int),
                       _param(cfg, "horizon", 3.0), cfg.seed)
    except ValueError as exc:
        raise ConfigError("mc", str(exc)) from None
    if not cfg.local:
        raise ConfigError("operator.local", "the path simulation always includes the Brownian part")
    try:
        curve = simulate_survival(cfg.domain, cfg.s_effective, cfg.drift, p, threads)
        ok = True
    except InsufficientStatistics as exc:
        curve, ok = exc.curve, False
    curve.to_csv(out_dir / "survival.csv")
    curve.to_json(out_dir / "survival_fit.json")
    out.files += ["survival.csv", "survival_fit.json"]
    out.plots.append({"file": "survival.csv", "kind": "line", "x": "t", "y": ["fraction"],
                      "xlabel": "t", "ylabel": "surviving fraction", "xscale": "linear",
                      "yscale": "log", "title": "survival of killed paths"})
    out.verdicts.append(props.Verdict("mc_fit", ok, {"min_window_survivors": 50}, curve.summary(),
                                      seeds=[cfg.seed]))
    out.results = curve.summary()
    if cfg.params.get("compare_eigen", False) and ok:
        grid = build_grid(cfg.domain)
        e = principal_eig(_assemble(cfg, grid))
        rel = abs(curve.lambda_hat - e.lambda1) / e.lambda1
        rel_tol = _param(cfg, "rel_tol", 0.15)
        out.verdicts.append(props.Verdict("mc_vs_eigen", rel <= rel_tol, {"relative": rel_tol},
                                          {"lambda_hat": curve.lambda_hat, "lambda1": e.lambda1,
                                           "relative_difference": rel}))
        out.results["lambda1_eigen"] = e.lambda1
    return out


def task_converge(cfg: RunConfig, out_dir: Path, threads: int) -> TaskOutput:
    _check_keys(cfg, {"levels", "tol", "expected_order", "order_tol", "min_order"})
    out = TaskOutput()
    levels = _param(cfg, "levels", [100, 200, 400, 800], list)
    kw = {"local": cfg.local}
    if cfg.fractional:
        kw["frac_params"] = FracParams(cfg.s, cfg.tail_radius_factor, cfg.near_correction)
    rows = converge(cfg.domain, levels, cfg.s_effective, cfg.drift, cfg.scheme,
                    _param(cfg, "tol", 1e-10), **kw)
    rows_to_csv(rows, out_dir / "converge.csv")
    out.files.append("converge.csv")
    out.plots.append({"file": "converge.csv", "kind": "line", "x": "h", "y": ["lambda1"],
                      "xlabel": "h", "ylabel": "lambda_1(h)", "xscale": "log", "yscale": "linear",
                      "title": "grid convergence"})
    orders = [r.order for r in rows if not math.isnan(r.order)]
    out.results = {"rows": [vars(r) for r in rows], "orders": [r.order for r in rows[2:]]}
    if "expected_order" in cfg.params:
        p0, dp = _param(cfg, "expected_order", 2.0), _param(cfg, "order_tol", 0.2)
        ok = len(orders) == len(rows) - 2 and all(abs(p - p0) <= dp for p in orders)
        out.verdicts.append(props.Verdict("observed_order", ok, {"expected": p0, "abs": dp},
                                          {"orders": [r.order for r in rows[2:]]}))
    if "min_order" in cfg.params:
        pmin = _param(cfg, "min_order", 1.0)
        ok = len(orders) == len(rows) - 2 and all(p >= pmin for p in orders)
        out.verdicts.append(props.Verdict("min_order", ok, {"min": pmin},
                                          {"orders": [r.order for r in rows[2:]]}, gating=False))
    return out


def task_sweep(cfg: RunConfig, out_dir: Path, threads: int) -> TaskOutput:
    _check_keys(cfg, {"lambdas", "f", "tol", "threshold"})
    out = TaskOutput()
    grid = build_grid(cfg.domain)
    f = _source(cfg, grid, _param(cfg, "f", "1", str))
    lams = _param(cfg, "lambdas", [0.0, 0.25, 0.5, 0.75, 1.0], list)
    kw = {"local": cfg.local}
    if cfg.fractional:
        kw["frac_params"] = FracParams(cfg.s, cfg.tail_radius_factor, cfg.near_correction)
    threshold = _param(cfg, "threshold", 100.0)
    res = continuation_sweep(grid, cfg.s_effective, cfg.drift, f, lams, cfg.scheme,
                             _param(cfg, "tol", 1e-12), threshold, **kw)
    res.to_csv(out_dir / "sweep.csv")
    out.files.append("sweep.csv")
    out.plots.append({"file": "sweep.csv", "kind": "line", "x": "lambda", "y": ["bound_ratio"],
                      "xlabel": "homotopy parameter", "ylabel": "|u|/|f| (sup norms)",
                      "xscale": "linear", "yscale": "linear", "title": "method of continuity"})
    out.verdicts.append(props.Verdict("sweep_spread", not res.flagged, {"spread_max": threshold},
                                      {"spread": res.spread}))
    out.results = {"spread": res.spread, "rows": [vars(r) for r in res.rows]}
    return out


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return _jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


TASK_FUNCS = {
    "solve": task_solve, "eig": task_eig, "spectrum": task_spectrum, "minmax": task_minmax,
    "verify": task_verify, "barrier": task_barrier, "mc": task_mc, "converge": task_converge,
    "sweep": task_sweep,
}
