"""TOML run configuration: parsing and validation with field-named errors."""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .grid import DomainSpec
from .operator import SCHEMES, DriftField

TASKS = ("solve", "eig", "spectrum", "minmax", "verify", "barrier", "mc", "converge", "sweep")
DRIFT_KINDS = ("zero", "constant", "expression", "table")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key (dotted path)."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    task: str
    domain: DomainSpec
    s: float
    drift: DriftField
    scheme: str = "central"
    fractional: bool = True
    local: bool = True
    tail_radius_factor: float = 2.0
    near_correction: str = "taylor2"
    output_dir: Path = Path("out")
    seed: int = 0
    params: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)
    source: Path | None = None

    @property
    def s_effective(self) -> float | None:
        """``s`` if the fractional term is enabled, else None."""
        return self.s if self.fractional else None

    def echo(self) -> dict:
        return {"raw": self.raw, "task": self.task, "seed": self.seed,
                "output_dir": str(self.output_dir), "source": str(self.source) if self.source else None}


def _get(tbl: dict, key: str, path: str, kind, default=..., required=False):
    full = f"{path}.{key}" if path else key
    if key not in tbl:
        if required or default is ...:
            raise ConfigError(full, "missing required field")
        return default
    val = tbl[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise ConfigError(full, f"expected a finite number, got {val!r}")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(full, f"expected an integer, got {val!r}")
        return val
    if kind is bool:
        if not isinstance(val, bool):
            raise ConfigError(full, f"expected true/false, got {val!r}")
        return val
    if kind is str:
        if not isinstance(val, str):
            raise ConfigError(full, f"expected a string, got {val!r}")
        return val
    if kind is list:
        if not isinstance(val, list):
            raise ConfigError(full, f"expected an array, got {val!r}")
        return val
    if kind is dict:
        if not isinstance(val, dict):
            raise ConfigError(full, f"expected a table, got {val!r}")
        return val
    return val


def _domain(tbl: dict) -> DomainSpec:
    dim = _get(tbl, "dimension", "domain", int, 1)
    n = _get(tbl, "n", "domain", int, required=True)
    bounds = _get(tbl, "bounds", "domain", list, required=True)
    if dim == 1 and bounds and not isinstance(bounds[0], list):
        bounds = [bounds]
    try:
        pairs = [(float(a), float(b)) for a, b in bounds]
    except (TypeError, ValueError):
        raise ConfigError("domain.bounds", "expected [a, b] per axis") from None
    try:
        return DomainSpec(dim, tuple(pairs), n)
    except ValueError as exc:
        raise ConfigError("domain", str(exc)) from None


def _read_table(path: Path, dimension: int) -> DriftField:
    """Drift samples from CSV: ``x,q`` in 1D, ``x,y,qx,qy`` on a full tensor grid in 2D."""
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    if dimension == 1:
        if len(header) != 2:
            raise ConfigError("drift.file", "1D table needs columns x,q")
        order = np.argsort(body[:, 0])
        return DriftField.from_table([body[order, 0]], body[order, 1], 1)
    if len(header) != 4:
        raise ConfigError("drift.file", "2D table needs columns x,y,qx,qy")
    xs, ys = np.unique(body[:, 0]), np.unique(body[:, 1])
    if len(xs) * len(ys) != len(body):
        raise ConfigError("drift.file", "2D table must cover a full tensor grid")
    body = body[np.lexsort((body[:, 1], body[:, 0]))]
    vals = body[:, 2:].reshape(len(xs), len(ys), 2)
    return DriftField.from_table([xs, ys], vals, 2)


def _drift(tbl: dict, dimension: int, base: Path) -> DriftField:
    kind = _get(tbl, "kind", "drift", str, "zero")
    if kind not in DRIFT_KINDS:
        raise ConfigError("drift.kind", f"must be one of {DRIFT_KINDS}, got {kind!r}")
    if kind == "zero":
        return DriftField.zero(dimension)
    if kind == "constant":
        c = tbl.get("c")
        if c is None:
            raise ConfigError("drift.c", "missing required field")
        comps = c if isinstance(c, list) else [c]
        if len(comps) != dimension or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                                 for v in comps):
            raise ConfigError("drift.c", f"expected {dimension} number(s)")
        return DriftField.constant(comps if dimension > 1 else comps[0], dimension)
    if kind == "expression":
        e = tbl.get("expr")
        if e is None:
            raise ConfigError("drift.expr", "missing required field")
        exprs = e if isinstance(e, list) else [e]
        if len(exprs) != dimension:
            raise ConfigError("drift.expr", f"expected {dimension} expression(s)")
        try:
            return DriftField.from_expression(exprs, dimension)
        except ValueError as exc:
            raise ConfigError("drift.expr", str(exc)) from None
    f = Path(_get(tbl, "file", "drift", str, required=True))
    f = f if f.is_absolute() else base / f
    if not f.is_file():
        raise ConfigError("drift.file", f"file not found: {f}")
    return _read_table(f, dimension)


def parse_config(data: dict, base: Path = Path("."), task: str | None = None) -> RunConfig:
    """Validate an already-decoded TOML table."""
    cfg_task = data.get("task")
    if cfg_task is not None and task is not None and cfg_task != task:
        raise ConfigError("task", f"config declares {cfg_task!r} but {task!r} was requested")
    task = task or cfg_task
    if task is None:
        raise ConfigError("task", "missing required field")
    if task not in TASKS:
        raise ConfigError("task", f"must be one of {TASKS}, got {task!r}")
    domain = _domain(_get(data, "domain", "", dict, required=True))
    s = _get(data, "s", "", float, required=True)
    if not 0.0 < s < 1.0:
        raise ConfigError("s", f"must lie in (0, 1), got {s}")
    scheme = _get(data, "scheme", "", str, "central")
    if scheme not in SCHEMES:
        raise ConfigError("scheme", f"must be one of {SCHEMES}, got {scheme!r}")
    drift = _drift(_get(data, "drift", "", dict, {}), domain.dimension, base)
    op = _get(data, "operator", "", dict, {})
    fractional = _get(op, "fractional", "operator", bool, True)
    local = _get(op, "local", "operator", bool, True)
    if not fractional and not local:
        raise ConfigError("operator", "at least one of local/fractional must be enabled")
    factor = _get(op, "tail_radius_factor", "operator", float, 2.0)
    near = _get(op, "near_correction", "operator", str, "taylor2")
    if near not in ("taylor2", "none"):
        raise ConfigError("operator.near_correction", "must be 'taylor2' or 'none'")
    seed = _get(data, "seed", "", int, 0)
    if seed < 0:
        raise ConfigError("seed", "must be nonnegative")
    out = Path(_get(data, "output_dir", "", str, "out"))
    params = _get(data, task, "", dict, {})
    return RunConfig(task, domain, s, drift, scheme, fractional, local, factor, near,
                     out if out.is_absolute() else base / out, seed, dict(params), data)


def load_config(path, task: str | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"parse error: {exc}") from None
    cfg = parse_config(data, path.parent, task)
    cfg.source = path
    return cfg
