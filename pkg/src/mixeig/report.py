"""Run manifest, plot descriptions and optional PNG rendering."""

from __future__ import annotations

import csv
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .tasks import _jsonable


def versions() -> dict:
    return {"python": sys.version.split()[0], "numpy": np.__version__, "scipy": scipy.__version__,
            "mixeig": __version__, "platform": platform.platform()}


def write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_manifest(out_dir: Path, *, config: dict, wall_time: float, verdicts: list[dict],
                   flags: list[str], results: dict, files: list[str], status: str,
                   error: str | None = None, threads: int = 1) -> Path:
    data = {
        "config": config, "versions": versions(), "wall_time_s": wall_time,
        "verdicts": verdicts, "hypothesis_flags": sorted(set(flags)), "results": results,
        "files": sorted(files), "status": status, "error": error, "threads": threads,
        "gating_passed": all(v["passed"] for v in verdicts if v.get("gating", True)),
    }
    return write_json(out_dir / "manifest.json", data)


def write_plot_description(out_dir: Path, plots: list[dict]) -> Path:
    return write_json(out_dir / "plots.json", {"plots": plots})


def _columns(path: Path) -> dict[str, np.ndarray]:
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float) if len(rows) > 1 else np.zeros((0, len(rows[0])))
    return {name: body[:, k] for k, name in enumerate(header)}


def render_plots(out_dir: Path, plots: list[dict]) -> list[str]:
    """Render each described plot to ``<stem>.png`` with the Agg backend."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for spec in plots:
        cols = _columns(out_dir / spec["file"])
        fig, ax = plt.subplots(figsize=(5.0, 3.6), dpi=120)
        if spec["kind"] == "heatmap":
            x, y, v = cols["x"], cols["y"], cols[spec["value"]]
            nx, ny = len(np.unique(x)), len(np.unique(y))
            im = ax.imshow(v.reshape(nx, ny).T, origin="lower", aspect="equal",
                           extent=(x.min(), x.max(), y.min(), y.max()))
            fig.colorbar(im, ax=ax, label=spec["value"])
        else:
            for name in spec["y"]:
                yv = cols[name]
                if spec["kind"] == "scatter":
                    ax.scatter(cols[spec["x"]], yv, s=12, label=name)
                else:
                    mask = yv > 0 if spec.get("yscale") == "log" else np.isfinite(yv)
                    ax.plot(cols[spec["x"]][mask], yv[mask], lw=1.2, label=name)
            ax.set_xscale(spec.get("xscale", "linear"))
            ax.set_yscale(spec.get("yscale", "linear"))
        ax.set_xlabel(spec.get("xlabel", ""))
        ax.set_ylabel(spec.get("ylabel", ""))
        ax.set_title(spec.get("title", ""), fontsize=10)
        fig.tight_layout()
        name = Path(spec["file"]).with_suffix(".png").name
        fig.savefig(out_dir / name)
        plt.close(fig)
        written.append(name)
    return written
