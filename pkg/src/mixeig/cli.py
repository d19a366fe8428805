"""Command line entry point: ``mixeig <task> --config run.toml``.

Exit status: 0 when every gating verdict passes, 1 when one fails,
2 for configuration errors, 3 when the task itself raised.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
import traceback
from pathlib import Path

from .config import TASKS, ConfigError, load_config
from .grid import build_grid
from .report import render_plots, write_manifest, write_plot_description
from .tasks import TASK_FUNCS, _assemble

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ERROR = 0, 1, 2, 3

log = logging.getLogger("mixeig")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="TOML run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="master seed (overrides seed)")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads; changes speed, never results")
    common.add_argument("--render", action="store_true",
                        help="also render the described plots to PNG (needs matplotlib)")
    common.add_argument("--dump-matrix", action="store_true",
                        help="write the assembled matrix as 'row col value' text (debug)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(
        prog="mixeig",
        description="Principal eigenvalue experiments for -Delta + (-Delta)^s + q . grad")
    sub = parser.add_subparsers(dest="task", required=True, metavar="TASK")
    for name in TASKS:
        sub.add_parser(name, parents=[common], help=f"run the {name} task")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.task)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        if args.seed < 0:
            print("config error: seed: must be nonnegative", file=sys.stderr)
            return EXIT_CONFIG
        cfg.seed = args.seed
    out_dir = args.out or cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = cfg.echo()
    echo["seed"] = cfg.seed
    t0 = time.perf_counter()
    files: list[str] = []
    try:
        if args.dump_matrix:
            _assemble(cfg, build_grid(cfg.domain)).to_coo_text(out_dir / "matrix.txt")
            files.append("matrix.txt")
        result = TASK_FUNCS[cfg.task](cfg, out_dir, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        write_manifest(out_dir, config=echo, wall_time=time.perf_counter() - t0, verdicts=[],
                       flags=[], results={}, files=files, status="config_error", error=str(exc),
                       threads=args.threads)
        return EXIT_CONFIG
    except Exception as exc:  # partial artifacts stay on disk
        print(f"task {cfg.task} failed: {exc}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc()
        write_manifest(out_dir, config=echo, wall_time=time.perf_counter() - t0, verdicts=[],
                       flags=[], results={}, files=files, status="error",
                       error=f"{type(exc).__name__}: {exc}", threads=args.threads)
        return EXIT_ERROR
    files += result.files
    write_plot_description(out_dir, result.plots)
    files.append("plots.json")
    if args.render:
        files += render_plots(out_dir, result.plots)
    verdicts = [v.to_dict() for v in result.verdicts]
    passed = all(v["passed"] for v in verdicts if v["gating"])
    write_manifest(out_dir, config=echo, wall_time=time.perf_counter() - t0, verdicts=verdicts,
                   flags=result.flags, results=result.results, files=files,
                   status="pass" if passed else "fail", threads=args.threads)
    for v in verdicts:
        tag = "PASS" if v["passed"] else ("FAIL" if v["gating"] else "INFO")
        print(f"{tag} {v['name']}")
    print(f"manifest: {out_dir / 'manifest.json'}")
    return EXIT_OK if passed else EXIT_FAIL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
