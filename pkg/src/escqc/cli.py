"""Command-line entry point: ``escqc {simulate,grid,offset-demo}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config, load_space
from .drb import drb_runtime
from .loop import (
    grid_search,
    run_closed_loop,
    run_offset_demo,
    runtime_min_per_hour,
    suppression_ratio,
    write_grid_csv,
    write_offset_csv,
)
from .esc import write_trace_csv

log = logging.getLogger("escqc")


def _load(args) -> RunConfig:
    return load_config(args.config, seed=args.seed, out_dir=args.out_dir)


def cmd_simulate(args) -> int:
    rc = _load(args)
    rc.out_dir.mkdir(parents=True, exist_ok=True)
    trace = run_closed_loop(rc.loop)
    header = rc.header(__version__)
    trace.to_csv(rc.out_dir / "trace.csv", header)
    write_trace_csv(rc.out_dir / "esc_trace.csv", trace.records, header)
    s = suppression_ratio(trace)
    hours = rc.loop.duration_h
    print(f"calibrations          {trace.n_calibrations}")
    print(f"mean error (uncontrolled) {trace.err_uncontrolled.mean():.4e}")
    print(f"mean error (controlled)   {trace.err_controlled.mean():.4e}")
    print(f"suppression ratio     {s:.3f}  (ratio of arithmetic means)")
    print(f"runtime charged       {trace.charged_seconds / 60:.2f} min total, "
          f"{trace.charged_seconds / 60 / hours:.2f} min/h")
    print(f"wrote {rc.out_dir / 'trace.csv'}")
    return 0


def cmd_grid(args) -> int:
    rc = _load(args)
    if not args.space:
        raise ConfigError("--space", "the grid subcommand needs --space <path>")
    points = load_space(args.space)
    rc.out_dir.mkdir(parents=True, exist_ok=True)
    results = grid_search(points, rc.loop, max_workers=args.workers)
    write_grid_csv(rc.out_dir / "grid.csv", results, rc.header(__version__))
    ok = 0
    for r in results:
        if r.error:
            print(f"{r.params}: FAILED {r.error}")
            continue
        ok += 1
        print(f"{r.params}: runtime {r.runtime_min_per_hour:.2f} min/h, suppression {r.suppression:.2f}")
    print(f"wrote {rc.out_dir / 'grid.csv'} ({ok}/{len(results)} cells succeeded)")
    return 0 if ok else 1


def cmd_offset_demo(args) -> int:
    rc = _load(args)
    if not any(rc.loop.initial_offsets.get(k, 0.0) for k in rc.loop.initial_offsets):
        log.warning("no nonzero initial_offsets in the config; the demo will only show the fixed point")
    rc.out_dir.mkdir(parents=True, exist_ok=True)
    rows = run_offset_demo(rc.loop, rc.n_calibrations)
    write_offset_csv(rc.out_dir / "offset_demo.csv", rows, rc.header(__version__))
    per_iter = rc.loop.n_points * drb_runtime(rc.loop.drb, 1) / 60
    for r in rows:
        res = ", ".join(f"{k}={v:+.4f}" for k, v in r.residual.items())
        print(f"cal {r.calibration:2d}  F_ref={r.reference_fhat:.5f}  err={r.error_rate:.3e}  residual {res}")
    print(f"runtime per ESC iteration {per_iter:.2f} min "
          f"(t_overhead {rc.loop.drb.t_overhead * 1e3:.3f} ms/shot"
          f"{', calibrated' if rc.calibrated_overhead is not None else ''})")
    print(f"wrote {rc.out_dir / 'offset_demo.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="escqc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"escqc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="run configuration (JSON)")
        sp.add_argument("--out-dir", default=None, help="output directory (overrides output.dir)")
        sp.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("simulate", help="closed-loop run; writes trace.csv")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("grid", help="hyperparameter grid search; writes grid.csv")
    common(sp)
    sp.add_argument("--space", help="search space (JSON)")
    sp.add_argument("--workers", type=int, default=1, help="parallel grid cells")
    sp.set_defaults(func=cmd_grid)

    sp = sub.add_parser("offset-demo", help="static-offset recovery; writes offset_demo.csv")
    common(sp)
    sp.set_defaults(func=cmd_offset_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and args.seed < 0:
        print("config error: --seed must be non-negative", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("run failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
