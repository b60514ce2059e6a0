"""Command line entry point: ``rdmdecay <experiment> [options]``."""
from __future__ import annotations

import argparse
import sys

from .experiments import EXPERIMENTS, ConfigError, load_config, preset_path, run


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rdmdecay",
        description="Spectral decay experiments for cusped model wavefunctions.")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="TOML config (defaults to the bundled preset)")
        p.add_argument("--out", default=None, help="output directory (default: out/<experiment>)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--tolerance", type=float, default=None,
                       help="override the pass/fail tolerance from the preset")
        p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True,
                       help="write SVG plots next to the CSV/JSON output")
        if name == "exponent-law":
            p.add_argument("--d", type=int, choices=(1, 3), default=None)
            p.add_argument("--alpha", type=float, default=None)
            p.add_argument("--resolution", type=int, default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        path = args.config or preset_path(args.experiment)
        cfg = load_config(path, seed=args.seed, tolerance=args.tolerance,
                          out_dir=args.out or f"out/{args.experiment}", plot=args.plot)
        if cfg.name != args.experiment:
            raise ConfigError(f"config {path} is for {cfg.name!r}, not {args.experiment!r}")
        if args.experiment == "exponent-law":
            if args.d is not None:
                cfg.params["d"] = args.d
                if args.d == 3:
                    cfg.params.pop("resolution", None)
                    cfg.params.pop("window", None)
            if args.alpha is not None:
                cfg.params["alpha"] = args.alpha
            if args.resolution is not None:
                cfg.params["resolution"] = args.resolution
        report, files = run(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {args.experiment} failed: {exc}", file=sys.stderr)
        return 3
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: measured={c.measured:.6g}"
              + (f" predicted={c.predicted:.6g}" if c.predicted is not None else "")
              + (f" tolerance={c.tolerance:.3g}" if c.tolerance is not None else ""))
    for f in files:
        print(f"wrote {f}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
