"""Command-line entry point: ``holobeam --config sweep.ini``."""

import argparse
import logging
import os
import sys

from .harness import ParseError, ValidationError, load_config, run_experiment


def build_parser():
    ap = argparse.ArgumentParser(prog="holobeam", description="Run beamforming sweeps from a config file.")
    ap.add_argument("--config", required=True, metavar="PATH", help="INI scenario file")
    ap.add_argument("--algo", choices=("mm", "sr", "smm", "all"), help="restrict to one algorithm")
    ap.add_argument("--seeds", help='seed list, e.g. "1..20" or "1,4,7"')
    ap.add_argument("--power-dbm", help='comma-separated transmit powers, e.g. "16,20,24"')
    ap.add_argument("--c", help='comma-separated soft max-min scaling grid, e.g. "1,0.5,0.1"')
    ap.add_argument("--out", metavar="DIR", help="output directory")
    ap.add_argument("--workers", type=int, help="parallel worker processes")
    ap.add_argument("--verbose", action="store_true", help="info logging and inner-solver JSON traces")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = os.environ.get("HOLOBEAM_LOG", "INFO" if args.verbose else "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")

    overrides = {}
    if args.algo:
        overrides["experiment.algorithms"] = args.algo
    if args.seeds:
        overrides["experiment.seeds"] = args.seeds
    if args.power_dbm:
        overrides["experiment.power_dbm"] = args.power_dbm
    if args.c:
        overrides["experiment.c_grid"] = args.c
    if args.out:
        overrides["experiment.output_dir"] = args.out
    if args.workers is not None:
        overrides["experiment.workers"] = str(args.workers)

    try:
        cfg = load_config(args.config, overrides)
    except FileNotFoundError:
        print(f"error: no such config file: {args.config}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        for key, msg in exc.errors:
            print(f"error: {key}: {msg}", file=sys.stderr)
        return 2

    rows, outputs = run_experiment(cfg, verbose=args.verbose)
    failed = [r for r in rows if r["status"] != "ok"]
    print(f"{len(rows)} cells, {len(failed)} failed; summary at {outputs['summary']}")
    return 0 if not failed else 1


if __name__ == "__main__":
    sys.exit(main())
