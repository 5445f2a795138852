"""Command line driver.

    podeig offline CONFIG [--fast]
    podeig online MODEL [--points CSV] [-k K] [--no-reference] [--out CSV]
    podeig figure CONFIG
    podeig compare CONFIG [CONFIG ...] [--fast] [--out CSV]

Exit codes: 0 success, 1 domain or argument error, 2 I/O error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from ._io import atomic_write
from .experiment import (
    ExperimentError,
    compare_schemes,
    emit_sample_figure_data,
    load_config,
    run_offline,
    run_online,
)
from .sampling import read_points_csv

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2

logger = logging.getLogger("podeig")


def _load(path, fast):
    config = load_config(path)
    return config.fast() if fast else config


def _emit(text, out):
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def cmd_offline(args):
    manifest = run_offline(_load(args.config, args.fast))
    print(json.dumps({
        "n_samples": manifest.n_samples,
        "n_snapshot_columns": manifest.n_snapshot_columns,
        "rank": manifest.rank,
        "N": manifest.n_basis,
        "timings": manifest.timings,
    }, indent=2))


def cmd_online(args):
    points = read_points_csv(args.points) if args.points else None
    text, _, timings = run_online(args.model, points, args.k, reference=not args.no_reference)
    _emit(text, args.out)
    if timings:
        logger.info("timings: %s", timings)


def cmd_figure(args):
    train, test = emit_sample_figure_data(load_config(args.config))
    print(train)
    print(test)


def cmd_compare(args):
    text, _ = compare_schemes([_load(p, args.fast) for p in args.configs])
    _emit(text, args.out)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="podeig",
        description="Reduced order models for parametric eigenvalue problems.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("offline", help="build and persist a reduced model")
    p.add_argument("config", type=Path)
    p.add_argument("--fast", action="store_true", help="coarse mesh (n=50)")
    p.set_defaults(func=cmd_offline)

    p = sub.add_parser("online", help="evaluate a persisted model")
    p.add_argument("model", type=Path, help="run directory or its manifest.json")
    p.add_argument("--points", type=Path, help="CSV with header dim0,dim1,...")
    p.add_argument("-k", type=int, default=None, help="eigenvalues per point")
    p.add_argument("--no-reference", action="store_true", help="skip FEM reference solves")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_online)

    p = sub.add_parser("figure", help="write training/test point CSVs")
    p.add_argument("config", type=Path)
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("compare", help="per-scheme error summary")
    p.add_argument("configs", type=Path, nargs="+")
    p.add_argument("--fast", action="store_true")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except Exception as exc:
        cause = exc.cause if isinstance(exc, ExperimentError) else exc
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(cause, OSError) else EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
