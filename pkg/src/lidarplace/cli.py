"""``lidarplace`` command line.

Exit codes: 0 success, 1 data error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import load_config
from .errors import ConfigError, LidarPlaceError

EXIT_OK, EXIT_DATA, EXIT_CONFIG = 0, 1, 2


def _sizes(s: str) -> list[int]:
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="pipeline config file")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lidarplace", description="LiDAR place recognition pipeline.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("preprocess", parents=[common], help="filter, transform and normalise clouds")
    d = sub.add_parser("describe", parents=[common], help="compute one descriptor per cloud")
    d.add_argument("--archive", type=Path, help=f"processed archive (default OUT/{pipeline.ARCHIVE_NAME})")
    d.add_argument("--role", choices=["database", "query"], default="database")
    e = sub.add_parser("eval", parents=[common], help="Recall@1 and Recall@1%%")
    e.add_argument("--query", type=Path, help=f"query set (default OUT/{pipeline.DESCRIPTORS_NAME})")
    e.add_argument("--database", type=Path, help="database set (default: same as --query)")
    c = sub.add_parser("cluster", parents=[common], help="k-means over descriptors")
    c.add_argument("--descriptors", type=Path, help=f"descriptor set (default OUT/{pipeline.DESCRIPTORS_NAME})")
    b = sub.add_parser("bench", parents=[common], help="time preprocess + quantize + forward")
    b.add_argument("--sizes", type=_sizes, help="comma-separated point counts")
    return p


def run(args) -> int:
    cfg = load_config(args.config)
    out = args.out
    if args.command == "preprocess":
        res = pipeline.cmd_preprocess(cfg, out, args.jobs)
        for sid, msg in res.errors:
            print(f"error: {sid}: {msg}", file=sys.stderr)
        print(f"wrote {res.outputs['archive']}")
        return EXIT_OK if res.ok else EXIT_DATA
    if args.command == "describe":
        archive = args.archive or out / pipeline.ARCHIVE_NAME
        res = pipeline.cmd_describe(cfg, archive, out, args.seed, args.jobs, args.role)
        print(f"wrote {res.outputs['descriptors']}")
    elif args.command == "eval":
        q = args.query or out / pipeline.DESCRIPTORS_NAME
        res = pipeline.cmd_eval(cfg, q, args.database or q, out)
        for row in res.outputs["rows"]:
            print(f"{row['metric']}: {row['value'] or 'undefined'} "
                  f"({row['successes']}/{row['evaluated']} evaluated queries)")
    elif args.command == "cluster":
        res = pipeline.cmd_cluster(cfg, args.descriptors or out / pipeline.DESCRIPTORS_NAME,
                                   out, args.seed)
        print(f"wrote {res.outputs['labels']} and {res.outputs['plot']}")
    elif args.command == "bench":
        res = pipeline.cmd_bench(cfg, out, args.sizes, args.seed)
        for r in res.outputs["rows"]:
            print(f"{r['points']:>8d} points: median {r['median_ms']:.2f} ms, p95 {r['p95_ms']:.2f} ms")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LidarPlaceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
