"""Command-line interface.

Exit status: 0 success, 1 usage error, 2 data error.
Set ``SIGTREE_LOG`` to error, info or debug for log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import engine
from .emd import cost_matrix, solve_transport
from .errors import DataError
from .images import IMAGE_SUFFIXES
from .palette import default_palette, format_palette, load_palette
from .stree import SEARCH_MODES

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("sizes must be positive integers")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sigtree", description="Color-signature image retrieval with an EMD-guided S-tree.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def tree_options(p):
        p.add_argument("--bits-per-color", type=int, default=8)
        p.add_argument("--max-node", type=int, default=6)
        p.add_argument("--min-node", type=int, default=2)
        p.add_argument("--dominant-threshold", type=float, default=0.0)
        p.add_argument("--palette", type=Path, help="palette file (name,R,G,B per line)")

    p = sub.add_parser("index", help="build an index from a directory of images")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--mode", choices=SEARCH_MODES, default="single", help="default search mode stored in the index")
    tree_options(p)

    p = sub.add_parser("query", help="rank indexed images against a query image")
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--mode", choices=SEARCH_MODES)
    p.add_argument("--strict-coverage", action="store_true", help="no min-EMD fallback when nothing covers the query")
    p.add_argument("--linear", action="store_true", help="exhaustive scan instead of the tree")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("bench", help="tree vs linear scan on synthetic corpora")
    p.add_argument("--sizes", type=_int_list, default=[100, 1000, 10000])
    p.add_argument("--queries", type=int, default=50)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=42)
    tree_options(p)

    p = sub.add_parser("validate", help="check index invariants")
    p.add_argument("--index", type=Path, required=True)

    p = sub.add_parser("emd", help="EMD between two histogram CSV files")
    p.add_argument("--hist-a", type=Path, required=True)
    p.add_argument("--hist-b", type=Path, required=True)
    p.add_argument("--palette", type=Path)
    p.add_argument("--flows", action="store_true", help="also print the flow matrix as CSV")

    p = sub.add_parser("palette", help="show the palette")
    p.add_argument("--dump", action="store_true", help="print in palette file format")
    p.add_argument("--palette", type=Path)
    return parser


def _palette(args):
    return load_palette(args.palette) if getattr(args, "palette", None) else default_palette()


def _config(args, **extra) -> engine.IndexConfig:
    try:
        return engine.IndexConfig(
            palette=_palette(args),
            bits_per_color=args.bits_per_color,
            max_node=args.max_node,
            min_node=args.min_node,
            dominant_threshold=args.dominant_threshold,
            **extra,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_index(args, out, err):
    if not args.input.is_dir():
        raise DataError(f"{args.input} is not a directory")
    files = [p for p in args.input.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file()]
    index = engine.build_index(files, _config(args, mode=args.mode), out=args.out)
    stats = index.build_stats
    print(
        f"indexed {index.count} images ({len(stats.skipped)} skipped), height {index.tree.height}, "
        f"{stats.emd_comparisons} EMD comparisons, {stats.elapsed_ms:.1f} ms -> {args.out}",
        file=out,
    )


def cmd_query(args, out, err):
    if args.k < 1:
        raise UsageError("--k must be at least 1")
    index = engine.load_index(args.index)
    if args.linear:
        result = engine.linear_scan(index, args.image, args.k)
    else:
        result = engine.query(index, args.image, args.k, args.mode, args.strict_coverage)
    if args.json:
        json.dump(result.to_json(), out, indent=2)
        out.write("\n")
    else:
        print(f"{'rank':>4}  {'oid':>8}  {'distance':>12}  path", file=out)
        for h in result.hits:
            print(f"{h.rank:>4}  {h.oid:>8}  {h.distance:>12.6f}  {h.path}", file=out)
    print(
        f"{result.candidates} candidates, {result.emd_evaluations} EMD evaluations, "
        f"{result.coverage_tests} coverage tests, {result.elapsed_ms:.3f} ms",
        file=err,
    )


def cmd_bench(args, out, err):
    if args.queries < 1:
        raise UsageError("--queries must be at least 1")
    config = _config(args, seed=args.seed)
    try:
        rows = engine.bench(args.sizes, args.queries, config, out=args.out)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out.write(engine.bench_csv(rows))


def cmd_validate(args, out, err):
    problems = engine.load_index(args.index).validate()
    for p in problems:
        print(p, file=out)
    if problems:
        print(f"FAILED, {len(problems)} violations", file=out)
        return EXIT_DATA
    print("OK, 0 violations", file=out)


def _read_hist(path: Path, n: int) -> np.ndarray:
    try:
        text = path.read_text(encoding="utf-8")
        values = [float(v) for v in text.replace("\n", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if len(values) != n:
        raise DataError(f"{path}: {len(values)} values for a {n}-color palette")
    return np.array(values)


def cmd_emd(args, out, err):
    palette = _palette(args)
    a = _read_hist(args.hist_a, len(palette))
    b = _read_hist(args.hist_b, len(palette))
    try:
        plan = solve_transport(a, b, cost_matrix(palette))
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if plan.total_flow == 0.0:
        raise DataError("one histogram is empty; EMD undefined")
    print(f"{plan.emd:.6f}", file=out)
    if args.flows:
        for row in plan.flows:
            print(",".join(f"{v:.6g}" for v in row), file=out)


def cmd_palette(args, out, err):
    palette = _palette(args)
    if args.dump:
        out.write(format_palette(palette))
        return
    for i, (name, (r, g, b)) in enumerate(palette.colors):
        print(f"{i:>3}  {name:<12} {r:>3} {g:>3} {b:>3}", file=out)


COMMANDS = {
    "index": cmd_index,
    "query": cmd_query,
    "bench": cmd_bench,
    "validate": cmd_validate,
    "emd": cmd_emd,
    "palette": cmd_palette,
}


def _setup_logging():
    level = os.environ.get("SIGTREE_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args, out, err) or EXIT_OK
    except UsageError as exc:
        print(exc, file=err)
        return EXIT_USAGE
    except (DataError, OSError, UnicodeDecodeError) as exc:
        print(f"sigtree: error: {exc}", file=err)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
