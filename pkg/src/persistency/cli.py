"""Command-line frontend.

    persistency gen --family potts --rows 10 --cols 10 --labels 3 --seed 0 -o m.uai
    persistency solve m.uai -o y.json
    persistency persist m.uai --labeling y.json -o report.json
    persistency stats r1.json r2.json
    persistency render report.json --rows 10 --cols 10 -o map

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .lp_oracle import OracleSizeError
from .model import GraphicalModel, energy, gen_random
from .persist import (
    PersistencyConfig,
    PersistencyReport,
    Speedups,
    choose_test_labeling,
    find_persistency,
)
from .uai import UAIFormatError, read_uai, write_uai

log = logging.getLogger("persistency")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _dump(obj, path):
    text = json.dumps(obj, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None


def _load_model(path) -> GraphicalModel:
    try:
        return read_uai(path)
    except UAIFormatError as exc:
        raise DataError(f"{path}: {exc}") from None


def _load_labeling(path, f: GraphicalModel) -> tuple:
    data = _load_json(path)
    y = data.get("labeling") if isinstance(data, dict) else data
    if not isinstance(y, list):
        raise DataError(f"{path}: expected a list or an object with 'labeling'")
    if len(y) != f.n_nodes or any(not isinstance(i, int) or not 0 <= i < k for i, k in zip(y, f.labels)):
        raise DataError(f"{path}: labeling does not match the model")
    return tuple(y)


def remainder_model(f: GraphicalModel, remaining) -> GraphicalModel:
    """``f`` restricted to the labels each node keeps."""
    unary = [t[m] for t, m in zip(f.unary, remaining)]
    pairwise = [t[np.ix_(remaining[u], remaining[v])] for (u, v), t in zip(f.edges, f.pairwise)]
    return GraphicalModel(tuple(len(m) for m in remaining), f.edges, unary, pairwise, f.constant)


def cmd_gen(args):
    if args.rows < 1 or args.cols < 1:
        raise UsageError(f"grid must be at least 1x1, got {args.rows}x{args.cols}")
    if args.labels < 2:
        raise UsageError("labels must be at least 2")
    if args.cost_min > args.cost_max:
        raise UsageError("cost-min exceeds cost-max")
    f = gen_random(args.family, args.rows, args.cols, args.labels, (args.cost_min, args.cost_max), args.seed)
    out = Path(args.output)
    write_uai(f, out)
    _dump({
        "family": args.family, "rows": args.rows, "cols": args.cols, "labels": args.labels,
        "cost_range": [args.cost_min, args.cost_max], "seed": args.seed,
    }, out.with_suffix(".json"))
    return 0


def cmd_solve(args):
    f = _load_model(args.model)
    y = choose_test_labeling(f, budget=args.budget)
    _dump({"labeling": list(y), "energy": energy(f, y)}, args.output)
    return 0


def _config(args) -> PersistencyConfig:
    return PersistencyConfig(
        mode=args.mode,
        sweeps_per_round=args.sweeps_per_round,
        speedups=Speedups(not args.no_single_node, not args.no_pruning_cut, not args.naive_messages),
        seed=args.seed,
    )


def cmd_persist(args):
    f = _load_model(args.model)
    cfg = _config(args)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.labeling:
        y = _load_labeling(args.labeling, f)
    else:
        y = choose_test_labeling(f, budget=args.budget, mode="exact" if cfg.mode == "exact" else "budgeted")
    trace_file = open(args.trace, "w") if args.trace else None
    try:
        hook = (lambda rec: trace_file.write(json.dumps(rec) + "\n")) if trace_file else None
        rep = find_persistency(f, y, cfg, trace=hook)
    finally:
        if trace_file:
            trace_file.close()
    text = rep.to_json(timing=args.timing)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)
    if args.emit_remainder:
        p = rep.substitution
        remaining = [np.array([i for i in range(k) if i not in set(s)], dtype=np.intp)
                     for k, s in zip(f.labels, p.eliminated)]
        out = Path(args.emit_remainder)
        write_uai(remainder_model(f, remaining), out)
        _dump({"label_maps": [m.tolist() for m in remaining]}, out.with_suffix(".json"))
    return 0


def cmd_stats(args):
    reports = []
    for path in args.reports:
        try:
            reports.append(PersistencyReport.from_dict(_load_json(path)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"{path}: not a persistency report ({exc})") from None
    if not reports:
        raise UsageError("no reports given")

    def summary(values):
        a = np.asarray(values, dtype=np.float64)
        return {"mean": float(a.mean()), "std": float(a.std()), "min": float(a.min()), "max": float(a.max())}

    out = {
        "count": len(reports),
        "label_fraction": summary([r.label_fraction for r in reports]),
        "log_fraction": summary([r.log_fraction for r in reports]),
        "outer_rounds": summary([r.outer_rounds for r in reports]),
        "total_sweeps": summary([r.total_sweeps for r in reports]),
    }
    times = [r.wall_time for r in reports if r.wall_time is not None]
    if times:
        out["wall_time_s"] = summary(times)
    _dump(out, args.output)
    return 0


def _pgm(path, pixels: np.ndarray, maxval: int):
    rows, cols = pixels.shape
    header = f"P5\n{cols} {rows}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + pixels.astype(np.uint8).tobytes())


def cmd_render(args):
    rep = PersistencyReport.from_dict(_load_json(args.report))
    remaining = np.array(rep.remaining, dtype=np.int64)
    if args.rows * args.cols != remaining.size:
        raise DataError(f"grid {args.rows}x{args.cols} does not match {remaining.size} nodes")
    maxval = int(max(rep.labels))
    if maxval > 255:
        raise DataError("more than 255 labels cannot be encoded in an 8-bit map")
    grid = remaining.reshape(args.rows, args.cols)
    _pgm(f"{args.output}_remaining.pgm", grid, maxval)
    _pgm(f"{args.output}_unique.pgm", np.where(grid == 1, 255, 0), 255)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="persistency", description="Partial optimality for pairwise energy minimization.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a random grid instance")
    g.add_argument("--family", choices=("potts", "full"), default="potts")
    g.add_argument("--rows", type=int, required=True)
    g.add_argument("--cols", type=int, required=True)
    g.add_argument("--labels", type=int, required=True)
    g.add_argument("--cost-min", type=int, default=0)
    g.add_argument("--cost-max", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True, help="UAI file; a .json sidecar is written next to it")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="approximate MAP labeling with TRW-S")
    s.add_argument("model")
    s.add_argument("--budget", type=int, default=1000, help="maximum number of sweeps")
    s.add_argument("-o", "--output", default="-")
    s.set_defaults(func=cmd_solve)

    p = sub.add_parser("persist", help="find an improving substitution")
    p.add_argument("model")
    p.add_argument("--labeling", help="JSON test labeling; computed with TRW-S when omitted")
    p.add_argument("--mode", choices=("exact", "arc_consistency", "budgeted"), default="budgeted")
    p.add_argument("--sweeps-per-round", type=int, default=50)
    p.add_argument("--budget", type=int, default=1000, help="sweeps for the test labeling")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-single-node", action="store_true")
    p.add_argument("--no-pruning-cut", action="store_true")
    p.add_argument("--naive-messages", action="store_true", help="run the solver on the uncontracted model")
    p.add_argument("--emit-remainder", metavar="UAI", help="write the model restricted to the remaining labels")
    p.add_argument("--trace", metavar="JSONL", help="write one JSON record per sweep")
    p.add_argument("--timing", action="store_true", help="include wall time in the report")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_persist)

    st = sub.add_parser("stats", help="aggregate persistency reports")
    st.add_argument("reports", nargs="+")
    st.add_argument("-o", "--output", default="-")
    st.set_defaults(func=cmd_stats)

    r = sub.add_parser("render", help="PGM maps of the remaining labels on a grid")
    r.add_argument("report")
    r.add_argument("--rows", type=int, required=True)
    r.add_argument("--cols", type=int, required=True)
    r.add_argument("-o", "--output", required=True, help="prefix for <prefix>_remaining.pgm and <prefix>_unique.pgm")
    r.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("PERSIST_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"persistency: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OracleSizeError, OSError, ValueError) as exc:
        print(f"persistency: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
