"""Command-line interface: refinement sweeps, geometry validation and benchmark info."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .assembly import VARIANTS
from .benchmarks import BENCHMARKS, get_benchmark
from .geometry import GeometryError
from .multipatch import MultipatchError, build_multipatch, topology_report
from .space import build_space
from .sweep import run_sweep

RATE_TOL = 0.15
REPRODUCTION_TOL = 1e-8
DEFAULT_MAX_DEGREE = 4
DEFAULT_MAX_LEVELS = 4

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

RUN_DEFAULTS = {
    "benchmark": "quarter-cylinder",
    "method": "all",
    "degree": "2,3,4",
    "levels": 4,
    "base_level": None,
    "delta0": None,
    "delta1": None,
    "out": "results",
    "format": "csv",
    "plot": False,
    "timing": False,
    "jobs": 1,
    "extended": False,
}


def _parse_degrees(text) -> list[int]:
    if isinstance(text, int):
        return [text]
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def _variants(method: str) -> list[str]:
    m = method.upper()
    if m == "ALL":
        return ["SIPG", "NIPG", "SSIPG1", "SSIPG2"]
    if m not in VARIANTS:
        raise ValueError(f"unknown method {method!r}")
    return [m]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dgiga", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="refinement sweep with error norms and rates")
    run.add_argument("--config", help="JSON file whose keys mirror the long options (flags override it)")
    run.add_argument("--benchmark", choices=sorted(BENCHMARKS))
    run.add_argument("--method", help="sipg | nipg | ssipg1 | ssipg2 | all")
    run.add_argument("--degree", help="comma-separated spline degrees, e.g. 2,3,4")
    run.add_argument("--levels", type=int, help="number of refinement levels")
    run.add_argument("--base-level", type=int, dest="base_level", help="coarsest level (default: per benchmark)")
    run.add_argument("--delta0", type=float, help="gradient-jump penalty (default (p+1)(p+3)/3)")
    run.add_argument("--delta1", type=float, help="value-jump penalty (default (p+1)(p+3)/3)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--format", choices=["csv", "json"])
    run.add_argument("--plot", action="store_true", default=None, help="also write an SVG convergence plot")
    run.add_argument("--timing", action="store_true", default=None, help="record wall time (output not byte-stable)")
    run.add_argument("--jobs", type=int, help="worker processes")
    run.add_argument("--extended", action="store_true", default=None,
                     help=f"allow p > {DEFAULT_MAX_DEGREE} and more than {DEFAULT_MAX_LEVELS} levels")

    vg = sub.add_parser("validate-geometry", help="check a multipatch geometry JSON file")
    vg.add_argument("file")
    vg.add_argument("--level", type=int, default=0)

    info = sub.add_parser("info", help="describe a benchmark")
    info.add_argument("--benchmark", required=True, choices=sorted(BENCHMARKS))
    info.add_argument("--levels", type=int, default=3)
    info.add_argument("--degree", type=int, default=3)
    return ap


def _merged_run_options(args) -> dict:
    opts = dict(RUN_DEFAULTS)
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
        unknown = set(cfg) - set(opts)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        opts.update(cfg)
    for key in opts:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    return opts


def _check(result, bench_name: str) -> list[str]:
    """Acceptance-relevant problems in a sweep result."""
    problems = [f"{r.variant} p={r.p} level={r.level}: {r.error}" for r in result.failures]
    bench = get_benchmark(bench_name)
    for variant, p in result.keys():
        series = result.series(variant, p)
        if bench.reference_rate is None:
            bad = [r for r in series if r.ok and not r.err_h <= REPRODUCTION_TOL]
            problems += [f"{variant} p={p} level={r.level}: error {r.err_h:.3e} > {REPRODUCTION_TOL:g}" for r in bad]
            continue
        rate = series[-1].rate_h if series else None
        target = bench.expected_rate(p)
        if rate is None:
            if len(series) > 1:
                problems.append(f"{variant} p={p}: final rate undefined")
        elif abs(rate - target) > RATE_TOL:
            problems.append(f"{variant} p={p}: final rate {rate:.3f} outside {target:g} +/- {RATE_TOL}")
    problems += [f"{r.variant} p={r.p} level={r.level}: err_h > err_hstar" for r in result.rows
                 if r.ok and r.err_h > r.err_hstar * (1 + 1e-12)]
    return problems


def cmd_run(args) -> int:
    opts = _merged_run_options(args)
    degrees = _parse_degrees(opts["degree"])
    variants = _variants(opts["method"])
    levels = int(opts["levels"])
    if not opts["extended"] and (max(degrees) > DEFAULT_MAX_DEGREE or levels > DEFAULT_MAX_LEVELS):
        raise ValueError(f"p > {DEFAULT_MAX_DEGREE} or levels > {DEFAULT_MAX_LEVELS} requires --extended")
    if min(degrees) < 2 or max(degrees) > 6:
        raise ValueError("degrees must lie in 2..6")
    bench = get_benchmark(opts["benchmark"])
    base = bench.base_level if opts["base_level"] is None else int(opts["base_level"])
    result = run_sweep(opts["benchmark"], variants, degrees, levels, base, opts["delta0"], opts["delta1"],
                       jobs=int(opts["jobs"]))
    for path in result.write(opts["out"], opts["format"], timing=bool(opts["timing"]), plot=bool(opts["plot"])):
        print(f"wrote {path}")
    for variant, p in result.keys():
        s = result.series(variant, p)
        errs = " ".join("fail" if not r.ok else f"{r.err_h:.3e}" for r in s)
        rts = " ".join("-" if r.rate_h is None else f"{r.rate_h:.2f}" for r in s[1:])
        print(f"{variant:7s} p={p}  err_h: {errs}  rates: {rts}")
    problems = _check(result, opts["benchmark"])
    for msg in problems:
        print(f"FAIL {msg}", file=sys.stderr)
    return EXIT_FAIL if problems else EXIT_OK


def cmd_validate(args) -> int:
    try:
        mp = build_multipatch(Path(args.file))
        report = topology_report(mp, args.level)
    except (MultipatchError, GeometryError, OSError, ValueError, KeyError) as exc:
        print(f"invalid geometry: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(json.dumps(report, indent=1))
    return EXIT_OK


def cmd_info(args) -> int:
    bench = get_benchmark(args.benchmark).specialize(args.degree)
    mp = bench.geometry
    levels = []
    for lev in range(bench.base_level, bench.base_level + args.levels):
        space = build_space(mp, args.degree, lev)
        levels.append({"level": lev, "dofs": space.total_dofs, "h": space.h})
    out = {
        "benchmark": bench.name,
        "params": bench.params,
        "base_level": bench.base_level,
        "solution": type(bench.exact).__name__,
        "topology": topology_report(mp, 0),
        "degree": args.degree,
        "levels": levels,
    }
    print(json.dumps(out, indent=1))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": cmd_run, "validate-geometry": cmd_validate, "info": cmd_info}
    try:
        return handlers[args.command](args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
