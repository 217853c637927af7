"""Command-line front end: ``dblboot {simulate,bound,study,report}``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from dblboot.bounds import METHODS, compute_bounds
from dblboot.dgp import ModelKind, ModelSpec, simulate
from dblboot.exceptions import ConfigError, DegenerateSampleError
from dblboot.reference import REPORT_TOLERANCE, TABLES, compare_rows
from dblboot.smooth import EstimatorKind
from dblboot.study import CSV_COLUMNS, StudyConfig, emit, run_study

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4

PROFILES = {
    "desk": {"replications": 1000, "b1": 500, "b2": 250},
    "paper": {"replications": 1000, "b1": 1000, "b2": 1000, "ns": [500, 1000]},
}


def _length(text: str):
    if text == "auto":
        return "auto"
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer or 'auto', got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"block length must be positive, got {v}")
    return v


def _level(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dblboot", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a series from one of the test models")
    s.add_argument("--model", required=True, choices=[k.value for k in ModelKind])
    s.add_argument("--coef", type=float, default=0.3)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--burn-in", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="output file (default: stdout)")

    b = sub.add_parser("bound", help="upper confidence bound(s) for one series")
    b.add_argument("--in", dest="infile", required=True, help="one observation per line")
    b.add_argument("--estimator", required=True, choices=[e.value for e in EstimatorKind])
    b.add_argument("--alpha", type=_level, required=True)
    b.add_argument("--ell", type=_length, default="auto")
    b.add_argument("--k", type=_length, default="auto")
    b.add_argument("--b1", type=int, default=500)
    b.add_argument("--b2", type=int, default=250)
    b.add_argument("--method", choices=list(METHODS) + ["all"], default="basic")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--gk-c", type=float, default=0.5)
    b.add_argument("--symmetrize-dh", action="store_true")

    st = sub.add_parser("study", help="run a coverage study from a JSON config")
    st.add_argument("--config", required=True)
    st.add_argument("--out-dir", default=".")
    st.add_argument("--threads", type=int, default=1, help="worker processes")
    st.add_argument("--profile", choices=sorted(PROFILES))
    st.add_argument("--allow-failures", action="store_true")
    st.add_argument("--quiet", action="store_true")

    r = sub.add_parser("report", help="compare a coverage CSV with a published table")
    r.add_argument("--in", dest="infile", required=True)
    r.add_argument("--against", required=True, choices=TABLES)
    r.add_argument("--tolerance", type=float, default=REPORT_TOLERANCE)
    return p


def _read_series(path: str) -> np.ndarray:
    with open(path) as fh:
        values = [float(line) for line in fh if line.strip()]
    return np.array(values)


def cmd_simulate(args, parser) -> int:
    if args.n < 2:
        parser.error(f"--n must be at least 2 (n too small), got {args.n}")
    try:
        model = ModelSpec(ModelKind(args.model), args.coef, args.burn_in)
    except ValueError as err:
        parser.error(str(err))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed)))
    x = simulate(model, args.n, rng)
    text = "".join(f"{v!r}\n" for v in x.tolist())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"n={args.n} model={model.label} seed={args.seed}", file=sys.stderr)
    return EXIT_OK


def cmd_bound(args, parser) -> int:
    try:
        x = _read_series(args.infile)
    except FileNotFoundError:
        parser.error(f"input file not found: {args.infile}")
    except ValueError as err:
        parser.error(f"could not parse {args.infile}: {err}")
    methods = list(METHODS) if args.method == "all" else [args.method]
    try:
        (res,) = compute_bounds(
            x, args.estimator, args.alpha, ell=args.ell, k=args.k, B1=args.b1, B2=args.b2,
            rng=np.random.default_rng(args.seed), methods=methods,
            gk_c=args.gk_c, symmetrize_dh=args.symmetrize_dh,
        )
    except DegenerateSampleError as err:
        print(f"error: degenerate sample: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as err:
        parser.error(str(err))

    print(f"estimator={args.estimator}")
    print(f"n={res.n}")
    print(f"ell={res.ell}")
    print(f"k={res.k}")
    print(f"alpha={res.alpha!r}")
    print(f"theta_hat={res.theta_hat!r}")
    for m in methods:
        key = "bound" if len(methods) == 1 else f"bound_{m}"
        value = res.bound(m)
        print(f"{key}={'nan' if value is None else repr(value)}")
    if "calibrated" in methods and res.alpha_hat is not None:
        print(f"alpha_hat={res.alpha_hat!r}")
    if res.failures:
        for m, msg in res.failures.items():
            print(f"error: {m}: {msg}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_study(args, parser) -> int:
    try:
        text = Path(args.config).read_text()
    except OSError as err:
        parser.error(f"cannot read config: {err}")
    try:
        config = StudyConfig.from_json(text)
        if args.profile:
            d = config.to_dict()
            d.update(PROFILES[args.profile])
            config = StudyConfig.from_dict(d)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    def progress(done, total):
        if not args.quiet:
            print(f"\r{done}/{total} tasks", end="", file=sys.stderr, flush=True)

    table = run_study(config, workers=args.threads, progress=progress)
    if not args.quiet:
        print(file=sys.stderr)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit(table, "csv", out / "coverage.csv")
    emit(table, "json", out / "coverage.json")
    print(emit(table, "pretty"))
    if table.failures and not args.allow_failures:
        print(f"error: {table.failures} failed bound computations", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_report(args, parser) -> int:
    try:
        with open(args.infile, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except OSError as err:
        parser.error(f"cannot read {args.infile}: {err}")
    if header and tuple(header) != CSV_COLUMNS:
        print(f"schema error: expected columns {','.join(CSV_COLUMNS)}", file=sys.stderr)
        return EXIT_CONFIG
    matched = compare_rows(rows, args.against, args.tolerance)
    if not matched:
        print("no matching cells")
        return EXIT_OK
    print(f"{'model':8s}{'method':13s}{'n':>6s}{'alpha':>7s}{'computed':>10s}{'paper':>8s}{'diff':>8s}")
    for c in matched:
        flag = "  *" if c["flag"] else ""
        print(
            f"{c['model']:8s}{c['method']:13s}{c['n']:6d}{c['alpha']:7.2f}"
            f"{c['coverage']:10.3f}{c['reference']:8.3f}{c['diff']:+8.3f}{flag}"
        )
    n_flag = sum(c["flag"] for c in matched)
    print(f"{len(matched)} cells compared, {n_flag} outside +/-{args.tolerance:g}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    handlers = {
        "simulate": cmd_simulate,
        "bound": cmd_bound,
        "study": cmd_study,
        "report": cmd_report,
    }
    return handlers[args.command](args, parser)


if __name__ == "__main__":
    sys.exit(main())
