"""``conebeam-pose`` command line tool.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import logging
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write_text, dumps
from .cube import make_cube
from .dataset import (
    GenerationRanges,
    export_legacy_labels,
    generate_dataset,
    load_dataset,
    sample_geometry,
    sample_pose,
    save_dataset,
    split_counts,
)
from .exceptions import (
    BehindSourceError,
    CheiralityError,
    DataFormatError,
    DegenerateConfigurationError,
    GenerationError,
    MissingPredictionError,
    NumericalError,
    PreconditionError,
)
from .geometry import AcquisitionGeometry, intrinsics_matrix, project_control_points
from .metrics import EvalConfig, calibrate_noise_sigma, evaluate, write_report
from .pnp import solve
from .predictor import load_predictions, oracle_predict_dataset, prediction_rng, save_predictions

logger = logging.getLogger("conebeam_pose")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def _points(text):
    """Parse ``"u,v;u,v;..."`` into a (9, 2) array."""
    try:
        pts = np.array([[float(c) for c in pair.split(",")] for pair in text.strip().split(";")
                        if pair.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed point list: {text!r}")
    if pts.shape != (9, 2):
        raise argparse.ArgumentTypeError(f"expected 9 'u,v' pairs separated by ';', got {text!r}")
    return pts


def _ranges(args):
    if getattr(args, "ranges_file", None):
        return GenerationRanges.from_file(args.ranges_file)
    return GenerationRanges()


def _require_seed(args):
    if args.seed is None:
        raise UsageError("--seed is required for this command")
    return args.seed


def _check_out(path):
    path = Path(path)
    if not path.parent.exists() and str(path.parent) not in ("", "."):
        raise UsageError(f"output directory does not exist: {path.parent}")
    return path


def cmd_generate(args):
    seed = _require_seed(args)
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    out = _check_out(args.out)
    ranges = _ranges(args)
    samples = generate_dataset(args.n, seed, ranges, make_cube(args.edge))
    save_dataset(samples, out)
    if args.labels_dir:
        export_legacy_labels(samples, args.labels_dir)
    n_train, n_val = split_counts(args.n)
    print(f"wrote {args.n} samples to {out} (seed={seed}): {n_train} train / {n_val} val")
    print("ranges: " + json.dumps(ranges.to_dict()))
    return EXIT_OK


def cmd_predict_oracle(args):
    seed = _require_seed(args)
    if args.sigma < 0:
        raise UsageError("--sigma must be non-negative")
    out = _check_out(args.out)
    samples = load_dataset(args.dataset)
    save_predictions(oracle_predict_dataset(samples, args.sigma, seed), out)
    print(f"wrote {len(samples)} predictions to {out} (sigma={args.sigma} px, seed={seed})")
    return EXIT_OK


def _eval_config(args):
    return EvalConfig(thresholds_px=tuple(args.thresholds),
                      add_fractions=tuple(args.add_fractions),
                      model=make_cube(args.edge))


def cmd_evaluate(args):
    out = _check_out(args.out)
    table = Path(args.table) if args.table else out.with_suffix(".txt")
    samples = load_dataset(args.dataset)
    predictions = load_predictions(args.predictions)
    report = evaluate(samples, predictions, _eval_config(args))
    write_report(report, out, table)
    sys.stdout.write(report.format_table())
    return EXIT_OK


def cmd_calibrate(args):
    seed = _require_seed(args)
    samples = load_dataset(args.dataset)
    sigma, report = calibrate_noise_sigma(samples, args.target, seed, _eval_config(args),
                                          tol_px=args.tol)
    print(dumps({"sigma_px": sigma, "mean_px_error": report.mean_px_error[0],
                 "mean_angle_deg": report.mean_angle_deg[0],
                 "mean_transl_mm": report.mean_transl_mm[0]}))
    return EXIT_OK


def cmd_solve(args):
    geom = AcquisitionGeometry(args.sid, args.fov, args.width, args.height, (args.x0, args.y0))
    sol = solve(make_cube(args.edge).control_points, args.points, intrinsics_matrix(geom))
    q, t = sol.pose.rotation, sol.pose.translation_mm
    print(dumps({
        "qw": q[0], "qx": q[1], "qy": q[2], "qz": q[3],
        "tx": t[0], "ty": t[1], "tz": t[2],
        "rms_reprojection_px": sol.rms_reprojection_px,
        "iterations": sol.iterations,
        "converged": sol.converged,
    }))
    return EXIT_OK


def bench_inputs(n, seed, sigma, ranges=None, model=None):
    """Deterministic ``(control_points, [(points2d, K), ...])`` for benchmarking."""
    model = model or make_cube()
    ranges = ranges or GenerationRanges()
    rng = np.random.default_rng(seed)
    cases = []
    while len(cases) < n:
        geom = sample_geometry(rng, ranges)
        k = intrinsics_matrix(geom)
        try:
            pts = project_control_points(k, sample_pose(rng, ranges), model.control_points)
        except BehindSourceError:
            continue
        cases.append((pts + sigma * rng.standard_normal(pts.shape), k))
    return model.control_points, cases


def cmd_bench(args):
    seed = _require_seed(args)
    if args.n < 1 or args.repeats < 1:
        raise UsageError("--n and --repeats must be at least 1")
    cps, cases = bench_inputs(args.n, seed, args.sigma)
    rates = []
    for _ in range(args.repeats):
        start = time.perf_counter()
        for pts, k in cases:
            solve(cps, pts, k)
        rates.append(len(cases) / (time.perf_counter() - start))
    result = {
        "n": args.n,
        "seed": seed,
        "sigma_px": args.sigma,
        "repeats": args.repeats,
        "poses_per_sec_mean": statistics.fmean(rates),
        "poses_per_sec_std": statistics.pstdev(rates),
    }
    print(json.dumps(result))
    print(f"solver throughput: {result['poses_per_sec_mean']:.1f} ± "
          f"{result['poses_per_sec_std']:.1f} poses/s", file=sys.stderr)
    return EXIT_OK


def _add_geometry_flags(p):
    p.add_argument("--edge", type=float, default=30.0, help="cube edge length in mm")


def build_parser():
    parser = _Parser(prog="conebeam-pose", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON file of per-command defaults; flags win")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="generate a synthetic dataset (JSON Lines)")
    p.add_argument("--n", type=int, default=2042)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--ranges-file", help="JSON file overriding the sampling ranges")
    p.add_argument("--labels-dir", help="also export 21-value label files here")
    _add_geometry_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("predict-oracle", help="noisy ground-truth predictions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--sigma", type=float, default=0.0, help="pixel noise std")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict_oracle)

    for name, func, hlp in (("evaluate", cmd_evaluate, "solve PnP and report metrics"),
                            ("calibrate", cmd_calibrate, "find sigma for a target 2D error")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--dataset", required=True)
        p.add_argument("--thresholds", type=_float_list, default=[5.0, 10.0, 15.0],
                       help="2D thresholds in px, comma separated")
        p.add_argument("--add-fractions", type=_float_list, default=[0.1, 0.5, 1.0],
                       help="ADD thresholds as fractions of the diameter")
        _add_geometry_flags(p)
        p.set_defaults(func=func)
        if name == "evaluate":
            p.add_argument("--predictions", required=True)
            p.add_argument("--out", required=True, help="JSON report path")
            p.add_argument("--table", help="text table path (default: --out with .txt)")
        else:
            p.add_argument("--target", type=float, default=9.2, help="target mean 2D error, px")
            p.add_argument("--tol", type=float, default=0.05)
            p.add_argument("--seed", type=int)

    p = sub.add_parser("solve", help="solve a single pose from 9 pixel coordinates")
    p.add_argument("--sid", type=float, required=True, help="source-image distance, mm")
    p.add_argument("--fov", type=float, required=True, help="FOV diagonal, mm")
    p.add_argument("--width", type=int, default=960)
    p.add_argument("--height", type=int, default=960)
    p.add_argument("--x0", type=float, default=0.0, help="principal point offset x, mm")
    p.add_argument("--y0", type=float, default=0.0, help="principal point offset y, mm")
    p.add_argument("--points", type=_points, required=True, help="'u0,v0;u1,v1;...;u8,v8'")
    _add_geometry_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="measure PnP solver throughput")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=cmd_bench)
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config, encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read --config: {exc}")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, defaults in config.items():
        if name not in subparsers.choices or not isinstance(defaults, dict):
            parser.error(f"config: unknown command section {name!r}")
        subparsers.choices[name].set_defaults(**{k.replace("-", "_"): v for k, v in defaults.items()})


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, PreconditionError) as exc:
        print(f"conebeam-pose: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DataFormatError, MissingPredictionError, GenerationError) as exc:
        print(f"conebeam-pose: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (BehindSourceError, CheiralityError, DegenerateConfigurationError, NumericalError) as exc:
        print(f"conebeam-pose: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
