"""Command line front end.

Subcommands:

- ``mean``   - rank-preserving mean of matrix files
- ``check``  - geometric-mean property suite with randomized trials
- ``filter`` - filtering experiment, trajectory written as CSV
- ``bench``  - scaling benchmark of the mean over the ambient dimension

Exit codes: 0 success, 1 property failure, 2 precondition violation or bad
flags (with a one-line ``<slug>: <detail>`` reason on stderr), 3
non-convergence or numerical failure. ``RANKMEAN_SEED`` provides the
default seed when ``--seed`` is absent.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import _backend
from .errors import (
    AmbiguousSubspaceError,
    ConvergenceError,
    CutLocusError,
    DimensionMismatchError,
    DomainError,
    FileFormatError,
    NotPositiveDefiniteError,
    NotPsdError,
    NumericalError,
    OutOfBallError,
    PreconditionError,
    RankDeficientError,
)
from .filtering import FilterConfig, run_experiment, trajectory_csv, trajectory_summary
from .fixed_rank import (
    FixedRankMeanConfig,
    factorize,
    mean_n,
    mean_two,
    verify_properties,
)
from .grassmann import _log_map
from .linalg import spd_sqrt
from .matio import matrix_file_text, read_matrix_file
from .sampling import clustered_fixed_rank
from .spd import SpdMeanConfig

EXIT_OK = 0
EXIT_PROPERTY_FAILURE = 1
EXIT_PRECONDITION = 2
EXIT_CONVERGENCE = 3

ALM_INPUT_CAP = 8

_REASON_SLUGS = (
    (CutLocusError, "cut-locus"),
    (OutOfBallError, "out-of-ball"),
    (AmbiguousSubspaceError, "ambiguous-subspace"),
    (RankDeficientError, "rank-deficient"),
    (NotPsdError, "not-psd"),
    (NotPositiveDefiniteError, "not-positive-definite"),
    (FileFormatError, "file-format"),
    (DimensionMismatchError, "dimension-mismatch"),
    (DomainError, "domain"),
)


def _slug(exc):
    for cls, slug in _REASON_SLUGS:
        if isinstance(exc, cls):
            return slug
    return "precondition"


def _resolve_seed(value):
    if value is not None:
        return value
    env = os.environ.get("RANKMEAN_SEED")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise DomainError(f"RANKMEAN_SEED={env!r} is not an integer") from exc
    return 0


def _parse_weights(text, count):
    if text is None:
        return None
    try:
        weights = tuple(float(tok) for tok in text.split(","))
    except ValueError as exc:
        raise DomainError(f"--weights must be comma-separated numbers, got {text!r}") from exc
    if len(weights) != count:
        raise DomainError(f"--weights lists {len(weights)} values for {count} inputs")
    return weights


def _load_inputs(paths, rank):
    """Read matrix files into factored form, factorizing dense-only files."""
    inputs = []
    for path in paths:
        mf = read_matrix_file(path)
        if mf.factor is not None and (rank is None or rank == mf.p):
            inputs.append(mf.factor)
            continue
        r = rank if rank is not None else mf.p
        if r == 0:
            raise DomainError(
                f"{path} declares no rank and --rank was not given"
            )
        inputs.append(factorize(mf.dense, r))
    if not inputs:
        raise DomainError("no input files")
    n, p = inputs[0].n, inputs[0].p
    for path, m in zip(paths, inputs):
        if (m.n, m.p) != (n, p):
            raise DimensionMismatchError(
                f"{path} has size ({m.n}, {m.p}), expected ({n}, {p})"
            )
    return inputs


def _mean_config(args, count):
    weights = _parse_weights(getattr(args, "weights", None), count)
    return FixedRankMeanConfig(
        spd_config=SpdMeanConfig(
            method=args.method,
            max_iterations=args.max_iter,
            tolerance=args.tol,
        ),
        subspace_method=args.subspace,
        weights=weights,
    )


def cmd_mean(args):
    inputs = _load_inputs(args.inputs, args.rank)
    if args.method == "alm" and len(inputs) > ALM_INPUT_CAP:
        raise DomainError(
            f"method=alm accepts at most {ALM_INPUT_CAP} inputs "
            f"(cost blows up recursively), got {len(inputs)}"
        )
    diagnostics = {}
    if args.alpha is not None:
        if len(inputs) != 2:
            raise DomainError("--alpha applies to exactly two inputs")
        result = mean_two(inputs[0], inputs[1], args.alpha)
        diagnostics.update(iterations=0, residual=0.0, backend="python")
    else:
        config = _mean_config(args, len(inputs))
        result = mean_n(inputs, config, diagnostics=diagnostics)

    # Post-hoc residuals: gradient of the subspace objective at the returned
    # span, and the first-order residual of the shape mean.
    weights = np.full(len(inputs), 1.0 / len(inputs))
    if getattr(args, "weights", None) and args.alpha is None:
        weights = np.asarray(_parse_weights(args.weights, len(inputs)), dtype=float)
        weights = weights / weights.sum()
    elif args.alpha is not None:
        weights = np.array([1.0 - args.alpha, args.alpha])
    tangent = sum(
        wi * _log_map(result.basis, m.basis) for wi, m in zip(weights, inputs)
    )
    subspace_gradient = float(np.linalg.norm(tangent))

    text = matrix_file_text(result.dense(), result)
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    summary = (
        f"inputs={len(inputs)} n={result.n} p={result.p} "
        f"backend={diagnostics.get('backend', '-')} "
        f"iterations={diagnostics.get('iterations', '-')} "
        f"shape_residual={diagnostics.get('residual', float('nan')):.3e} "
        f"subspace_gradient={subspace_gradient:.3e}"
    )
    out_stream = sys.stdout if args.out else sys.stderr
    print(summary, file=out_stream)
    return EXIT_OK


def cmd_check(args):
    inputs = _load_inputs(args.inputs, args.rank)
    config = _mean_config(args, len(inputs))
    seed = _resolve_seed(args.seed)
    aggregate = {}
    order = []
    for trial in range(args.trials):
        report = verify_properties(inputs, config, rng=np.random.default_rng([seed, trial]))
        for check in report.checks:
            if check.name not in aggregate:
                aggregate[check.name] = {
                    "residual": 0.0,
                    "threshold": check.threshold,
                    "passed": True,
                    "applicable": False,
                    "note": check.note,
                }
                order.append(check.name)
            entry = aggregate[check.name]
            if check.applicable:
                entry["applicable"] = True
                if np.isfinite(check.residual):
                    entry["residual"] = max(entry["residual"], check.residual)
                entry["passed"] = entry["passed"] and check.passed
    rows = []
    for name in order:
        entry = aggregate[name]
        status = "pass" if entry["passed"] else "FAIL"
        if not entry["applicable"]:
            status = "skip"
        rows.append(
            {
                "property": name,
                "status": status,
                "max_residual": entry["residual"] if entry["applicable"] else None,
                "threshold": entry["threshold"],
                "note": entry["note"],
            }
        )
        residual = f"{entry['residual']:.3e}" if entry["applicable"] else "-"
        line = f"{name:32s} {status:5s} max_residual={residual} threshold={entry['threshold']:.1e}"
        if entry["note"] and not entry["applicable"]:
            line += f"  ({entry['note']})"
        print(line)
    if args.json:
        payload = {"trials": args.trials, "seed": seed, "properties": rows}
        with open(args.json, "w", encoding="ascii") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    failures = [r["property"] for r in rows if r["status"] == "FAIL"]
    if failures:
        print(f"failed: {', '.join(failures)}", file=sys.stderr)
        return EXIT_PROPERTY_FAILURE
    return EXIT_OK


def _truth_factor(args, seed):
    if args.truth == "random":
        rng = np.random.default_rng([seed, 1])
        z = rng.standard_normal((args.n, args.p))
        return z[:, 0] if args.p == 1 else z
    mf = read_matrix_file(args.truth)
    factor = mf.factor
    if factor is None:
        rank = mf.p if mf.p > 0 else args.p
        factor = factorize(mf.dense, rank)
    z = factor.basis @ spd_sqrt(factor.shape)
    return z[:, 0] if factor.p == 1 else z


def cmd_filter(args):
    seed = _resolve_seed(args.seed)
    config = FilterConfig(
        tau=args.tau_ratio * 1.0,
        dt=1.0,
        steps=args.steps,
        noise_level=args.noise,
        outlier_period=args.outlier_period,
        outlier_scale=args.outlier_scale,
        seed=seed,
    )
    truth = _truth_factor(args, seed)
    rows = run_experiment(config, truth)
    n = args.n if args.truth == "random" else np.asarray(truth).shape[0]
    csv_text = trajectory_csv(rows, n)
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    summary = trajectory_summary(rows)
    summary_line = (
        f"steps={summary['steps']} "
        f"avg_measurement_err_tail={summary['avg_measurement_err_tail']:.6e} "
        f"avg_estimate_err_tail={summary['avg_estimate_err_tail']:.6e} "
        f"max_measurement_err={summary['max_measurement_err']:.6e} "
        f"max_estimate_err={summary['max_estimate_err']:.6e}"
    )
    print(summary_line, file=sys.stdout if args.out else sys.stderr)
    return EXIT_OK


def _bench_backends(requested):
    if requested == "both":
        names = ["compiled", "python"] if _backend.compiled_available() else ["python"]
    elif requested == "auto":
        names = [_backend.active_backend()]
    else:
        if requested == "compiled" and not _backend.compiled_available():
            raise DomainError("the compiled backend is not available in this installation")
        names = [requested]
    return names


def cmd_bench(args):
    seed = _resolve_seed(args.seed)
    try:
        n_list = [int(tok) for tok in args.n_list.split(",")]
    except ValueError as exc:
        raise DomainError(f"--n-list must be comma-separated integers, got {args.n_list!r}") from exc
    if any(n < args.p for n in n_list):
        raise DomainError("every n must be at least p")
    config = FixedRankMeanConfig(
        spd_config=SpdMeanConfig(method="ls", tolerance=args.tol),
        subspace_method="chordal",
    )
    # Tight shape clusters keep the (n-independent) shape-mean iteration
    # count low so the timing is dominated by the part that scales with n.
    cases = {}
    rng = np.random.default_rng(seed)
    for n in n_list:
        cases[n] = clustered_fixed_rank(
            rng, n, args.p, args.count, subspace_radius=0.2, shape_spread=0.05
        )
    for backend in _bench_backends(args.backend):
        previous = _backend.set_backend(backend)
        try:
            times = {n: [] for n in n_list}
            for n in n_list:
                mean_n(cases[n], config)  # warm-up
            # Round-robin over sizes so background load drifts hit every
            # size alike instead of corrupting the size sweep.
            for _ in range(args.repeats):
                for n in n_list:
                    t0 = time.perf_counter()
                    mean_n(cases[n], config)
                    times[n].append(time.perf_counter() - t0)
            floors = []
            for n in n_list:
                med = float(np.median(times[n]))
                floor = float(np.min(times[n]))
                floors.append(floor)
                print(
                    f"backend={backend} n={n} p={args.p} count={args.count} "
                    f"median_ms={med * 1e3:.3f} min_ms={floor * 1e3:.3f} "
                    f"repeats={args.repeats}"
                )
            # The slope is fitted on the per-size minima: the workload is
            # deterministic, so scheduler noise is purely additive and the
            # minimum is the clean estimator of the cost.
            slope = float(
                np.polyfit(np.log(np.asarray(n_list, float)), np.log(floors), 1)[0]
            )
            print(f"backend={backend} fitted_slope={slope:.3f}")
        finally:
            _backend.set_backend(previous)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rankmean",
        description="Rank-preserving geometric means of fixed-rank PSD matrices",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_mean = sub.add_parser("mean", help="mean of matrix files")
    p_mean.add_argument("inputs", nargs="+", help="matrix files")
    p_mean.add_argument("--rank", type=int, default=None, help="rank for dense-only files")
    p_mean.add_argument("--method", choices=["ls", "alm"], default="ls")
    p_mean.add_argument("--subspace", choices=["chordal", "karcher"], default="chordal")
    p_mean.add_argument("--weights", default=None, help="comma-separated positive weights summing to 1")
    p_mean.add_argument("--alpha", type=float, default=None, help="two-input weighted shortcut")
    p_mean.add_argument("--tol", type=float, default=1e-10)
    p_mean.add_argument("--max-iter", type=int, default=200)
    p_mean.add_argument("--out", default=None, help="output matrix file (stdout if absent)")
    p_mean.set_defaults(func=cmd_mean)

    p_check = sub.add_parser("check", help="verify the geometric-mean properties")
    p_check.add_argument("inputs", nargs="+")
    p_check.add_argument("--rank", type=int, default=None)
    p_check.add_argument("--method", choices=["ls", "alm"], default="ls")
    p_check.add_argument("--subspace", choices=["chordal", "karcher"], default="chordal")
    p_check.add_argument("--weights", default=None)
    p_check.add_argument("--tol", type=float, default=1e-10)
    p_check.add_argument("--max-iter", type=int, default=200)
    p_check.add_argument("--trials", type=int, default=20)
    p_check.add_argument("--seed", type=int, default=None)
    p_check.add_argument("--json", default=None, help="also write the report as JSON")
    p_check.set_defaults(func=cmd_check)

    p_filter = sub.add_parser("filter", help="filtering experiment, CSV trajectory")
    p_filter.add_argument("--n", type=int, default=2)
    p_filter.add_argument("--p", type=int, default=1)
    p_filter.add_argument("--tau-ratio", type=float, default=50.0, help="tau / dt")
    p_filter.add_argument("--steps", type=int, default=500)
    p_filter.add_argument("--noise", type=float, default=0.5)
    p_filter.add_argument("--outlier-period", type=int, default=None)
    p_filter.add_argument("--outlier-scale", type=float, default=10.0)
    p_filter.add_argument("--seed", type=int, default=None)
    p_filter.add_argument("--truth", default="random", help="matrix file or 'random'")
    p_filter.add_argument("--out", default=None, help="CSV file (stdout if absent)")
    p_filter.set_defaults(func=cmd_filter)

    p_bench = sub.add_parser("bench", help="scaling benchmark over the ambient dimension")
    p_bench.add_argument("--p", type=int, default=5)
    p_bench.add_argument("--n-list", default="100,200,400,800")
    p_bench.add_argument("--count", type=int, default=10, help="matrices per mean")
    p_bench.add_argument("--repeats", type=int, default=15)
    p_bench.add_argument("--tol", type=float, default=1e-10)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument(
        "--backend", choices=["auto", "python", "compiled", "both"], default="both"
    )
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PreconditionError as exc:
        print(f"{_slug(exc)}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ConvergenceError, NumericalError) as exc:
        slug = "non-convergence" if isinstance(exc, ConvergenceError) else "numerical-failure"
        print(f"{slug}: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
