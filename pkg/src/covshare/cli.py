"""covshare command-line interface.

Exit codes: 0 success, 2 usage, 3 data validation, 4 numerical failure.
"""

import argparse
import datetime as _dt
import os
import sys

import numpy as np

from . import __version__, em, experiments, gibbs, ranks
from .datafiles import (
    DataFileError,
    ensure_dir,
    load_groups,
    read_matrix_csv,
    sha256_file,
    write_json,
    write_jsonl,
    write_matrix_csv,
    write_rows_csv,
)
from .model import ModelError, NumericalError, SubspaceBasis
from .stiefel import OptimizerError, OptimizerOptions

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
V_TOL = 1e-6


class UsageError(Exception):
    pass


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _write_manifest(args, inputs, started, extra=None):
    opts = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in ("func", "inputs") and not k.startswith("_")
    }
    manifest = {
        "command": args.command,
        "options": opts,
        "seed": getattr(args, "seed", None),
        "inputs": [{"path": p, "sha256": sha256_file(p)} for p in inputs],
        "tool_version": __version__,
        "started": started,
        "finished": _now(),
    }
    if extra:
        manifest.update(extra)
    write_json(os.path.join(args.out, "manifest.json"), manifest)


def _load_subspace(path, p):
    v = read_matrix_csv(path)
    if v.shape[0] != p:
        raise DataFileError(f"{path}: subspace has {v.shape[0]} rows, data have p = {p}")
    if not 0 < v.shape[1] < p:
        raise DataFileError(f"{path}: need 0 < s < p columns, got s = {v.shape[1]}")
    err = np.abs(v.T @ v - np.eye(v.shape[1])).max()
    if err > V_TOL:
        raise DataFileError(f"{path}: columns are not orthonormal (max error {err:.3g})")
    # polar cleanup: same span, exactly orthonormal
    u, _, wt = np.linalg.svd(v, full_matrices=False)
    return SubspaceBasis(u @ wt)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_fit(args):
    started = _now()
    data = load_groups(args.inputs, args.demean)
    p = data[0].p
    if args.s >= p:
        raise UsageError(f"--s must be < p = {p}")
    opts = em.EmOptions(max_iters=args.max_iters, tol=args.tol, inner=OptimizerOptions())
    res = em.fit(data, args.s, opts)
    out = ensure_dir(args.out)
    write_matrix_csv(os.path.join(out, "V.csv"), res.v_hat.v)
    write_rows_csv(
        os.path.join(out, "trace.csv"),
        ["iteration", "log_marginal_likelihood"],
        list(enumerate(res.objective_trace)),
    )
    groups = []
    for path, d in zip(args.inputs, data):
        entry = {"file": path, "n": d.n}
        try:
            s2 = em.sigma2_plugin(res.v_hat, d)
            entry["sigma2"] = s2
            entry["gamma"] = em.goodness_of_fit(d, res.v_hat, s2)
        except NumericalError as exc:
            entry["error"] = str(exc)
        groups.append(entry)
    write_json(
        os.path.join(out, "diagnostics.json"),
        {
            "s": args.s,
            "p": p,
            "iterations": res.iterations,
            "converged": res.converged,
            "stop_reason": res.stop_reason,
            "groups": groups,
        },
    )
    _write_manifest(args, args.inputs, started)
    return EXIT_OK


def cmd_gibbs(args):
    started = _now()
    data = load_groups(args.inputs, args.demean)
    v = _load_subspace(args.subspace, data[0].p)
    if args.r > v.s:
        raise UsageError(f"--r {args.r} exceeds the subspace dimension s = {v.s}")
    if args.burnin >= args.iters:
        raise UsageError("--burnin must be smaller than --iters")
    cfg = gibbs.ChainConfig(
        n_iter=args.iters, burn_in=args.burnin, thin=args.thin, seed=args.seed
    )
    out = ensure_dir(args.out)
    if args.r != 2:
        print(
            f"note: r = {args.r}; angle/log-ratio summaries and regions need r = 2 and are skipped",
            file=sys.stderr,
        )
    for k, d in enumerate(data):
        ch = gibbs.run_chain(d, v, args.r, cfg, group_id=k)
        write_jsonl(os.path.join(out, f"chain_{k}.jsonl"), gibbs.chain_records(ch))
        write_matrix_csv(os.path.join(out, f"stein_{k}.csv"), gibbs.stein_estimator(ch, v))
        if args.r != 2:
            continue
        angle, logr = gibbs.chain_angle_logratio(ch)
        write_rows_csv(
            os.path.join(out, f"angles_{k}.csv"),
            ["iteration", "angle", "log_ratio"],
            zip(ch.iterations, angle, logr),
        )
        finite = np.isfinite(logr)
        region = gibbs.hull_peel_region(np.column_stack([angle[finite], logr[finite]]), 0.95)
        write_rows_csv(
            os.path.join(out, f"region_{k}.csv"),
            ["vertex", "angle", "log_ratio"],
            [(i, a, b) for i, (a, b) in enumerate(region.vertices)],
        )
    _write_manifest(args, args.inputs + [args.subspace], started)
    return EXIT_OK


def cmd_ranks(args):
    started = _now()
    data = load_groups(args.inputs, args.demean)
    per_group = []
    for path, d in zip(args.inputs, data):
        est = ranks.estimate_group_rank(d)
        per_group.append(
            {
                "file": path,
                "n": d.n,
                "r_hat": est.rank,
                "threshold": est.threshold,
                "median_singular_value": est.median_sv,
                "beta": est.beta,
            }
        )
    pooled = ranks.estimate_shared_dimension(data)
    out = ensure_dir(args.out)
    write_json(
        os.path.join(out, "ranks.json"),
        {
            "groups": per_group,
            "pooled": {
                "s_hat": pooled.rank,
                "threshold": pooled.threshold,
                "median_singular_value": pooled.median_sv,
                "beta": pooled.beta,
            },
        },
    )
    _write_manifest(args, args.inputs, started)
    return EXIT_OK


_DEFAULT_REPS = {"table1": 10, "coverage": 200, "accuracy": 20}


def cmd_simulate(args):
    started = _now()
    reps = args.reps or _DEFAULT_REPS[args.experiment]
    if args.experiment == "table1":
        report = experiments.run_table1(replications=reps, seed=args.seed)
    elif args.experiment == "coverage":
        if reps < 50:
            raise UsageError("coverage needs --reps >= 50")
        report = experiments.run_coverage(replications=reps, seed=args.seed)
    else:
        report = experiments.run_accuracy_vs_k(replications=reps, seed=args.seed)
    out = ensure_dir(args.out)
    report.write_csv(os.path.join(out, f"{args.experiment}.csv"))
    # timing lives in the manifest so the summary itself is reproducible
    report.write_json(os.path.join(out, f"{args.experiment}.json"), include_timing=False)
    _write_manifest(
        args, [], started, {"wall_clock_seconds": round(report.wall_clock, 3), "replications": reps}
    )
    return EXIT_OK


def cmd_gof(args):
    started = _now()
    data = load_groups(args.inputs, args.demean)
    v = _load_subspace(args.subspace, data[0].p)
    rows = []
    for k, (path, d) in enumerate(zip(args.inputs, data)):
        try:
            s2 = em.sigma2_plugin(v, d)
            rows.append((k, path, em.goodness_of_fit(d, v, s2), s2, ""))
        except NumericalError as exc:
            rows.append((k, path, "", "", str(exc)))
    out = ensure_dir(args.out)
    write_rows_csv(
        os.path.join(out, "gof.csv"), ["group", "file", "gamma", "sigma2", "error"], rows
    )
    _write_manifest(args, args.inputs + [args.subspace], started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(sp, inputs=True):
    if inputs:
        sp.add_argument("inputs", nargs="+", help="group data CSVs (rows are observations)")
        sp.add_argument(
            "--demean", action="store_true", help="subtract column means (n drops by one)"
        )
    sp.add_argument("--out", required=True, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="covshare", description="Shared-subspace covariance estimation for groups."
    )
    parser.add_argument("--version", action="version", version=f"covshare {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fit", help="EM estimate of the shared subspace")
    _add_common(sp)
    sp.add_argument("--s", type=_positive_int, required=True, help="subspace dimension")
    sp.add_argument("--max-iters", type=_positive_int, default=200)
    sp.add_argument("--tol", type=_positive_float, default=1e-8)
    sp.add_argument("--seed", type=_nonneg_int, default=0)
    sp.set_defaults(func=cmd_fit, _parser=sp)

    sp = sub.add_parser("gibbs", help="posterior chains given a subspace")
    _add_common(sp)
    sp.add_argument("--subspace", required=True, help="p x s CSV with orthonormal columns")
    sp.add_argument("--r", type=_nonneg_int, required=True, help="number of spikes")
    sp.add_argument("--iters", type=_positive_int, default=5000)
    sp.add_argument("--burnin", type=_nonneg_int, default=1000)
    sp.add_argument("--thin", type=_positive_int, default=2)
    sp.add_argument("--seed", type=_nonneg_int, default=0)
    sp.set_defaults(func=cmd_gibbs, _parser=sp)

    sp = sub.add_parser("ranks", help="rank and shared-dimension selection")
    _add_common(sp)
    sp.set_defaults(func=cmd_ranks, _parser=sp)

    sp = sub.add_parser("simulate", help="replicated simulation experiments")
    _add_common(sp, inputs=False)
    sp.add_argument("--experiment", required=True, choices=sorted(_DEFAULT_REPS))
    sp.add_argument("--reps", type=_positive_int, default=None)
    sp.add_argument("--seed", type=_nonneg_int, default=0)
    sp.set_defaults(func=cmd_simulate, _parser=sp)

    sp = sub.add_parser("gof", help="goodness of fit of a subspace per group")
    _add_common(sp)
    sp.add_argument("--subspace", required=True, help="p x s CSV with orthonormal columns")
    sp.set_defaults(func=cmd_gof, _parser=sp)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    try:
        return args.func(args)
    except UsageError as exc:
        args._parser.print_usage(sys.stderr)
        print(f"covshare {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, OptimizerError, np.linalg.LinAlgError) as exc:
        print(f"covshare {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataFileError, ModelError) as exc:
        print(f"covshare {args.command}: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
