"""Command-line interface: ``gw dist|estimate|ci|test|bootstrap|protein|mc-clt|t-demo``.

Every run writes one JSON report (``--out`` or stdout) that embeds the
configuration and seed; a short human-readable summary goes to stderr.
Exit codes: 0 success, 1 usage or input error, 2 statistical degeneracy.
"""

from __future__ import annotations

import argparse
import inspect
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .errors import DegenerateSample, GWError, NearNullDegenerate
from .fileio import dumps_report, ingest_csv, read_gaussian, write_table
from .gw import GaussianMeasure, empirical_gaussian, gw2, sample_gaussian
from .inference import (
    Site,
    bootstrap_m_of_n,
    bootstrap_n_of_n,
    ci_one_sample,
    ci_two_sample,
    default_m,
    protein_batch_test,
    test_equality,
    test_neighborhood,
)
from .limitlaw import NULL_DRAWS_DEFAULT
from .rng import DEFAULT_SEED, make_rng

EXIT_OK, EXIT_USAGE, EXIT_DEGENERATE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _gaussian_dict(P: GaussianMeasure) -> dict:
    return {"mean": P.mean.tolist(), "cov": P.cov.tolist()}


def _need(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required for '{args.command}'")


def _reference(args):
    """(Q, y): exactly one of --ref (parameter file) and --other (sample CSV)."""
    if (args.ref is None) == (args.other is None):
        raise UsageError("pass exactly one of --ref (Gaussian parameter file) or --other (sample CSV)")
    if args.ref is not None:
        return read_gaussian(args.ref), None
    return None, ingest_csv(args.other)


def cmd_dist(args) -> dict:
    _need(args, "input")
    if args.other is None and args.ref is None:
        raise UsageError("dist needs a second parameter file via --ref or --other")
    P = read_gaussian(args.input)
    Q = read_gaussian(args.ref if args.ref is not None else args.other)
    return {"gw2": gw2(P, Q), "P": _gaussian_dict(P), "Q": _gaussian_dict(Q)}


def cmd_estimate(args) -> dict:
    _need(args, "input")
    x = ingest_csv(args.input)
    Q, y = _reference(args)
    P_hat = empirical_gaussian(x)
    out = {"n": x.shape[0], "d": x.shape[1], "fitted": _gaussian_dict(P_hat)}
    if Q is not None:
        out.update(gw_hat=gw2(P_hat, Q), reference=_gaussian_dict(Q))
    else:
        Q_hat = empirical_gaussian(y)
        out.update(gw_hat=gw2(P_hat, Q_hat), m=y.shape[0], fitted_other=_gaussian_dict(Q_hat))
    return out


def cmd_ci(args) -> dict:
    _need(args, "input")
    x = ingest_csv(args.input)
    Q, y = _reference(args)
    if Q is not None:
        return {"mode": "one-sample", "interval": ci_one_sample(x, Q, args.alpha).as_dict()}
    return {"mode": "two-sample", "interval": ci_two_sample(x, y, args.alpha).as_dict()}


def cmd_test(args) -> dict:
    _need(args, "input")
    x = ingest_csv(args.input)
    Q, y = _reference(args)
    if args.mode == "neighborhood":
        if Q is None:
            raise UsageError("the neighbourhood test needs --ref")
        _need(args, "delta")
        return test_neighborhood(x, Q, args.delta, args.alpha).as_dict()
    rng = make_rng(args.seed, 1)
    return test_equality(x, ref=Q, y=y, alpha=args.alpha, null_draws=args.null_draws, rng=rng).as_dict()


def cmd_bootstrap(args) -> dict:
    _need(args, "input", "ref")
    x = ingest_csv(args.input)
    Q = read_gaussian(args.ref)
    rng = make_rng(args.seed, 2)
    if args.scheme == "n-of-n":
        bs = bootstrap_n_of_n(x, Q, B=args.b_reps, rng=rng)
    else:
        m = args.m if args.m is not None else default_m(x.shape[0])
        bs = bootstrap_m_of_n(x, Q, m=m, B=args.b_reps, rng=rng)
    if args.table:
        write_table([{"replicate": i, "value": v} for i, v in enumerate(bs.replicates.tolist())], args.table)
    return bs.as_dict()


def _synthetic_sites(k: int, n: int, seed: int, shift_sites: int = 0) -> list[Site]:
    """k sites drawn from their own N(ref, b I_3) reference; the first ``shift_sites`` are moved by 10 sigma."""
    sites = []
    for j in range(k):
        rng = make_rng(seed, (3, j))
        ref = rng.uniform(-20.0, 20.0, size=3)
        b = float(rng.uniform(0.2, 1.5))
        centre = ref + (10.0 * np.sqrt(b) * np.array([1.0, 0.0, 0.0]) if j < shift_sites else 0.0)
        x = sample_gaussian(GaussianMeasure(centre, b * np.eye(3)), n, rng)
        sites.append(Site(x, ref, b, f"site{j + 1}"))
    return sites


def _read_sites(path) -> list[Site]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return [Site(np.asarray(s["samples"], float), np.asarray(s["ref_mean"], float), float(s["b_factor"]), str(s.get("name", k))) for k, s in enumerate(doc["sites"])]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read site bundle {path}: {exc}") from None


def cmd_protein(args) -> dict:
    if args.input is not None:
        sites = _read_sites(args.input)
        source = {"input": str(args.input)}
    else:
        _need(args, "synthetic")
        n = args.n if args.n is not None else 20
        sites = _synthetic_sites(args.synthetic, n, args.seed, args.shifted)
        source = {"synthetic_sites": args.synthetic, "n": n, "shifted": args.shifted}
    reports = protein_batch_test(sites, args.alpha, args.null_draws, make_rng(args.seed, 4))
    rows = [
        {"site": r.nuisance["site"], "n": r.nuisance["n"], "b_factor": r.nuisance["b_factor"], "statistic": r.statistic, "p_value": r.p_value, "decision": r.decision}
        for r in reports
    ]
    if args.table:
        write_table(rows, args.table)
    return {
        "source": source,
        "threshold": reports[0].threshold if reports else None,
        "rejected": sum(r.decision == "reject" for r in reports),
        "skipped": sum(r.decision == "skipped" for r in reports),
        "sites": rows,
    }


def _call_with(func, **kwargs):
    params = inspect.signature(func).parameters
    return func(**{k: v for k, v in kwargs.items() if k in params and v is not None})


def cmd_mc_clt(args) -> dict:
    if args.criterion is not None:
        if args.criterion not in harness.CRITERIA:
            raise UsageError(f"criterion must be one of {sorted(harness.CRITERIA)}")
        func = harness.CRITERIA[args.criterion]
    else:
        func = harness.THEOREMS[args.theorem]
    result = _call_with(func, n=args.n, reps=args.reps, null_draws=args.null_draws_explicit, seed=args.seed)
    if args.criterion is None:
        result["criterion"] = None
        result["name"] = f"{args.theorem} theorem check"
    if args.table and "rows" in result["metrics"]:
        write_table(result["metrics"]["rows"], args.table)
    return result


def cmd_t_demo(args) -> dict:
    dofs = tuple(args.dof) if args.dof else (2.5, 5.0, 1e6)
    return _call_with(harness.t_demo, dofs=dofs, n=args.n, seed=args.seed)


COMMANDS = {
    "dist": cmd_dist,
    "estimate": cmd_estimate,
    "ci": cmd_ci,
    "test": cmd_test,
    "bootstrap": cmd_bootstrap,
    "protein": cmd_protein,
    "mc-clt": cmd_mc_clt,
    "t-demo": cmd_t_demo,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help=f"random seed (default {DEFAULT_SEED}, printed when unset)")
    common.add_argument("--out", type=Path, default=None, help="write the JSON report here instead of stdout")
    common.add_argument("--table", type=Path, default=None, help="also write a CSV table when the command has one")
    common.add_argument("--timing", action="store_true", help="keep wall-clock seconds in the report")

    data = _Parser(add_help=False)
    data.add_argument("--input", type=Path, default=None, help="sample CSV (header x1..xd) or parameter file")
    data.add_argument("--ref", type=Path, default=None, help="reference Gaussian parameter file")
    data.add_argument("--other", type=Path, default=None, help="second sample CSV (two-sample mode)")
    data.add_argument("--alpha", type=float, default=0.05)

    p = _Parser(prog="gw", description="Gaussian 2-Wasserstein distance: estimation, limit laws and inference.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("dist", parents=[common, data], help="closed-form gw2 between two parameter files")
    sub.add_parser("estimate", parents=[common, data], help="plug-in estimate from samples")
    sub.add_parser("ci", parents=[common, data], help="Wald confidence interval")
    t = sub.add_parser("test", parents=[common, data], help="equality or neighbourhood test")
    t.add_argument("--mode", choices=["equality", "neighborhood"], default="equality")
    t.add_argument("--delta", type=float, default=None)
    t.add_argument("--null-draws", type=int, default=NULL_DRAWS_DEFAULT)
    b = sub.add_parser("bootstrap", parents=[common, data], help="n-of-n or m-of-n bootstrap")
    b.add_argument("--scheme", choices=["n-of-n", "m-of-n"], default="n-of-n")
    b.add_argument("--m", type=int, default=None)
    b.add_argument("--b-reps", type=int, default=2000)
    pr = sub.add_parser("protein", parents=[common, data], help="per-site test against N(ref, b I_3)")
    pr.add_argument("--synthetic", type=int, default=None, help="generate this many synthetic sites instead of --input")
    pr.add_argument("--n", type=int, default=None, help="observations per synthetic site")
    pr.add_argument("--shifted", type=int, default=0, help="synthetic sites moved 10 sigma off their reference")
    pr.add_argument("--null-draws", type=int, default=NULL_DRAWS_DEFAULT)
    mc = sub.add_parser("mc-clt", parents=[common], help="Monte Carlo harness / acceptance criteria")
    mc.add_argument("--theorem", choices=sorted(harness.THEOREMS), default="one-sample")
    mc.add_argument("--criterion", type=int, default=None, help="run acceptance criterion 1-9 instead")
    mc.add_argument("--n", type=int, default=None)
    mc.add_argument("--reps", type=int, default=None)
    mc.add_argument("--null-draws", dest="null_draws_explicit", type=int, default=None)
    td = sub.add_parser("t-demo", parents=[common], help="multivariate-t lower-bound demo")
    td.add_argument("--dof", type=float, action="append", default=None)
    td.add_argument("--n", type=int, default=None)
    return p


def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if k != "seconds"}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def _summary(command: str, result: dict) -> str:
    if "passed" in result:
        return harness.summary_line(result)
    for key in ("gw2", "gw_hat"):
        if key in result:
            return f"{key} = {result[key]:.6g}"
    if "interval" in result:
        iv = result["interval"]
        return f"estimate {iv['estimate']:.6g}, interval [{iv['lower']:.6g}, {iv['upper']:.6g}]"
    if "decision" in result:
        return f"{result['method']}: statistic {result['statistic']:.6g}, threshold {result['threshold']:.6g} -> {result['decision']}"
    if "rejected" in result:
        return f"{result['rejected']} of {len(result['sites'])} sites rejected, {result['skipped']} skipped"
    if "replicates" in result or "scheme" in result:
        return f"{result['scheme']} bootstrap: B={result['B']}, m={result['m']}, sd={result['std']:.6g}"
    return command


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = DEFAULT_SEED
        print(f"seed: {DEFAULT_SEED} (default)", file=sys.stderr)
    try:
        result = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"gw {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateSample, NearNullDegenerate) as exc:
        print(f"gw {args.command}: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except GWError as exc:
        print(f"gw {args.command}: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in ("timing",)}
    report = {"command": args.command, "config": config, "result": result}
    if not args.timing:
        report = _strip_timing(report)
    text = dumps_report(report)
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(_summary(args.command, result), file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
