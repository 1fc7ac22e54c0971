"""Command-line front end: ``fcpd generate|decompose|advise|crib|bench``."""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bench as bench_mod
from .als import AlsOptions, cp_als
from .crib import (
    advise_unfolding,
    crib4_full,
    crib4_orthomode_rankR,
    crib4_unfold_23,
    crib4_unfold_34,
    crib5_full,
    crib5_unfold_23_45,
    crib5_unfold_345,
    crib6_family,
    crib_rank2_general,
    crib_rank2_unfolded,
    estimate_collinearity,
)
from .errors import FcpdError, InvalidArgumentError
from .fcp import FcpOptions, fcp
from .io import read_kruskal, read_tensor, write_kruskal, write_tensor
from .synth import SynthSpec, generate, realized_snr, sae
from .tensor import UnfoldingRule, normalize

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4
EXIT_NO_FORM = 5

ESTIMATE_TIE_TOL = 0.02


class UsageError(Exception):
    pass


class NoClosedForm(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _emit(obj, fmt: str, table: str | None = None, out=None) -> None:
    out = out or sys.stdout
    if fmt == "json":
        out.write(json.dumps(obj, indent=2, default=_json_default) + "\n")
    elif fmt == "csv" and isinstance(obj, list):
        keys = list(obj[0]) if obj else []
        out.write(",".join(keys) + "\n")
        for row in obj:
            out.write(",".join("" if row[k] is None else str(row[k]) for k in keys) + "\n")
    else:
        out.write((table if table is not None else json.dumps(obj, default=_json_default)) + "\n")


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(type(x).__name__)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("FCPD_THREADS")
    if not env:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise UsageError(f"FCPD_THREADS must be an integer, got {env!r}") from None
    return max(n, 1)


def cmd_generate(args) -> int:
    spec = SynthSpec(args.shape, args.rank, args.collinearity, args.snr, seed=args.seed)
    noisy, truth = generate(spec)
    write_tensor(args.out, noisy)
    write_kruskal(args.truth, truth)
    snr = realized_snr(noisy, truth)
    info = {"tensor": args.out, "truth": args.truth, "realized_snr_db": snr}
    _emit(info, args.format, f"wrote {args.out} and {args.truth}; realized SNR {snr:.4f} dB")
    return EXIT_OK


def cmd_decompose(args) -> int:
    y = read_tensor(args.input)
    als_opts = AlsOptions(max_iters=args.max_iters, tol=args.tol, seed=args.seed,
                          init="svd" if args.alg != "als" else args.init)
    if args.alg == "als":
        k, report = cp_als(y, args.rank, als_opts)
        k = normalize(k)
        info = {"algorithm": "als", "fit": report.as_dict()}
        table = (f"als rank {args.rank}: fit {report.fit_percent:.4f}% after "
                 f"{report.iterations} iterations, {report.seconds:.3f} s")
    else:
        if args.rule is None:
            raise UsageError("--rule is required for fcp and r1fcp")
        opts = FcpOptions(
            rule=args.rule,
            tau=args.tau,
            mode="rank_one" if args.alg == "r1fcp" else "low_rank",
            refine=args.refine,
            restarts=args.restarts,
            unfolded_als=als_opts,
            refine_als=AlsOptions(max_iters=args.max_iters, tol=args.tol),
        )
        k, trace = fcp(y, args.rank, opts)
        info = {"algorithm": args.alg, **trace.as_dict()}
        stages = ", ".join(f"{name} {sec:.3f} s" for name, sec in trace.stage_seconds.items())
        table = (f"{args.alg} rank {args.rank} rule {trace.rule}: fit "
                 f"{trace.fit.fit_percent:.4f}%, {trace.fit.seconds:.3f} s ({stages})")
    if args.truth:
        rep = sae(read_kruskal(args.truth), k)
        info["msae_db"] = rep.msae_db
        info["median_db"] = rep.median_db
        table += f"\nMSAE {rep.msae_db:.2f} dB, median SAE {rep.median_db:.2f} dB"
    if args.out:
        write_kruskal(args.out, k)
        info["estimate"] = args.out
        table += f"\nwrote {args.out}"
    _emit(info, args.format, table)
    return EXIT_OK


def cmd_advise(args) -> int:
    tie_tol = args.tie_tol
    if args.collinearity is not None:
        profile = args.collinearity
    elif args.estimate is not None:
        profile = estimate_collinearity(normalize(read_kruskal(args.estimate))).c
        # estimated degrees scatter by about 0.01 around the true ones
        tie_tol = ESTIMATE_TIE_TOL if tie_tol is None else tie_tol
    else:
        raise UsageError("advise needs --collinearity or --from FILE")
    rule = advise_unfolding(profile, target_order=args.target_order,
                            ortho_threshold=args.ortho_threshold,
                            tie_tol=1e-9 if tie_tol is None else tie_tol)
    info = {"rule": str(rule), "collinearity": list(profile)}
    table = f"{rule}\ncollinearity {', '.join(f'{c:.4f}' for c in profile)}"
    _emit(info, args.format, table)
    return EXIT_OK


def _crib_reports(args):
    theta, I1 = args.theta, args.I1
    if args.ortho is not None:
        if len(args.ortho) != 2:
            raise UsageError("--ortho takes c2,c4")
        return list(crib4_orthomode_rankR(args.ortho[0], args.ortho[1], theta, I1, args.rank))
    if args.order == 6:
        if args.c is None:
            raise UsageError("order 6 needs a common --c")
        return crib6_family(args.c, theta, I1)
    if args.collinearity is None:
        raise UsageError("crib needs --collinearity, --order 6 --c, or --ortho")
    c = args.collinearity
    if args.rank != 2:
        raise NoClosedForm(f"no closed form for rank {args.rank} with a general profile")
    reports = [crib_rank2_general(c, theta, I1)]
    if len(c) == 4 and c[0] == 0:
        reports = [crib4_full(c, theta, I1), crib4_unfold_34(c, theta, I1),
                   crib4_unfold_23(c, theta, I1)]
    elif len(c) == 5 and c[0] == 0:
        reports = [crib5_full(c, theta, I1), crib5_unfold_345(c, theta, I1),
                   crib5_unfold_23_45(c, theta, I1)]
    for text in args.rule or []:
        reports.append(crib_rank2_unfolded(c, UnfoldingRule.parse(text), theta, I1))
    return reports


def cmd_crib(args) -> int:
    reports = _crib_reports(args)
    rows = [r.as_dict() for r in reports]
    lines = [f"{'bound':<8} {'rule':<18} {'CRIB':>12} {'dB':>9} {'loss dB':>8}"]
    for r in reports:
        loss = "" if r.loss_db is None else f"{r.loss_db:8.3f}"
        lines.append(f"{r.label:<8} {r.rule or '-':<18} {r.value:12.6g} {r.db:9.3f} {loss:>8}")
    _emit(rows, args.format, "\n".join(lines))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = bench_mod.preset(args.preset)
    changes = {}
    if args.reps is not None:
        changes["reps"] = args.reps
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.alg:
        changes["algorithms"] = tuple(args.alg)
    if args.refine:
        changes["refine"] = True
    if changes:
        cfg = cfg.replace(**changes)

    def progress(task):
        if args.verbose:
            _, case, rep = task
            print(f"case {cfg.cases[case].label} run {rep} done", file=sys.stderr)

    result = bench_mod.run_bench(cfg, threads=_threads(args), progress=progress)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(result.sae_csv())
    if args.summary:
        with open(args.summary, "w", newline="") as fh:
            fh.write(result.summary_csv())
    if args.format == "csv":
        sys.stdout.write(result.summary_csv() if args.out else result.sae_csv())
    elif args.format == "json":
        _emit(result.as_dict(), "json")
    else:
        print(result.table())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fcpd", description="Fast CP decomposition through tensor unfoldings.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def fmt(sp, default="table"):
        sp.add_argument("--format", choices=("csv", "json", "table"), default=default)

    g = sub.add_parser("generate", help="synthetic tensor with collinear factors")
    g.add_argument("--shape", type=_ints, required=True)
    g.add_argument("--rank", type=int, required=True)
    g.add_argument("--collinearity", type=_floats, required=True)
    g.add_argument("--snr", type=float, default=float("inf"), help="dB; omit for no noise")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="tensor.fcpt")
    g.add_argument("--truth", default="truth.fcpk")
    fmt(g)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("decompose", help="CPD of an FCPT file")
    d.add_argument("input")
    d.add_argument("--alg", choices=bench_mod.ALGORITHMS, default="fcp")
    d.add_argument("--rank", type=int, required=True)
    d.add_argument("--rule")
    d.add_argument("--tau", type=float, default=0.99)
    d.add_argument("--refine", action="store_true")
    d.add_argument("--init", choices=("svd", "gevd", "random"), default="svd")
    d.add_argument("--max-iters", type=int, default=1000)
    d.add_argument("--tol", type=float, default=1e-8)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--restarts", type=int, default=0, help="extra random starts for the unfolded CPD")
    d.add_argument("--out", help="write the estimate as FCPK")
    d.add_argument("--truth", help="FCPK ground truth for SAE reporting")
    fmt(d)
    d.set_defaults(func=cmd_decompose)

    a = sub.add_parser("advise", help="recommend an unfolding rule")
    a.add_argument("--collinearity", type=_floats)
    a.add_argument("--from", dest="estimate", help="FCPK estimate to read collinearity from")
    a.add_argument("--target-order", type=int, default=3)
    a.add_argument("--ortho-threshold", type=float, default=0.15)
    a.add_argument("--tie-tol", type=float,
                   help=f"coefficients this close count as equal (default 1e-9, {ESTIMATE_TIE_TOL} with --from)")
    fmt(a)
    a.set_defaults(func=cmd_advise)

    c = sub.add_parser("crib", help="closed-form CRIB values")
    c.add_argument("--collinearity", type=_floats)
    c.add_argument("--order", type=int)
    c.add_argument("--c", type=float, help="common collinearity for order 6")
    c.add_argument("--ortho", type=_floats, help="c2,c4 for the order-4 rank-R form")
    c.add_argument("--rank", type=int, default=2)
    c.add_argument("--rule", action="append", help="extra rule for the rank-2 unfolded bound")
    c.add_argument("--theta", type=float, default=1.0)
    c.add_argument("--I1", type=int, default=2)
    fmt(c)
    c.set_defaults(func=cmd_crib)

    b = sub.add_parser("bench", help="Monte-Carlo benchmark preset")
    b.add_argument("--preset", required=True)
    b.add_argument("--reps", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--alg", action="append", choices=bench_mod.ALGORITHMS)
    b.add_argument("--refine", action="store_true")
    b.add_argument("--threads", type=int)
    b.add_argument("--out", help="per-column SAE CSV")
    b.add_argument("--summary", help="aggregate CSV")
    b.add_argument("--verbose", action="store_true")
    fmt(b)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except NoClosedForm as exc:
        print(f"no closed form: {exc}", file=sys.stderr)
        return EXIT_NO_FORM
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FcpdError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
