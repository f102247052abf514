#! /usr/bin/env python3

from __future__ import division

import argparse
import json
import sys

import pandas as pd
from terminaltables import AsciiTable

from sketchlab import bench
from sketchlab.lsr import residual_ratio_trial
from sketchlab.utils.datasets import GENERATORS, generate
from sketchlab.utils.matrix_io import sidecar_path, write_matrix
from sketchlab.utils.utils import (
    RNG_ALGORITHM, AcceptanceViolation, InvalidArgument, RngStream, SketchlabError, print_environment_info)


EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2

AUDIT_ORDERS = (128, 512, 1024)


def _add_common(parser):
    parser.add_argument("-c", "--config", type=str, default=None, help="Path to experiment config file (.cfg or .json)")
    parser.add_argument("--seed", type=int, default=None, help="Base seed; trial i uses seed ^ i")
    parser.add_argument("--trials", type=int, default=None, help="Number of trials")
    parser.add_argument("-o", "--out", type=str, default=None, help="Path to the report file")
    parser.add_argument("--format", type=str, choices=("json", "csv"), default="json", help="Report format")


def build_parser():
    parser = argparse.ArgumentParser(prog="sketchlab", description="Low-rank approximation with structured multipliers.")
    sub = parser.add_subparsers(dest="command")
    sub.required = True

    gen = sub.add_parser("gen", help="Generate an input matrix with a JSON sidecar")
    gen.add_argument("--kind", type=str, choices=[g for g in GENERATORS if g != "file"], default="svd",
                     help="Input generator")
    gen.add_argument("--m", type=int, default=None, help="Rows (factor-gaussian)")
    gen.add_argument("--n", type=int, default=256, help="Order or columns")
    gen.add_argument("--r", type=int, default=8, help="Rank (svd, factor-gaussian)")
    gen.add_argument("--preset", type=str, default="small", help="Finite-difference preset")
    gen.add_argument("--noise", type=float, default=0.0, help="Spectral norm of the additive noise (factor-gaussian)")
    gen.add_argument("--seed", type=int, default=0, help="Seed of the generator")
    gen.add_argument("-o", "--out", type=str, required=True, help="Path to the matrix file")

    for name, description in (("approx", "Run range finder trials"),
                              ("recursive", "Run recursive range finder trials")):
        p = sub.add_parser(name, help=description)
        _add_common(p)
        p.add_argument("--matrix", type=str, default=None, help="Input matrix file (SKLB or TSV)")
        p.add_argument("--multiplier", type=str, default=None, help="Recipe name or descriptor JSON")
        p.add_argument("--l", type=int, default=None, help="Number of multiplier columns")
        p.add_argument("--tau", type=str, default=None, help="Error tolerance, 'auto' or 'bound'")
        p.add_argument("--power_iterations", type=int, default=None, help="Power iterations")
        p.add_argument("--workers", type=int, default=None, help="Worker threads")
        p.add_argument("--logdir", type=str, default=None, help="Tensorboard log directory")
        if name == "recursive":
            p.add_argument("--blocks", type=str, default=None,
                           help="Comma separated block sizes adding up to n, defaults to the config's or 8,8,16,32,...")
        p.add_argument("--expect_success", action="store_true", help="Exit 1 unless every trial succeeds")

    lsr = sub.add_parser("lsr", help="Residual ratios of sketch-and-solve least squares")
    _add_common(lsr)
    lsr.add_argument("--m", type=int, default=2000, help="Rows")
    lsr.add_argument("--d", type=int, default=10, help="Columns")
    lsr.add_argument("--k", type=int, default=None, help="Sketch rows, defaults to 4(d+1)")
    lsr.add_argument("--sketch", type=str, choices=("gaussian", "asph", "orthogonal"), default="asph",
                     help="Sketch family")
    lsr.add_argument("--primal", action="store_true", help="Random sketch on a fixed matrix instead of the dual setting")
    lsr.add_argument("--xi", type=float, default=0.5, help="Accepted distortion")
    lsr.add_argument("--min_fraction", type=float, default=0.9, help="Required fraction of ratios within 1 +- xi")

    tab = sub.add_parser("bench", help="Reproduce one of the tables 2 to 9")
    _add_common(tab)
    tab.add_argument("--table", type=int, required=True, help="Table id (2..9)")
    tab.add_argument("--scale", type=str, choices=("desk", "full"), default="desk", help="Desk or full protocol")
    tab.add_argument("--workers", type=int, default=1, help="Worker threads")

    audit = sub.add_parser("audit", help="Flop and random-variable audit of the multiplier families")
    audit.add_argument("--n", type=int, nargs="*", default=list(AUDIT_ORDERS), help="Orders to audit")
    audit.add_argument("--d", type=int, default=3, help="Abridgement depth")
    audit.add_argument("--q", type=int, default=10, help="Sparsity of the circulant families")
    audit.add_argument("--families", type=str, default=None, help="Comma separated family names")
    audit.add_argument("-o", "--out", type=str, default=None, help="Path to a CSV of the audit rows")

    norms = sub.add_parser("mc-norms", help="Monte Carlo check of the Gaussian norm bounds")
    norms.add_argument("--m", type=int, default=200, help="Rows")
    norms.add_argument("--n", type=int, default=100, help="Columns")
    norms.add_argument("--trials", type=int, default=500, help="Number of samples")
    norms.add_argument("--seed", type=int, default=0, help="Seed")
    norms.add_argument("--t", type=float, default=2.0, help="Tail offset")
    return parser


def _experiment_config(args):
    overrides = {
        "seed": args.seed,
        "trials": args.trials,
        "multiplier": args.multiplier,
        "l": args.l,
        "power_iterations": args.power_iterations,
        "workers": args.workers,
        "logdir": args.logdir,
    }
    if args.tau is not None:
        overrides["tau"] = args.tau if args.tau in ("auto", "bound") else float(args.tau)
    if args.matrix is not None:
        overrides["input"] = "file"
        overrides["input_params"] = {"path": args.matrix}
        overrides["fresh_input"] = False
    if getattr(args, "blocks", None) is not None:
        overrides["block_sizes"] = [int(b) for b in args.blocks.split(",") if b.strip()]
    if args.config:
        cfg = bench.load_experiment_config(args.config, **overrides)
    else:
        cfg = bench.ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    if args.command == "recursive" and not cfg.block_sizes:
        cfg = cfg.replace(block_sizes="doubling")
    return cfg


def cmd_gen(args):
    if args.kind == "svd":
        params = {"n": args.n, "r": args.r}
    elif args.kind == "laplacian":
        params = {"n": args.n}
    elif args.kind == "finite-difference":
        params = {"preset": args.preset}
    else:
        params = {"m": args.m or args.n, "n": args.n, "r": args.r, "noise_norm": args.noise}
    M = generate(args.kind, params, RngStream(args.seed))
    write_matrix(args.out, M, sidecar={"kind": args.kind, "params": params, "seed": args.seed,
                                       "rng": RNG_ALGORITHM, "shape": list(M.shape)})
    print(f"Wrote {M.shape[0]}x{M.shape[1]} {args.kind} matrix to {args.out} (sidecar {sidecar_path(args.out)})")
    return EXIT_OK


def cmd_approx(args):
    cfg = _experiment_config(args)
    print(f"Experiment: {cfg}")
    report = bench.run_experiment(cfg)
    bench.print_report(report)
    if args.out:
        report.save(args.out, args.format)
    if args.expect_success and report.success_rate < 1.0:
        raise AcceptanceViolation(f"{report.success_rate:.3f} of the trials succeeded")
    return EXIT_OK


def cmd_lsr(args):
    k = args.k if args.k is not None else 4 * (args.d + 1)
    trials = args.trials if args.trials is not None else 200
    seed = args.seed if args.seed is not None else 0
    summary = residual_ratio_trial(args.m, args.d, k, args.sketch, trials, RngStream(seed), dual=not args.primal)
    fraction = summary.fraction_within(args.xi)
    table = [["sketch", "m", "d", "k", "mean ratio", "q05", "q95", f"within 1+-{args.xi:g}"],
             [args.sketch, args.m, args.d, k, f"{summary.mean:.4f}", f"{summary.quantiles[0.05]:.4f}",
              f"{summary.quantiles[0.95]:.4f}", f"{fraction:.3f}"]]
    print(AsciiTable(table, " Residual ratios ").table)
    if args.out:
        with open(args.out, "w") as fp:
            json.dump({"schema_version": bench.SCHEMA_VERSION, "m": args.m, "d": args.d, "k": k,
                       "sketch": args.sketch, "seed": seed, "samples": summary.samples.tolist(),
                       "mean": summary.mean, "fraction_within": fraction}, fp, indent=2)
    if fraction < args.min_fraction:
        raise AcceptanceViolation(f"only {fraction:.3f} of the ratios within 1 +- {args.xi}")
    return EXIT_OK


def cmd_bench(args):
    seed = args.seed if args.seed is not None else 0
    table = bench.reproduce_table(args.table, args.scale, args.trials, seed, args.workers, progress=True)
    table.print_table()
    if args.out:
        table.save(args.out, args.format)
    if not table.all_within():
        raise AcceptanceViolation(f"table {args.table}: some means fall outside their bracket")
    return EXIT_OK


def cmd_audit(args):
    families = args.families.split(",") if args.families else None
    rows = []
    for n in args.n:
        rows.extend(bench.flop_audit(families, n, {"d": args.d, "q": args.q}))
    bench.print_audit(rows)
    if args.out:
        pd.DataFrame([row._asdict() for row in rows]).to_csv(args.out, index=False)
    failed = [f"{row.family} (n={row.n})" for row in rows if not row.ok]
    if failed:
        raise AcceptanceViolation(f"flop audit failed for {', '.join(failed)}")
    return EXIT_OK


def cmd_mc_norms(args):
    summary = bench.monte_carlo_gaussian_norms(args.m, args.n, args.trials, RngStream(args.seed), args.t)
    table = [["quantity", "empirical", "bound", "ok"],
             ["E||G||", f"{summary.mean_norm:.4f} +- {summary.se_norm:.4f}", f"{summary.norm_bound:.4f}",
              summary.norm_ok],
             ["E||G^+||", f"{summary.mean_pinv:.4f} +- {summary.se_pinv:.4f}", f"{summary.pinv_bound:.4f}",
              "skipped" if summary.pinv_ok is None else summary.pinv_ok],
             ["P{||G|| > t+sqrt(m)+sqrt(n)}", f"{summary.tail_fraction:.4f}", f"{summary.tail_bound:.4f}",
              summary.tail_ok]]
    if summary.pinv_tail_ok is not None:
        table.append(["P{||G^+|| >= 4.7 sqrt(n)}", f"{summary.pinv_tail_fraction:.4f}",
                      f"{summary.pinv_tail_bound:.4f}", summary.pinv_tail_ok])
    print(AsciiTable(table, f" Gaussian norms {args.m}x{args.n} ").table)
    if summary.notice:
        print(f"Notice: {summary.notice}")
    if not bench.norms_ok(summary):
        raise AcceptanceViolation("an empirical Gaussian norm exceeds its bound")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "approx": cmd_approx,
    "recursive": cmd_approx,
    "lsr": cmd_lsr,
    "bench": cmd_bench,
    "audit": cmd_audit,
    "mc-norms": cmd_mc_norms,
}


def main(argv=None):
    """Parses ``argv`` and runs the subcommand; returns the exit code (2 on usage errors)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    print(f"Command line arguments: {args}")
    try:
        return COMMANDS[args.command](args)
    except AcceptanceViolation as exc:
        print(f"Acceptance violation: {exc}")
        return EXIT_VIOLATION
    except InvalidArgument as exc:
        print(f"Invalid argument: {exc}")
        return EXIT_USAGE
    except SketchlabError as exc:
        print(f"Error: {exc}")
        return EXIT_VIOLATION


def run():
    print_environment_info()
    sys.exit(main())


if __name__ == '__main__':
    run()
