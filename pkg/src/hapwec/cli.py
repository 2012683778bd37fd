"""Command-line entry point: ``simulate``, ``hapwec`` and ``sweep``.

Exit codes: 0 success, 1 numerical non-convergence (outputs still written),
2 usage or input error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .evaluation import (
    METHODS,
    SCENARIOS,
    default_jobs,
    emit_csv,
    emit_timings,
    read_manifest,
    run_sweep,
    scenario,
    spec_from_manifest,
    spec_to_manifest,
    summarize,
    write_manifest,
)
from .pipeline import WEIGHT_MODES, ReadSetError, reads_from_matrix, run_hapwec
from .simdata import FragmentFormatError, SimConfig, read_fragments, simulate, write_fragments, write_haplotypes
from .solver import SolverConfig

EXIT_OK, EXIT_NONCONVERGED, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("hapwec")


class UsageError(Exception):
    pass


def _solver_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--max-inner-iters", type=int, default=SolverConfig.max_inner_iters)
    g.add_argument("--inner-tol", type=float, default=SolverConfig.inner_tol)
    g.add_argument("--max-bisect-iters", type=int, default=SolverConfig.max_bisect_iters)
    g.add_argument("--constraint-tol", type=float, default=SolverConfig.constraint_tol)
    g.add_argument("--no-acceleration", action="store_true")


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        max_inner_iters=args.max_inner_iters,
        inner_tol=args.inner_tol,
        max_bisect_iters=args.max_bisect_iters,
        constraint_tol=args.constraint_tol,
        acceleration=not args.no_acceleration,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hapwec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a simulated fragment file and its true haplotypes")
    s.add_argument("--N", type=int, required=True, help="number of reads (rows)")
    s.add_argument("--l", type=int, required=True, help="haplotype length (columns)")
    samp = s.add_mutually_exclusive_group()
    samp.add_argument("--p", type=float, help="entrywise sampling rate")
    samp.add_argument("--coverage", type=int, help="reads per column (contiguous read-based sampling)")
    s.add_argument("--noise", type=float, default=0.0, help="fraction of observed entries flipped")
    s.add_argument("--quality-driven", action="store_true", help="flip each entry with its Phred error probability")
    s.add_argument("--mislabel", type=float, default=0.1, help="quality label swap rate (fixed-fraction noise)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, default=Path("."))

    h = sub.add_parser("hapwec", help="reconstruct haplotypes from a fragment file")
    h.add_argument("fragments", type=Path)
    h.add_argument("--weights", choices=WEIGHT_MODES, default="delta-aware")
    h.add_argument("--delta", type=float, default=None, help="constraint radius (default: expected noise norm)")
    h.add_argument("--delta-scale", type=float, default=1.0)
    h.add_argument("--alpha", type=float, default=0.5)
    h.add_argument("--out", type=Path, default=Path("."))
    _solver_args(h)

    w = sub.add_parser("sweep", help="Monte Carlo sweep written as CSV")
    w.add_argument("--scenario", choices=sorted(SCENARIOS), default=None)
    w.add_argument("--from-manifest", type=Path, default=None, help="rerun the sweep described by a manifest")
    w.add_argument("--n", type=int, default=None)
    w.add_argument("--seed", type=int, default=None)
    w.add_argument("--out", type=Path, default=Path("sweep_out"))
    w.add_argument("--jobs", type=int, default=default_jobs())
    w.add_argument("--axis", choices=("sampling", "noise"), default=None)
    w.add_argument("--axis-values", type=float, nargs="+", default=None)
    w.add_argument("--methods", choices=METHODS, nargs="+", default=None)
    w.add_argument("--N", type=int, default=None)
    w.add_argument("--l", type=int, default=None)
    w.add_argument("--p", type=float, default=None, help="fixed sampling rate when sweeping noise")
    w.add_argument("--coverage", type=int, default=None, help="use read-based sampling with this coverage")
    w.add_argument("--noise", type=float, default=None, help="fixed noise fraction when sweeping sampling")
    w.add_argument("--delta", type=float, default=None)
    w.add_argument("--delta-scale", type=float, default=None)
    w.add_argument("--weight-objective", choices=("delta-aware", "literal-eq13"), default=None)
    w.add_argument("--record-runtime", action="store_true", help="fill runtime_ms (output no longer reproducible)")
    _solver_args(w)
    return parser


def cmd_simulate(args) -> int:
    if args.noise and args.quality_driven:
        raise UsageError("--noise and --quality-driven are mutually exclusive")
    if args.coverage is not None:
        cfg = SimConfig(N=args.N, l=args.l, mode="read-based", coverage=args.coverage)
    else:
        cfg = SimConfig(N=args.N, l=args.l, sampling_rate=1.0 if args.p is None else args.p)
    cfg = replace(
        cfg,
        noise_mode="quality-driven" if args.quality_driven else "fixed-fraction",
        noise_fraction=args.noise,
        mislabel_rate=args.mislabel,
        seed=args.seed,
    )
    M, truth, Y, Q, flips = simulate(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    write_fragments(reads_from_matrix(Y, Q), args.out / "fragments.txt")
    write_haplotypes(truth, args.out / "truth.txt")
    manifest = {f"sim.{k}": v for k, v in asdict(cfg).items()}
    manifest.update(command="simulate", tool_version=__version__, observed=Y.n_observed, flipped=int(flips.sum()))
    write_manifest(manifest, args.out / "manifest.txt")
    print(f"wrote {args.out / 'fragments.txt'} ({Y.n_observed} observations, {int(flips.sum())} flipped)")
    return EXIT_OK


def cmd_hapwec(args) -> int:
    try:
        reads = read_fragments(args.fragments)
    except (OSError, FragmentFormatError, ReadSetError) as err:
        raise UsageError(f"cannot read {args.fragments}: {err}") from None
    cfg = _solver_config(args)
    try:
        pair, report, diag = run_hapwec(reads, cfg, args.weights, args.delta, args.delta_scale, args.alpha)
    except ReadSetError as err:
        raise UsageError(str(err)) from None
    args.out.mkdir(parents=True, exist_ok=True)
    write_haplotypes(pair, args.out / "haplotypes.txt")
    tol = cfg.constraint_tol * max(diag["delta"], 1e-12)
    rep = {
        "weight_mode": diag["weight_mode"],
        "a": diag["a"],
        "b": diag["b"],
        "delta": diag["delta"],
        "lambda": diag["lambda"],
        "residual": diag["residual"],
        "constraint_active": bool(diag["residual"] >= diag["delta"] - tol),
        "rank": diag["rank"],
        "bound": diag["bound"],
        "truncation_factor": diag["truncation_factor"],
        "iterations": diag["iterations"],
        "converged": diag["converged"],
        "solver_message": report.message,
        "uncallable_columns": diag["uncallable_columns"],
        "warnings": diag["warnings"],
    }
    write_manifest(rep, args.out / "report.txt")
    manifest = {f"solver.{k}": v for k, v in asdict(cfg).items()}
    manifest.update(
        command="hapwec",
        tool_version=__version__,
        fragments=str(args.fragments),
        weights=args.weights,
        delta=args.delta,
        delta_scale=args.delta_scale,
        alpha=args.alpha,
    )
    write_manifest(manifest, args.out / "manifest.txt")
    print(f"weights={diag['weight_mode']} a={diag['a']:.6g} delta={diag['delta']:.6g} rank={diag['rank']} converged={diag['converged']}")
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def _sweep_spec(args):
    if args.from_manifest is not None:
        if args.scenario is not None:
            raise UsageError("--scenario and --from-manifest are mutually exclusive")
        return spec_from_manifest(read_manifest(args.from_manifest))
    if args.scenario is None:
        raise UsageError("one of --scenario or --from-manifest is required")
    spec = scenario(args.scenario)
    sim = spec.sim
    over = {}
    if args.N is not None:
        sim = replace(sim, N=args.N)
    if args.l is not None:
        sim = replace(sim, l=args.l)
    if args.p is not None:
        sim = replace(sim, sampling_rate=args.p, mode="entrywise-sampling")
    if args.coverage is not None:
        sim = replace(sim, coverage=args.coverage, mode="read-based")
    if args.noise is not None:
        sim = replace(sim, noise_fraction=args.noise)
    for flag, key in (
        ("n", "n"),
        ("seed", "seed"),
        ("axis", "axis_name"),
        ("delta", "delta"),
        ("delta_scale", "delta_scale"),
        ("weight_objective", "weight_objective"),
    ):
        if getattr(args, flag) is not None:
            over[key] = getattr(args, flag)
    if args.axis_values is not None:
        over["axis_values"] = tuple(args.axis_values)
    if args.methods is not None:
        over["methods"] = tuple(args.methods)
    return replace(spec, sim=sim, solver=_solver_config(args), **over)


def cmd_sweep(args) -> int:
    try:
        spec = _sweep_spec(args)
    except (ValueError, KeyError, OSError) as err:
        raise UsageError(str(err)) from None
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    records = run_sweep(spec, jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    emit_csv(records, args.out / "results.csv", include_runtime=args.record_runtime)
    emit_timings(records, args.out / "timings.csv")
    write_manifest(spec_to_manifest(spec, {"command": "sweep"}), args.out / "manifest.txt")

    print(f"{'axis':>8} {'method':>8} {'n':>4} {'conv':>5} {'NRE':>10} {'NRE dB':>8} {'rr':>7}")
    for s in summarize(records):
        print(
            f"{s.axis_value:8.3g} {s.method:>8} {s.n:4d} {s.converged:5d} "
            f"{s.mean_nre:10.4g} {s.nre_db:8.2f} {s.mean_rr:7.4f}"
        )
    failed = sum(r.failed for r in records)
    if failed:
        print(f"{failed} of {len(records)} trials failed", file=sys.stderr)
    return EXIT_NONCONVERGED if failed == len(records) else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    handler = {"simulate": cmd_simulate, "hapwec": cmd_hapwec, "sweep": cmd_sweep}[args.command]
    try:
        return handler(args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"hapwec: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as err:
        print(f"hapwec: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
