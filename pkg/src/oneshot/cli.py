"""``oneshot`` command line: generate, discrepancy, funcs, run, evolve, report, plan."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .benchfuncs import FUNCTION_IDS, get_function
from .discrepancy import (
    WorkBudgetExceeded,
    overhead_from_values,
    star_discrepancy_exact,
    star_discrepancy_lower_bound,
)
from .evolve import EvolveConfig, evolve_design
from .generators import GeneratorConfigError, GeneratorSpec, braaten_weller, first_primes, generate, load_permutations
from .harness import EXIT_CONFIG, ConfigError, describe_plan, execute, load_config, plan
from .pointset import Box, PointSetParseError, read_pointset, scale, unscale, write_pointset
from .report import VIEWS, MixedProvenanceError, export_view, read_records
from .surrogates import KINDS as SURROGATE_KINDS


def _spec_from_args(args) -> GeneratorSpec:
    if args.kind == "halton":
        return GeneratorSpec("halton", first_primes(args.dim), start_index=args.start)
    if args.kind == "gh":
        if args.perm_file:
            bases, perms = load_permutations(args.perm_file)
            return GeneratorSpec("gh", bases[: args.dim], perms[: args.dim], start_index=args.start)
        bw = braaten_weller(args.dim)
        return GeneratorSpec(bw.kind, bw.bases, bw.permutations, start_index=args.start, name="bw")
    if args.seed is None:
        raise GeneratorConfigError(f"--seed is required for {args.kind}")
    return GeneratorSpec(args.kind, seed=args.seed)


def cmd_generate(args) -> int:
    ps = generate(_spec_from_args(args), args.n, args.dim)
    if args.domain:
        ps = scale(ps, Box.cube(args.dim, *args.domain))
    if args.out:
        write_pointset(ps, args.out)
    else:
        for row in ps.points:
            print(" ".join(repr(float(v)) for v in row))
    return 0


def cmd_discrepancy(args) -> int:
    values, details = {}, {}
    for path in args.inputs:
        ps = read_pointset(path)
        if not ps.domain.is_unit():
            ps = unscale(ps)
        if args.lower_bound:
            res = star_discrepancy_lower_bound(ps, args.trials, args.seed)
        else:
            try:
                res = star_discrepancy_exact(ps)
            except WorkBudgetExceeded as exc:
                print(f"{path}: {exc}", file=sys.stderr)
                return 1
        values[str(path)] = res.value
        details[str(path)] = res.as_dict()
    if args.report == "json":
        print(json.dumps(details, indent=1))
    else:
        print(f"{'design':<40} {'D*':>10} {'overhead':>9}")
        for name, value, overhead in overhead_from_values(values):
            kind = "exact" if details[name]["exact"] else "lower bound"
            print(f"{name:<40} {value:>10.6f} {overhead:>8.1f}%  ({kind})")
    return 0


def cmd_funcs(args) -> int:
    print(f"{'fid':<14} {'category':<32} f*")
    for fid in FUNCTION_IDS:
        f = get_function(fid, args.dim)
        print(f"{fid:<14} {f.category:<32} {f.f_star:g}")
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.task:
        cfg = replace(cfg, tasks=tuple(args.task))
    summary = execute(cfg, args.out, workers=args.workers, log=sys.stderr)
    print(
        f"{summary.planned} cells: ran {summary.ran}, reused {summary.reused}, "
        f"skipped {summary.skipped}, failed {summary.failed}",
        file=sys.stderr,
    )
    return summary.exit_code


def cmd_plan(args) -> int:
    cfg = load_config(args.config)
    if args.task:
        cfg = replace(cfg, tasks=tuple(args.task))
    describe_plan(plan(cfg))
    return 0


def cmd_evolve(args) -> int:
    f = get_function(args.fid, args.dim)
    cfg = EvolveConfig(
        n=args.n, d=args.dim, iterations=args.iters, sigma=args.sigma, kind=args.kind,
        seed=args.seed, test_seed=args.test_seed, model_seed=args.seed,
        num_test_sets=args.test_sets, test_set_size=args.test_size,
    )

    def progress(it, accepted, value, best):
        if args.verbose and (it % 50 == 0 or it == cfg.iterations):
            print(f"iter {it:>5}  best mse {best:.6g}", file=sys.stderr)

    trace = evolve_design(cfg, f, progress=progress)
    write_pointset(trace.final, args.out)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "accepted", "fitness", "incumbent_fitness"])
            for r in trace.records:
                w.writerow([r.iteration, int(r.accepted), repr(r.fitness), repr(r.incumbent_fitness)])
    print(f"fitness {trace.initial_fitness:.6g} -> {trace.final_fitness:.6g}", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    records = read_records(args.inputs)
    kw = {}
    if args.n is not None and args.view in ("factors", "ratio-matrix", "ranks"):
        kw["n"] = args.n
    if args.kind:
        kw["kind"] = args.kind
    if args.view == "factors" and args.task:
        kw["task"] = args.task
    if args.view == "scaling" and args.baseline_n is not None:
        kw["baseline_n"] = args.baseline_n
    csv_path, json_path = export_view(args.view, records, args.out, **kw)
    print(f"wrote {csv_path} and {json_path}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oneshot", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"oneshot {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a design file")
    g.add_argument("--kind", choices=("halton", "gh", "lhs", "uniform"), required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--perm-file", help="digit permutations for gh (default: Braaten-Weller)")
    g.add_argument("--start", type=int, default=1, help="first sequence index")
    g.add_argument("--domain", type=float, nargs=2, metavar=("LO", "HI"), help="scale into [LO,HI]^d")
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    dsc = sub.add_parser("discrepancy", help="star discrepancy of design files")
    dsc.add_argument("--in", dest="inputs", nargs="+", required=True)
    mode = dsc.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", default=True)
    mode.add_argument("--lower-bound", action="store_true")
    dsc.add_argument("--trials", type=int, default=10_000)
    dsc.add_argument("--seed", type=int, default=0)
    dsc.add_argument("--report", choices=("table", "json"), default="table")
    dsc.set_defaults(func=cmd_discrepancy)

    fn = sub.add_parser("funcs", help="list the benchmark suite")
    fn.add_argument("--list", action="store_true")
    fn.add_argument("--dim", type=int, default=4)
    fn.set_defaults(func=cmd_funcs)

    for name, func, helptext in (("run", cmd_run, "execute an experiment grid"),
                                 ("plan", cmd_plan, "show the cells of an experiment grid")):
        r = sub.add_parser(name, help=helptext)
        r.add_argument("--config", required=True)
        r.add_argument("--task", action="append", choices=("opt", "surrogate", "regression"),
                       help="restrict to these tasks (repeatable)")
        if name == "run":
            r.add_argument("--out", required=True)
            r.add_argument("--workers", type=int, help="overrides ONESHOT_WORKERS and the config")
        r.set_defaults(func=func)

    ev = sub.add_parser("evolve", help="evolve a design for one function")
    ev.add_argument("--fid", choices=FUNCTION_IDS, required=True)
    ev.add_argument("--kind", choices=SURROGATE_KINDS, default="kriging")
    ev.add_argument("--n", type=int, default=125)
    ev.add_argument("--dim", type=int, default=4)
    ev.add_argument("--iters", type=int, default=2000)
    ev.add_argument("--sigma", type=float, default=0.05, help="mutation std as a fraction of the box width")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--test-seed", type=int, default=0)
    ev.add_argument("--test-sets", type=int, default=10)
    ev.add_argument("--test-size", type=int, default=10_000)
    ev.add_argument("--out", required=True)
    ev.add_argument("--trace")
    ev.add_argument("-v", "--verbose", action="store_true")
    ev.set_defaults(func=cmd_evolve)

    rp = sub.add_parser("report", help="aggregate a results file")
    rp.add_argument("--in", dest="inputs", required=True)
    rp.add_argument("--view", choices=VIEWS, required=True)
    rp.add_argument("--out", required=True, help="output stem; .csv and .json are written")
    rp.add_argument("--n", type=int)
    rp.add_argument("--kind")
    rp.add_argument("--task", choices=("opt", "surrogate", "regression"))
    rp.add_argument("--baseline-n", type=int, help="reference size for the scaling view (default 125)")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GeneratorConfigError, MixedProvenanceError) as exc:
        print(f"oneshot: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PointSetParseError, OSError, ValueError) as exc:
        print(f"oneshot: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
