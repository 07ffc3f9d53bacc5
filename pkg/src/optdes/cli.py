"""Command-line front end: ``optdes {run,eval,moment,bench}``.

Exit codes: 0 success, 1 usage or validation error, 2 finished but the
resulting design is singular.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bench
from .criteria import CriterionKind, d_score, iv_score, moment_matrix, relative_efficiency
from .model import SecondOrderModel, num_params, read_design_csv, write_text_atomic
from .pso import PsoConfig, Topology, TopologyKind, run

EXIT_OK, EXIT_USAGE, EXIT_SINGULAR = 0, 1, 2
MAX_FACTORS = 6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _h(x: float) -> str:
    return format(float(x), ".6g")


def _factors(K: int) -> int:
    if not 1 <= K <= MAX_FACTORS:
        raise UsageError(f"--factors must be between 1 and {MAX_FACTORS}, got {K}")
    return K


def _positive(name: str, value: int) -> int:
    if value < 1:
        raise UsageError(f"{name} must be >= 1, got {value}")
    return value


def _csv_list(text: str, parse) -> list:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise UsageError(f"empty list: {text!r}")
    try:
        return [parse(t) for t in items]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _print_design(X) -> None:
    for row in np.atleast_2d(X):
        print("  " + "  ".join(f"{v: .6f}" for v in row))


# -- run ----------------------------------------------------------------------


def cmd_run(args) -> int:
    K = _factors(args.factors)
    N = _positive("--points", args.points)
    overrides = {}
    if args.max_iter is not None:
        overrides["max_iterations"] = _positive("--max-iter", args.max_iter)
    try:
        config = PsoConfig(
            swarm_size=_positive("--swarm-size", args.swarm_size),
            topology=Topology(TopologyKind.parse(args.topology)),
            seed=args.seed,
            **overrides,
        )
        config.validate(N * K)
        kind = CriterionKind.parse(args.criterion)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    result = run(kind, N, K, config)
    if args.out:
        write_text_atomic(args.out, json.dumps(bench.run_record(result), sort_keys=True, indent=2) + "\n")
    fit = result.best_fitness
    print(f"criterion {kind.value}  K={K} N={N}  S={config.swarm_size} topology={config.topology.tag.value} seed={config.seed}")
    print(f"best value: {'singular' if fit.singular else bench.fmt17(fit.value)}")
    print(f"iterations: {result.iterations}  function evaluations: {result.function_evaluations}  stop: {result.stop_reason.value}")
    print("best design:")
    _print_design(result.best_design)
    return EXIT_SINGULAR if fit.singular else EXIT_OK


# -- eval ---------------------------------------------------------------------


def cmd_eval(args) -> int:
    K = _factors(args.factors)
    try:
        X = read_design_csv(args.design, K)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    which = args.criterion.strip().lower()
    if which not in {"d", "i", "both"}:
        raise UsageError(f"--criterion must be D, I or both, got {args.criterion!r}")
    kinds = [CriterionKind.D, CriterionKind.I] if which == "both" else [CriterionKind.parse(which)]
    catalog = None
    if args.catalog:
        try:
            catalog = bench.ReferenceCatalog.load(args.catalog)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read catalog: {exc}") from None
    if args.reference is not None and len(kinds) != 1:
        raise UsageError("--reference needs a single --criterion (D or I)")

    model = SecondOrderModel(K)
    N = X.shape[0]
    singular = False
    for kind in kinds:
        val = d_score(X, model) if kind is CriterionKind.D else iv_score(X, model)
        singular |= val.singular
        print(f"{kind.value}: {'singular' if val.singular else bench.fmt17(val.value)}")
        ref = args.reference if args.reference is not None else (catalog.lookup(K, N, kind) if catalog else None)
        if ref is not None and not val.singular:
            if not ref > 0:
                raise UsageError("--reference must be positive")
            eff = relative_efficiency(kind, val.value, ref, model.p)
            print(f"{kind.value} relative efficiency: {_h(eff)}%")
    return EXIT_SINGULAR if singular else EXIT_OK


# -- moment -------------------------------------------------------------------


def cmd_moment(args) -> int:
    K = _factors(args.factors)
    mm = moment_matrix(K)
    terms = SecondOrderModel(K).term_order
    if args.json:
        print(json.dumps({"K": K, "V": mm.V, "terms": terms, "W": mm.W.tolist()}))
        return EXIT_OK
    print(f"K = {K}  p = {num_params(K)}  V = {_h(mm.V)}")
    width = max(10, max(len(t) for t in terms) + 2)
    print(" " * width + "".join(t.rjust(width) for t in terms))
    for name, row in zip(terms, mm.W):
        print(name.ljust(width) + "".join(_h(v).rjust(width) for v in row))
    return EXIT_OK


# -- bench --------------------------------------------------------------------


def _bench_scenarios(args) -> list[bench.Scenario]:
    if args.replicates is not None:
        _positive("--replicates", args.replicates)
    if args.paper_scale:
        replicates = args.replicates or bench.PAPER_REPLICATES
        sizes = bench.PAPER_SWARM_SIZES
    else:
        replicates = args.replicates or bench.DESK_REPLICATES
        sizes = bench.DESK_SWARM_SIZES
    if args.swarm_sizes:
        sizes = _csv_list(args.swarm_sizes, int)
    variants = _csv_list(args.variants, TopologyKind.parse)
    criteria = _csv_list(args.criteria, CriterionKind.parse)
    for s in sizes:
        _positive("--swarm-sizes", s)
    try:
        if args.scenarios:
            defaults = {"replicates": replicates, "root_seed": args.root_seed}
            return bench.load_scenarios(args.scenarios, defaults)
        if args.paper_grid or args.paper_scale:
            grid = bench.paper_grid()
        else:
            raise UsageError("choose --paper-grid, --paper-scale or --scenarios FILE")
        return bench.scenario_factorial(grid, sizes, variants, criteria, replicates, args.root_seed)
    except (OSError, TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot build scenarios: {exc}") from None


def cmd_bench(args) -> int:
    scenarios = _bench_scenarios(args)
    catalog = None
    if args.catalog:
        try:
            catalog = bench.ReferenceCatalog.load(args.catalog)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read catalog: {exc}") from None
    workers = args.workers if args.workers is not None else bench.default_workers()
    _positive("--workers", workers)
    overrides = {}
    if args.max_iter is not None:
        overrides["max_iterations"] = _positive("--max-iter", args.max_iter)
    try:
        for s in scenarios:
            s.config(**overrides).validate(s.N * s.K)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    results = bench.run_batch(scenarios, workers=workers, config_overrides=overrides)
    summaries = bench.write_batch(results, args.out_jsonl, args.out_csv, catalog)
    for s in summaries:
        sc = s.scenario
        ref = f"{s.reference_source}={_h(s.reference_value)}"
        print(
            f"{sc.fingerprint:<24} best={_h(s.best_value):>10} median={_h(s.median_value):>10} "
            f"P(success)={s.success_probability:.3f} P(>=95%)={s.prop_highly_efficient:.3f} "
            f"median_fevals={_h(s.median_function_evaluations)} ref[{ref}]"
        )
    return EXIT_OK


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="optdes", description="Exact D/I-optimal response-surface designs by particle swarm.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single swarm search")
    p.add_argument("--criterion", default="D", help="D or I")
    p.add_argument("--factors", "-K", type=int, required=True)
    p.add_argument("--points", "-N", type=int, required=True)
    p.add_argument("--swarm-size", type=int, default=50)
    p.add_argument("--topology", default="local", help="global or local")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--out", help="write the run record as JSON")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score a design CSV")
    p.add_argument("--design", required=True)
    p.add_argument("--factors", "-K", type=int, required=True)
    p.add_argument("--criterion", default="both", help="D, I or both")
    p.add_argument("--reference", type=float, help="reference criterion value for relative efficiency")
    p.add_argument("--catalog", help="reference catalog JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("moment", help="print the moment matrix")
    p.add_argument("--factors", "-K", type=int, required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_moment)

    p = sub.add_parser("bench", help="replicated benchmark batch")
    p.add_argument("--paper-grid", action="store_true", help="the 21 (K, N) scenarios")
    p.add_argument("--paper-scale", action="store_true", help="140 replicates, S in 50/150/500")
    p.add_argument("--scenarios", help="JSON list of scenario objects")
    p.add_argument("--replicates", type=int)
    p.add_argument("--swarm-sizes", help="comma list, e.g. 50,150")
    p.add_argument("--variants", default="local,global")
    p.add_argument("--criteria", default="D,I")
    p.add_argument("--workers", type=int, help="defaults to $OPTDES_WORKERS or 1")
    p.add_argument("--root-seed", type=int, default=0)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--catalog")
    p.add_argument("--out-jsonl", default="results.jsonl")
    p.add_argument("--out-csv", default="summary.csv")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"optdes {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
