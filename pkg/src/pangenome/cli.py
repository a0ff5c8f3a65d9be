"""Command-line interface: ``expect``, ``simulate``, ``validate`` and ``figure2``.

Exit codes: 0 success, 1 usage or range error, 2 validation failures,
3 resource or convergence limit.
"""
from __future__ import annotations

import argparse
import itertools
import logging
import math
import sys
import time
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import agtg, analytics, moran, montecarlo
from .errors import NonConvergence, NotConverged, RangeError, ResourceLimit, SingularSystem
from .params import ModelParams, RngSpec, load_config, validate
from .report import RunReport, estimate, table_csv
from .stats import MCEstimate, aggregate, aggregate_groups

log = logging.getLogger("pangenome")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RESOURCE = 3

DEFAULTS = {
    "theta": 1.0,
    "rho": 1.0,
    "gamma": 0.0,
    "n": 1,
    "N": None,
    "seed": 0,
    "reps": 10_000,
    "burn_in": moran.DEFAULT_BURN_IN,
    "tol": 1e-12,
}
VALIDATE_DEFAULTS = {"theta": "1", "rho": "0.5,1,2", "gamma": "0", "n": 5, "N": 200, "reps": 2000}
FIGURE2_DEFAULTS = {"theta": 1.0, "rho": 2.0, "gamma": "0,1,3,10", "n": 10}
Z_LIMIT = 3.0
MORAN_RELATIVE_ALLOWANCE = 2.0  # times 1/N


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- parsing


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(p: argparse.ArgumentParser, *, grid: bool = False) -> None:
    kind = str if grid else float
    g = p.add_argument_group("model")
    g.add_argument("--theta", type=kind, help="gene gain rate" + (" (comma list)" if grid else ""))
    g.add_argument("--rho", type=kind, help="gene loss rate" + (" (comma list)" if grid else ""))
    g.add_argument("--gamma", type=kind, help="transfer rate" + (" (comma list)" if grid else ""))
    g.add_argument("-n", dest="n", type=int, help="sample size")
    g.add_argument("-N", dest="N", type=int, help="population size (forward simulation)")
    g.add_argument("--config", type=Path, help="key = value file; flags override it")
    o = p.add_argument_group("output")
    o.add_argument("--seed", type=int)
    o.add_argument("--tol", type=float, help="series truncation tolerance")
    o.add_argument("--format", choices=("json", "csv"), default="json")
    o.add_argument("--out", type=Path, help="write the report here instead of stdout")
    o.add_argument("--timing", action="store_true", help="include wall time (breaks byte-identity)")
    o.add_argument("-v", "--verbose", action="count", default=0)


def _mc(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("Monte Carlo")
    g.add_argument("--reps", type=int)
    g.add_argument("--threads", type=int, help=f"worker threads (default ${montecarlo.THREADS_ENV} or all cores)")
    g.add_argument("--burn-in", dest="burn_in", type=float, help="Moran burn-in in model time")
    g.add_argument("--epsilon-stop", dest="epsilon_stop", type=float, default=agtg.DEFAULT_EPSILON,
                   help="expected number of genes missed by the coupled sampler")
    g.add_argument("--resampling", choices=sorted(moran.RESAMPLING_RATES), default="paper",
                   help="Moran resampling convention")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pangenome", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("expect", help="large-population expectations and variance expansions")
    _common(p)
    p.add_argument("--exact-variance", action="store_true",
                   help="require the small-gamma variance expansions")

    p = sub.add_parser("simulate", help="Monte Carlo estimates from one engine")
    _common(p)
    _mc(p)
    p.add_argument("--engine", choices=("agtg", "moran"), default="agtg")
    p.add_argument("--export-graphs", type=Path, help="write the gene graphs of one coupled sample here")

    p = sub.add_parser("validate", help="compare analytics with both engines over a parameter grid")
    _common(p, grid=True)
    _mc(p)
    p.add_argument("--engines", default="agtg,moran", help="comma list of engines to run")

    p = sub.add_parser("figure2", help="expected spectrum table across transfer rates")
    _common(p, grid=True)
    p.add_argument("--table", type=Path, help="also write the plot-ready (k, gamma, E[G_k]) CSV here")
    return parser


def _resolve(args, defaults: dict) -> dict:
    """Flags over config file over ``defaults``."""
    values = dict(defaults)
    if getattr(args, "config", None) is not None:
        values.update(load_config(args.config))
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return values


def _threads(args) -> int | None:
    if args.threads is not None and args.threads < 1:
        raise RangeError("threads", f"--threads must be >= 1, got {args.threads}")
    return args.threads


# ---------------------------------------------------------------- commands


def _variance_of_variance(x: np.ndarray) -> MCEstimate:
    """Sample variance of ``x`` with its large-sample standard error."""
    x = np.asarray(x, dtype=float)
    est = aggregate(x)
    m4 = float(np.mean((x - est.mean) ** 4))
    se = math.sqrt(max(m4 - est.variance**2, 0.0) / len(x))
    return MCEstimate(est.variance, m4 - est.variance**2, se, len(x))


def cmd_expect(params: ModelParams, *, tol: float = DEFAULTS["tol"], exact_variance: bool = False) -> RunReport:
    validate(params)
    n = params.n
    report = RunReport("expect", params, provenance={"tol": tol})
    spec = analytics.expected_spectrum(params, n, tol)
    r = report.results
    r["spectrum"] = list(spec.values)
    r["A"] = analytics.expected_avg_genes(params, tol)
    r["D"] = analytics.expected_pairwise_diff(params, tol) if n >= 2 else 0.0
    r["G"] = analytics.expected_pangenome_size(params, n, tol)
    r["agtg_length"] = analytics.expected_agtg_length(params, n, tol)
    if params.gamma <= analytics.EXACT_VARIANCE_MAX_GAMMA:
        r["var_A1"] = analytics.var_avg_genes_small_gamma(params)
        r["var_D2"] = analytics.var_pairwise_diff_small_gamma(params)
    else:
        msg = (f"variance expansions are small-gamma series; omitted for gamma={params.gamma} "
               f"> {analytics.EXACT_VARIANCE_MAX_GAMMA}")
        report.warn("variance_omitted", msg)
        if exact_variance:
            log.warning(msg)
    return report


def _agtg_results(report: RunReport, batch: agtg.PangenomeBatch) -> None:
    r = report.results
    r["A"] = estimate(aggregate(batch.avg_genes()))
    r["D"] = estimate(aggregate(batch.pairwise_diff()))
    r["G"] = estimate(aggregate(batch.pangenome_size()))
    ests = [aggregate(batch.spectrum[:, k]) for k in range(batch.n)]
    r["spectrum"] = {"mean": [e.mean for e in ests], "std_error": [e.std_error for e in ests]}
    r["first_genome_size"] = estimate(aggregate(batch.first_genome))
    report.provenance.update({"epsilon_stop": batch.epsilon, "t_stop": batch.t_stop})
    report.diagnostics.append({
        "kind": "graphs_generated",
        "message": f"mean {float(batch.graphs.mean())!r}, max {int(batch.graphs.max())}",
    })
    report.diagnostics.append({"kind": "split_events", "message": str(int(batch.splits.sum()))})


def _moran_results(report: RunReport, batch: moran.MoranBatch) -> None:
    r = report.results
    g = batch.chain
    r["A"] = estimate(aggregate_groups(batch.avg_genes(), g))
    r["D"] = estimate(aggregate_groups(batch.pairwise_diff(), g))
    r["G"] = estimate(aggregate_groups(batch.pangenome_size(), g))
    ests = [aggregate_groups(batch.spectrum[:, k], g) for k in range(batch.n)]
    r["spectrum"] = {"mean": [e.mean for e in ests], "std_error": [e.std_error for e in ests]}
    r["first_genome_size"] = estimate(aggregate_groups(batch.first_genome, g))
    report.provenance.update({
        "burn_in": batch.burn_in,
        "snapshot_spacing": batch.spacing,
        "snapshots_per_chain": batch.per_chain,
        "chains": batch.chains,
        "resampling": batch.resampling,
    })
    if batch.not_converged_chains:
        msg = f"{batch.not_converged_chains} of {batch.chains} chains failed the burn-in diagnostic"
        report.warn("NotConverged", msg)
        warnings.warn(NotConverged(msg), stacklevel=2)


def cmd_simulate(
    params: ModelParams,
    engine: str,
    reps: int,
    seed: int,
    *,
    burn_in: float = moran.DEFAULT_BURN_IN,
    epsilon_stop: float = agtg.DEFAULT_EPSILON,
    threads: int | None = None,
    resampling: str = "paper",
    export_graphs: Path | None = None,
) -> RunReport:
    validate(params)
    if reps < 2:
        raise RangeError("reps", f"reps must be >= 2, got {reps}")
    report = RunReport("simulate", params, seed, provenance={"engine": engine, "reps": reps})
    if engine == "agtg":
        stop = agtg.StoppingPolicy(epsilon_stop)
        batch = agtg.pangenome_agtg_batch(params, params.n, reps, seed, stop, threads=threads)
        _agtg_results(report, batch)
        if export_graphs is not None:
            sample = agtg.sample_pangenome_agtg(
                params, params.n, RngSpec(seed, montecarlo.STREAM_MISC), stop, keep_graphs=True
            )
            Path(export_graphs).write_text(agtg.export_graphs(sample.graphs))
            report.provenance["exported_graphs"] = len(sample.graphs)
    elif engine == "moran":
        if params.N is None:
            raise RangeError("N", "the moran engine needs -N")
        batch = moran.moran_sample_batch(
            params, reps, seed, burn_in=burn_in, threads=threads, resampling=resampling
        )
        _moran_results(report, batch)
    else:
        raise RangeError("engine", f"unknown engine {engine!r}")
    return report


def _compare(stat, engine, analytic, est: MCEstimate, allowance=0.0) -> dict:
    diff = est.mean - analytic
    ok = abs(diff) <= Z_LIMIT * est.std_error + allowance
    return {
        "statistic": stat,
        "engine": engine,
        "analytic": analytic,
        "mc_mean": est.mean,
        "std_error": est.std_error,
        "z": est.z(analytic),
        "allowance": allowance,
        "pass": bool(ok),
    }


def _d_variance_allowance(params: ModelParams) -> float:
    """Heuristic size of the omitted gamma^2 term of the pairwise-difference variance.

    Assumes the next coefficient is no larger than the first-order one, so
    the allowance is the first-order term times gamma.
    """
    first_order = analytics.var_pairwise_diff_small_gamma(params) - analytics.var_pairwise_diff_small_gamma(
        params.replace(gamma=0.0)
    )
    return abs(first_order) * params.gamma


def _grid_seed(seed: int, index: int) -> int:
    state = np.random.SeedSequence([seed, index]).generate_state(2, np.uint64)
    return int(state[0]) >> 1


def cmd_validate(
    grid: Sequence[ModelParams],
    reps: int,
    seed: int,
    *,
    engines: Sequence[str] = ("agtg", "moran"),
    burn_in: float = moran.DEFAULT_BURN_IN,
    epsilon_stop: float = agtg.DEFAULT_EPSILON,
    threads: int | None = None,
    resampling: str = "paper",
) -> RunReport:
    report = RunReport("validate", None, seed, provenance={
        "reps": reps, "engines": list(engines), "burn_in": burn_in,
        "epsilon_stop": epsilon_stop, "z_limit": Z_LIMIT,
        "moran_relative_allowance": f"{MORAN_RELATIVE_ALLOWANCE}/N",
    })
    points = []
    failures = total = 0
    for i, params in enumerate(grid):
        validate(params)
        n = params.n
        s = _grid_seed(seed, i)
        exact = {
            "A": analytics.expected_avg_genes(params),
            "D": analytics.expected_pairwise_diff(params) if n >= 2 else 0.0,
            "G": analytics.expected_pangenome_size(params, n),
        }
        spec = analytics.expected_spectrum(params, n)
        comparisons = []
        for engine in engines:
            if engine == "moran" and params.N is None:
                continue
            sim = cmd_simulate(params, engine, reps, s, burn_in=burn_in, epsilon_stop=epsilon_stop,
                               threads=threads, resampling=resampling)
            res = sim.results
            rel = MORAN_RELATIVE_ALLOWANCE / params.N if engine == "moran" else 0.0
            for stat, value in exact.items():
                est = MCEstimate(res[stat]["mean"], res[stat]["variance"], res[stat]["std_error"], reps)
                comparisons.append(_compare(stat, engine, value, est, rel * abs(value)))
            for k in range(1, n + 1):
                est = MCEstimate(res["spectrum"]["mean"][k - 1], math.nan,
                                 res["spectrum"]["std_error"][k - 1], reps)
                comparisons.append(_compare(f"G_{k}", engine, spec[k], est, rel * abs(spec[k])))
            if engine == "agtg" and params.gamma <= analytics.EXACT_VARIANCE_MAX_GAMMA:
                comparisons.extend(_variance_comparisons(params, s, reps, epsilon_stop, threads))
            report.diagnostics.extend(
                {**d, "grid_index": i, "engine": engine} for d in sim.diagnostics
            )
        trivial = params.theta == 0
        total += len(comparisons)
        failures += sum(not c["pass"] for c in comparisons)
        points.append({"params": params.as_dict(), "seed": s, "trivial": trivial, "comparisons": comparisons})
    report.results["grid"] = points
    report.results["summary"] = {"comparisons": total, "failures": failures, "passed": failures == 0}
    report.warn(
        "multiple_testing",
        f"{total} comparisons at |z| <= {Z_LIMIT:g}; about {total * 0.0027:.2g} false failures "
        "are expected by chance when every comparison is correct",
    )
    return report


def _variance_comparisons(params, seed, reps, epsilon_stop, threads) -> list[dict]:
    """Small-gamma variance expansions against one- and two-genome AGTG samples."""
    out = []
    one = params.replace(n=1, N=None)
    batch = agtg.pangenome_agtg_batch(one, 1, reps, seed, agtg.StoppingPolicy(epsilon_stop), threads=threads)
    c3 = analytics.var_avg_genes_gamma3_coefficient(one) if params.gamma > 0 else 0.0
    out.append(_compare("var_A1", "agtg", analytics.var_avg_genes_small_gamma(one),
                        _variance_of_variance(batch.first_genome), abs(c3) * params.gamma**3))
    two = params.replace(n=2, N=None)
    batch = agtg.pangenome_agtg_batch(two, 2, reps, seed, agtg.StoppingPolicy(epsilon_stop), threads=threads)
    out.append(_compare("var_D2", "agtg", analytics.var_pairwise_diff_small_gamma(two),
                        _variance_of_variance(batch.pairwise_diff()), _d_variance_allowance(two)))
    return out


def cmd_figure2(theta: float, rho: float, gammas: Sequence[float], n: int) -> tuple[RunReport, list[tuple]]:
    if n < 2:
        raise RangeError("n", f"figure2 needs n >= 2, got {n}")
    params = validate(ModelParams(theta, rho, 0.0, n))
    for g in gammas:
        validate(params.replace(gamma=g))
    rows = analytics.figure2_table(theta, rho, gammas, n)
    report = RunReport("figure2", params, provenance={"gammas": list(gammas)})
    columns = []
    for j, g in enumerate(gammas):
        counts = [row[2] for row in rows[j * n:(j + 1) * n]]
        size = math.fsum(counts)
        columns.append({
            "gamma": g,
            "expected_counts": counts,
            "pangenome_size": size,
            "class_share": [c / size for c in counts] if size > 0 else [0.0] * n,
        })
    report.results["columns"] = columns
    top = [c["expected_counts"][-1] for c in columns]
    single = [c["class_share"][0] for c in columns]
    report.results["checks"] = {
        "top_class_strictly_increasing": all(a < b for a, b in zip(top, top[1:])),
        "singleton_share_strictly_decreasing": all(a > b for a, b in zip(single, single[1:])),
    }
    table = []
    for idx, (k, g, value) in enumerate(rows):
        size = columns[idx // n]["pangenome_size"]
        table.append((k, g, value, value / size if size > 0 else 0.0))
    return report, table


# ---------------------------------------------------------------- main


def _emit(report: RunReport, args) -> None:
    text = report.render(args.format, timing=args.timing)
    if args.out is not None:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _run(args) -> int:
    start = time.perf_counter()
    if args.command == "expect":
        v = _resolve(args, DEFAULTS)
        params = ModelParams(v["theta"], v["rho"], v["gamma"], v["n"], v["N"])
        report = cmd_expect(params, tol=v["tol"], exact_variance=args.exact_variance)
        code = EXIT_OK
    elif args.command == "simulate":
        v = _resolve(args, DEFAULTS)
        params = ModelParams(v["theta"], v["rho"], v["gamma"], v["n"], v["N"])
        report = cmd_simulate(
            params, args.engine, v["reps"], v["seed"], burn_in=v["burn_in"],
            epsilon_stop=args.epsilon_stop, threads=_threads(args), resampling=args.resampling,
            export_graphs=args.export_graphs,
        )
        code = EXIT_OK
    elif args.command == "validate":
        v = _resolve(args, {**DEFAULTS, **VALIDATE_DEFAULTS})
        grid = [
            validate(ModelParams(t, r, g, v["n"], v["N"]))
            for t, r, g in itertools.product(_float_list(v["theta"]), _float_list(v["rho"]), _float_list(v["gamma"]))
        ]
        engines = [e.strip() for e in args.engines.split(",") if e.strip()]
        for e in engines:
            if e not in ("agtg", "moran"):
                raise RangeError("engines", f"unknown engine {e!r}")
        report = cmd_validate(
            grid, v["reps"], v["seed"], engines=engines, burn_in=v["burn_in"],
            epsilon_stop=args.epsilon_stop, threads=_threads(args), resampling=args.resampling,
        )
        code = EXIT_OK if report.results["summary"]["passed"] else EXIT_VALIDATION
    elif args.command == "figure2":
        v = _resolve(args, {**DEFAULTS, **FIGURE2_DEFAULTS})
        report, table = cmd_figure2(float(v["theta"]), float(v["rho"]), _float_list(v["gamma"]), v["n"])
        if args.table is not None:
            Path(args.table).write_text(table_csv(["k", "gamma", "expected_count", "class_share"], table))
        code = EXIT_OK
    else:  # pragma: no cover - argparse enforces the choices
        raise AssertionError(args.command)
    report.wall_time = time.perf_counter() - start
    log.info("%s finished in %.3f s", args.command, report.wall_time)
    _emit(report, args)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return _run(args)
    except (RangeError, ValueError, argparse.ArgumentTypeError, OSError) as exc:
        print(f"pangenome: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ResourceLimit, NonConvergence, SingularSystem, MemoryError) as exc:
        print(f"pangenome: limit reached: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
