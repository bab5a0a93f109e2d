"""Command line runner: graph generation, spectral reports, capacities and
the staged walk experiment with its checks.

Every stage writes its output under ``<output>/stages`` keyed by the hash of
the configuration sections it reads, so reruns with an unchanged section
reuse the stored result. Exit codes: 0 ok, 2 invalid configuration,
3 stage failure, 4 failed check.
"""
import os
import sys
import json
import math
import argparse
import warnings
import joblib
import scipy
import numpy as np
import pandas as pd
import networkx as nx
from . import __version__, operations
from .experiments import (
    BrownianLocalTimeRef,
    SitePlan,
    SiteSpec,
    TrialRecord,
    auxiliary_limit_checks,
    build_graph,
    capacity_comparison,
    conditional_vacant_law_test,
    dual_accounting,
    local_time_marginal_test,
    records_frame,
    run_theorem_experiment,
    site_capacity,
)
from .graph import dump_graph, load_graph
from .grid import build_grid, excursion_constants
from .logbook import LogCode, Logbook
from .parse_json import (
    DEFAULT_POSITION,
    DESK_SIZES,
    POSITIONS,
    ConfigError,
    ConfigParser,
)
from .potential import CapacityEstimate
from .spectral import a2_holds, gap_comparison, spectral_gap
from .utils import (
    EigenMethod,
    GraphFamily,
    NpEncoder,
    SolveMethod,
    Verdict,
    derive_rng,
    parse_enum,
)
from .walk import run_discrete
from .zoo import CylinderView, beta_ratio, check_family_invariants, limit_beta

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_CHECK = 4

OUTPUT_ENV = "CYLINDER_WALKS_OUTPUT"

PIPELINE = ("gen-graph", "spectral", "grid", "capacity", "simulate", "verify")

DUAL_ACCOUNTING_PATHS = 20


class StageError(RuntimeError):
    """A pipeline stage failed; artifacts of earlier stages are kept"""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"Stage '{stage}' failed: {type(cause).__name__}: {cause}")


def module_versions():
    return {
        "cylinder_walks": __version__,
        "joblib": joblib.__version__,
        "networkx": nx.__version__,
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "scipy": scipy.__version__,
    }


def write_json(path, payload):
    with open(path, "w") as file:
        json.dump(payload, file, cls=NpEncoder, sort_keys=True, indent=2)
        file.write("\n")


class Run:
    """Artifacts, stage cache and logbook of one invocation

    Parameters
    ----------
    config : ExperimentConfig

    output : str
        output directory

    verbose : bool
        Default is False
    """

    def __init__(self, config, output, verbose=False):
        self.config = config
        self.output = output
        self.verbose = verbose
        self.logbook = Logbook(verbose=verbose)
        self.results = {}
        os.makedirs(os.path.join(output, "stages"), exist_ok=True)

    def __repr__(self):
        return (
            f"<cylinder_walks.cli.Run output:{self.output} "
            f"stages:{list(self.results)}>\n"
        )

    @property
    def provenance(self):
        return {
            "config_hash": self.config.hash,
            "seed": self.config.seed,
            "versions": module_versions(),
        }

    def path(self, *parts):
        return os.path.join(self.output, *parts)

    def stage_path(self, stage, extension="json"):
        key = self.config.stage_hash(stage)[:16]
        return self.path("stages", f"{stage}-{key}.{extension}")

    def emit(self, name, payload):
        """Write an artifact with the provenance block embedded"""
        write_json(self.path(name), {"provenance": self.provenance, **payload})

    def stage(self, name, func):
        """Return the stored output of stage `name` or compute and store it

        Raises
        ------
        StageError
            When `func` raises
        """
        path = self.stage_path(name)
        if os.path.exists(path):
            with open(path, "r") as file:
                result = json.load(file)["result"]
            self.logbook.add_entry(f"reused {os.path.basename(path)}", stage=name)
        else:
            self.logbook.add_entry("started", stage=name)
            try:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    result = func()
            except Exception as err:
                self.logbook.add_entry(
                    f"{type(err).__name__}: {err}", code=LogCode.Critical, stage=name
                )
                raise StageError(name, err)
            for warning in caught:
                self.logbook.add_entry(
                    str(warning.message), code=LogCode.Warning, stage=name
                )
            # round trip so that fresh and reused results are identical
            result = json.loads(json.dumps(result, cls=NpEncoder, sort_keys=True))
            write_json(
                path,
                {"provenance": self.provenance, "stage": name, "result": result},
            )
            self.logbook.add_entry("finished", stage=name)
        self.results[name] = result
        return result

    def close(self):
        self.logbook.to_json(self.path("logbook.json"))
        self.logbook.to_csv(self.path("logbook.csv"))


def _graphs(config):
    return [build_graph(config.family, n, d=config.d) for n in config.sizes]


def stage_gen_graph(run):
    config = run.config
    os.makedirs(run.path("graphs"), exist_ok=True)
    rows = []
    for n, graph in zip(config.sizes, _graphs(config)):
        stem = f"{config.family.name.lower()}-N{n}"
        if config.family != GraphFamily.Sierpinski:
            stem += f"-d{config.d}"
        write_graph(graph, run.path("graphs", stem))
        invariants = check_family_invariants(graph)
        rows.append(
            {
                "N": n,
                "vertices": graph.n,
                "edges": graph.n_edges,
                "file": f"graphs/{stem}.txt",
                **invariants,
            }
        )
    return {"graphs": rows}


def write_graph(graph, stem):
    """Write the text format to ``stem.txt`` and the sidecar of labels and
    invariant checks to ``stem.json``"""
    dump_graph(graph, stem + ".txt")
    write_json(
        stem + ".json",
        {
            "name": graph.name,
            "labels": graph.labels,
            "invariants": check_family_invariants(graph),
        },
    )


def spectral_summary(graph, eps, method=None):
    report = spectral_gap(graph, method=method)
    return {
        **report.to_dict(),
        "eps": eps,
        "a2": bool(a2_holds(report, eps)),
        "gap_comparison": gap_comparison(graph, report),
    }


def stage_spectral(run):
    config = run.config
    eps = config["sites"]["eps"]
    rows = joblib.Parallel(n_jobs=config["walk"]["n_jobs"])(
        joblib.delayed(spectral_summary)(graph, eps, config.eigen_method)
        for graph in _graphs(config)
    )
    for n, row in zip(config.sizes, rows):
        row["N"] = n
    return {"spectral": rows}


def stage_grid(run):
    config = run.config
    plan = config.plan()
    gaps = run.results["spectral"]["spectral"]
    rows = []
    for graph, gap in zip(_graphs(config), gaps):
        targets = sorted({site.z for site in plan.resolve(graph)})
        grid = build_grid(
            targets,
            graph.n,
            gap["lambda"],
            plan.eps,
            M=config["grid"]["M"],
            ratio=config["grid"]["ratio"],
        )
        t, sigma, k_lower, k_upper = excursion_constants(
            grid.d, grid.h, plan.alpha, graph.n
        )
        rows.append(
            {
                "N": gap["N"],
                **grid.to_dict(),
                "t": t,
                "sigma": sigma,
                "k_lower": k_lower,
                "k_upper": k_upper,
            }
        )
    return {"grids": rows}


def stage_capacity(run):
    config = run.config
    settings = config["capacity"]
    graph = build_graph(config.family, config.sizes[-1], d=config.d)
    rows = []
    for site in config.plan().resolve(graph):
        if not site.target_keys:
            rows.append({"site": site.index, "value": 0.0, "lower": 0.0, "upper": 0.0})
            continue
        estimate = site_capacity(
            site,
            settings["rho"],
            mode=config.capacity_method,
            trials=settings["trials"],
            seed=config.seed,
        )
        rows.append(
            {
                "site": site.index,
                **estimate.to_dict(),
                "relative_width": estimate.relative_width,
            }
        )
    return {"capacities": rows}


def stage_simulate(run):
    config = run.config
    walk = config["walk"]
    records, report = run_theorem_experiment(
        config.family,
        config.sizes,
        config.plan(),
        walk["trials"],
        mode=config.mode,
        seed=config.seed,
        d=config.d,
        n_jobs=walk["n_jobs"],
        batch_size=walk["batch_size"],
        logbook=run.logbook,
        verbose=run.verbose,
    )
    with open(run.stage_path("simulate", "jsonl"), "w") as file:
        for record in records:
            file.write(record.to_json() + "\n")
    for m in range(len(config.plan().sites)):
        records_frame(records, m).to_csv(run.path(f"records-site{m}.csv"), index=False)
    return report


def load_records(run):
    with open(run.stage_path("simulate", "jsonl"), "r") as file:
        return [TrialRecord(**json.loads(line)) for line in file]


def _capacity_estimate(row):
    method = parse_enum(SolveMethod, row.get("method", "Exact"))
    return CapacityEstimate(row["value"], row["lower"], row["upper"], method)


def _conditional_rows(records, plan, graphs, capacities, checks):
    rows = []
    for m, site in enumerate(plan.sites):
        if site.shape == "empty":
            continue
        estimate = _capacity_estimate(capacities[m])
        errors = {"exact": [], "limit": []}
        reason = None
        for graph in graphs:
            subset = [r for r in records if r.size == graph.n]
            for name, beta in (
                ("exact", beta_ratio(graph)),
                ("limit", limit_beta(graph)),
            ):
                try:
                    result = conditional_vacant_law_test(
                        subset,
                        m,
                        estimate,
                        beta,
                        bins=checks["bins"],
                        min_records=checks["min_records"],
                        min_per_bin=checks["min_per_bin"],
                        max_relative_width=checks["max_relative_width"],
                    )
                    errors[name].append(result["relative_error"])
                except ValueError as err:
                    reason = str(err)
        if reason is not None:
            rows.append(
                operations.check_row(
                    f"conditional_vacant_law_site{m}",
                    "vacancy given U against exp(-U cap/(1+beta))",
                    None,
                    Verdict.Inconclusive,
                    reason=reason,
                )
            )
            continue
        exact = errors["exact"]
        passes = exact[-1] <= checks["slope_tolerance"] and (
            len(exact) < 2
            or operations.trend_verdict(exact, direction="decreasing") == Verdict.Pass
        )
        rows.append(
            operations.check_row(
                f"conditional_vacant_law_site{m}",
                "vacancy given U against exp(-U cap/(1+beta))",
                exact,
                Verdict.Pass if passes else Verdict.Fail,
                direction="decreasing",
                limit_beta_errors=errors["limit"],
            )
        )
        gap = np.array(errors["limit"]) - np.array(exact)
        rows.append(
            operations.check_row(
                f"beta_consistency_site{m}",
                "limit beta fits no worse than the exact ratio as N grows",
                gap.tolist(),
                operations.trend_verdict(gap, direction="decreasing"),
                direction="decreasing",
            )
        )
    return rows


def _marginal_rows(records, plan, graphs, checks, seed):
    ref = BrownianLocalTimeRef(K=checks["reference_K"], seed=seed)
    n_ref = checks["reference_draws"]
    rows = []
    s = plan.alpha
    draws = ref.sample(0.0, s, n_ref, key="mean-check")
    mean = float(draws.mean())
    target = math.sqrt(2 * s / math.pi)
    # 2% allowance for the lattice bias at K steps per unit time
    slack = 3 * operations.standard_error(draws) + 0.02 * target
    rows.append(
        operations.check_row(
            "brownian_reference_mean",
            "E[L(0, s)] = sqrt(2s/pi)",
            mean,
            Verdict.Pass if abs(mean - target) <= slack else Verdict.Fail,
            expected=target,
        )
    )
    scaling = ref.scaling_check(0.5, 2.0, n_ref)
    rows.append(
        operations.check_row(
            "brownian_reference_scaling",
            "L(v, s) ~ sqrt(s) L(v/sqrt(s), 1)",
            scaling["statistic"],
            Verdict.Pass if scaling["pvalue"] > 1e-3 else Verdict.Fail,
            pvalue=scaling["pvalue"],
        )
    )
    for m, site in enumerate(plan.sites):
        distances, errors = [], []
        for graph in graphs:
            subset = [r for r in records if r.size == graph.n]
            if not subset:
                continue
            result = local_time_marginal_test(
                subset, m, plan.alpha, beta_ratio(graph), site.v, ref, n_ref=n_ref
            )
            distances.append(result["statistic"])
            errors.append(math.sqrt(1.0 / len(subset) + 1.0 / n_ref))
        rows.append(
            operations.check_row(
                f"local_time_marginal_site{m}",
                "U against (1+beta) L(v, alpha/(1+beta))",
                distances,
                operations.trend_verdict(distances, errors),
                direction="decreasing",
            )
        )
    return rows


def _dual_accounting_row(plan, graphs, seed):
    ok = True
    graph = graphs[0]
    sites = plan.resolve(graph)
    view = CylinderView(graph)
    steps = int(plan.alpha * graph.n**2)
    for i in range(DUAL_ACCOUNTING_PATHS):
        rng = derive_rng(seed, "dual", i)
        traj = run_discrete(view, (i % graph.n, 0), steps, seed=rng)
        ok &= all(dual_accounting(traj, site, steps) for site in sites)
    return operations.check_row(
        "dual_accounting",
        "window scan and passage time agree on every path",
        DUAL_ACCOUNTING_PATHS,
        Verdict.Pass if ok else Verdict.Fail,
    )


def stage_verify(run):
    config = run.config
    plan = config.plan()
    checks = config["checks"]
    graphs = _graphs(config)
    records = load_records(run)
    simulation = run.results["simulate"]
    rows = []
    rows.extend(
        _conditional_rows(
            records, plan, graphs, run.results["capacity"]["capacities"], checks
        )
    )
    rows.extend(_marginal_rows(records, plan, graphs, checks, config.seed))
    rows.append(_dual_accounting_row(plan, graphs, config.seed))
    if "jump_rate_trend" in simulation:
        rates = [a.get("base_jump_rate_ok", False) for a in simulation["sizes"]]
        rows.append(
            operations.check_row(
                "base_jump_rate",
                "mean base jumps per unit time equals w(G)/|G|",
                [a.get("base_jump_rate") for a in simulation["sizes"]],
                Verdict.Pass if all(rates) else Verdict.Fail,
            )
        )
        rows.append(
            operations.check_row(
                "jump_rate_limit",
                "|eta/(alpha |G|^2) - (1+beta)| ^ 1 decreasing",
                [a.get("jump_rate_deviation") for a in simulation["sizes"]],
                simulation["jump_rate_trend"],
                direction="decreasing",
            )
        )
    if len(graphs) > 1:
        rows.extend(
            auxiliary_limit_checks(
                config.family,
                config.sizes,
                plan,
                d=config.d,
                checks=checks,
                seed=config.seed,
                n_jobs=config["walk"]["n_jobs"],
            )
        )
    comparison = None
    if config.family != GraphFamily.Tree and len(plan.sites) > 1:
        comparison = capacity_comparison(graphs[0], plan, config["capacity"]["rho"])
    return {"checks": rows, "capacity_comparison": comparison}


STAGES = {
    "gen-graph": stage_gen_graph,
    "spectral": stage_spectral,
    "grid": stage_grid,
    "capacity": stage_capacity,
    "simulate": stage_simulate,
    "verify": stage_verify,
}


def run_pipeline(config, output, last="verify", summary=True, verbose=False):
    """Run the stages up to and including `last`. With `summary`, a full run
    also writes ``summary.json``

    Returns
    -------
    int
        exit code
    """
    run = Run(config, output, verbose=verbose)
    try:
        for name in PIPELINE[: PIPELINE.index(last) + 1]:
            run.stage(name, lambda name=name: STAGES[name](run))
    except StageError as err:
        print(str(err), file=sys.stderr)
        run.close()
        return EXIT_STAGE
    code = EXIT_OK
    if last == "verify":
        checks = run.results["verify"]["checks"]
        if summary:
            report = {
                "config": config.to_dict(),
                "stages": {name: config.stage_hash(name) for name in PIPELINE},
                **{name: run.results[name] for name in PIPELINE},
            }
            report["config"].pop("output")
            run.emit("summary.json", report)
        failed = [row["name"] for row in checks if row["verdict"] == Verdict.Fail.name]
        for name in failed:
            run.logbook.add_entry(f"check failed: {name}", code=LogCode.Error)
        code = EXIT_CHECK if failed else EXIT_OK
    run.close()
    return code


def _sizes(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _add_experiment_arguments(parser):
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--family", choices=["box", "sierpinski", "tree"])
    parser.add_argument("--d", type=int, help="box dimension or tree arity")
    parser.add_argument("--sizes", type=_sizes, help="comma separated sizes N")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--mode", choices=["discrete", "continuous"])
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--eps", type=float)
    parser.add_argument("--n-jobs", type=int, dest="n_jobs")
    parser.add_argument("--output", help=f"output directory, overrides ${OUTPUT_ENV}")
    parser.add_argument("--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cylinder-walks",
        description="Random walks on discrete cylinders and random interlacements",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-graph", help="write a family graph")
    gen.add_argument("--family", required=True, choices=["box", "sierpinski", "tree"])
    gen.add_argument("--N", type=int, required=True, dest="size")
    gen.add_argument("--d", type=int, default=2)
    gen.add_argument("--output", default=None, help="file stem")

    spectral = commands.add_parser("spectral", help="spectral gap report")
    source = spectral.add_mutually_exclusive_group(required=True)
    source.add_argument("--graph", help="graph text file")
    source.add_argument("--family", choices=["box", "sierpinski", "tree"])
    spectral.add_argument("--N", type=int, dest="size")
    spectral.add_argument("--d", type=int, default=2)
    spectral.add_argument("--eps", type=float, default=0.5)
    spectral.add_argument("--method", choices=["dense", "iterative"])

    cap = commands.add_parser("capacity", help="capacity of a site target set")
    cap.add_argument("--family", required=True, choices=["box", "sierpinski", "tree"])
    cap.add_argument("--d", type=int, default=2)
    cap.add_argument("--N", type=int, dest="size")
    cap.add_argument("--position", default=None)
    cap.add_argument("--window", default="single")
    cap.add_argument("--rho", type=int, required=True)
    cap.add_argument("--method", default="exact", choices=["exact", "monte-carlo"])
    cap.add_argument("--trials", type=int, default=20000)
    cap.add_argument("--seed", type=int, default=0)

    for name, text in (
        ("simulate", "run the trial ensemble"),
        ("verify", "run the ensemble and every check"),
        ("reproduce-theorem", "full pipeline with the summary report"),
    ):
        _add_experiment_arguments(commands.add_parser(name, help=text))
    return parser


def overrides_from(args):
    """Configuration sections set on the command line"""
    table = {
        "graph": {"family": args.family, "d": args.d, "sizes": args.sizes},
        "sites": {"alpha": args.alpha, "eps": args.eps},
        "walk": {
            "trials": args.trials,
            "seed": args.seed,
            "mode": args.mode,
            "n_jobs": args.n_jobs,
        },
    }
    out = {}
    for section, values in table.items():
        values = {k: v for k, v in values.items() if v is not None}
        if values:
            out[section] = values
    return out


def output_directory(args, config):
    if getattr(args, "output", None):
        return args.output
    return os.environ.get(OUTPUT_ENV) or config.output


def _print_json(payload):
    print(json.dumps(payload, cls=NpEncoder, sort_keys=True, indent=2))


def cmd_gen_graph(args):
    family = parse_enum(GraphFamily, args.family)
    graph = build_graph(family, args.size, d=args.d)
    stem = args.output or f"{family.name.lower()}-N{args.size}"
    write_graph(graph, stem)
    _print_json({"file": stem + ".txt", "vertices": graph.n, "edges": graph.n_edges})
    return EXIT_OK


def cmd_spectral(args):
    if args.graph:
        graph = load_graph(args.graph)
    else:
        family = parse_enum(GraphFamily, args.family)
        size = args.size or DESK_SIZES[family][0]
        graph = build_graph(family, size, d=args.d)
    method = None if args.method is None else parse_enum(EigenMethod, args.method)
    _print_json(spectral_summary(graph, args.eps, method))
    return EXIT_OK


def cmd_capacity(args):
    family = parse_enum(GraphFamily, args.family)
    graph = build_graph(family, args.size or DESK_SIZES[family][0], d=args.d)
    position = args.position or DEFAULT_POSITION[family]
    if position not in POSITIONS[family]:
        raise ValueError(f"Position must be one of {POSITIONS[family]}")
    plan = SitePlan([SiteSpec(position, shape=args.window)])
    site = plan.resolve(graph)[0]
    estimate = site_capacity(
        site, args.rho, mode=args.method, trials=args.trials, seed=args.seed
    )
    _print_json({"window": args.window, **estimate.to_dict()})
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen-graph":
            return cmd_gen_graph(args)
        if args.command == "spectral":
            return cmd_spectral(args)
        if args.command == "capacity":
            return cmd_capacity(args)
        config = ConfigParser(args.config, overrides_from(args)).initialize_config(
            verbose=args.verbose
        )
    except ConfigError as err:
        print(str(err), file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError, OSError) as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_CONFIG
    last = "simulate" if args.command == "simulate" else "verify"
    return run_pipeline(
        config,
        output_directory(args, config),
        last=last,
        summary=args.command == "reproduce-theorem",
        verbose=args.verbose,
    )


if __name__ == "__main__":
    sys.exit(main())
