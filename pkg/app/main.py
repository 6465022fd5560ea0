"""
fiedwalk - Fiedler vectors from interacting random walks

Command-line entry point. Every subcommand writes one CSV to --out (stdout
when omitted); logs go to stderr.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Type, TypeVar

from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError

from app import __version__
from app.core.config import get_settings
from app.core.errors import DomainError, FiedwalkError
from app.core.graph import brute_force_rcut, ncut_value, rcut_value
from app.core.kernel import KernelSource
from app.core.logs import configure_logging, get_logger
from app.core.ode import DeviationBoundInputs, deviation_bound, normalized_series
from app.core.spectral import kernel_spectrum, rw_to_normalized_fiedler, sign_partition
from app.schemas.common import GraphSource, KernelKind
from app.schemas.experiment import CompareConfig, ExperimentConfig, OdeConfig
from app.services.experiment import (
    DEFAULT_OCCUPATION_RADIUS,
    build_kernel,
    compare_sim_vs_ode,
    occupation_study,
    resolve_graph,
    run_experiment,
    solve_ode,
    trace_run,
)
from app.services.export import (
    open_output,
    write_bound_csv,
    write_deviation_report,
    write_events_csv,
    write_metric_series,
    write_occupation_report,
    write_ode_series,
    write_partition_csv,
    write_samples_csv,
    write_spectrum_csv,
)

logger = get_logger(__name__)

ConfigT = TypeVar("ConfigT", bound=BaseModel)

COLUMNS = """\
CSV columns
  simulate / dynamic   '#' metadata line (JSON, replayable config), then
                       t, epoch, lambda2, RQ_mean, CS_mean, RQ_run<r>..., CS_run<r>...
                       [+ RQ_inst_mean, CS_inst_mean, RQ_inst_run<r>..., CS_inst_run<r>...]
  --events             t, event_kind (walk|kill), type (x|y), from, to
  --samples            t, RQ, CS
  occupation           '#' metadata line, then run, H, exit_time (nan when the run never left)
  spectral             k, eigenvalue, v_<label>...
  --partition          '#' metadata line (lambda2, rcut, ncut, rcut_optimum), then label, side
  ode                  t, RQ, CS, V, Lambda
  compare              '#' metadata line, then
                       n, median, bound, raw_bound, log_bound, M, M_estimated, dev_seed<s>...
  bound                n, kappa, N, T, epsilon, M, bound, raw_bound, log_bound

Exit codes: 0 success, 2 invalid input, 3 numeric failure.
"""


# =============================================================================
# Config loading
# =============================================================================

def _load_config(path: str, model: Type[ConfigT], args: argparse.Namespace) -> ConfigT:
    """Read a JSON document and apply --seed / --index-base overrides."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if getattr(args, "seed", None) is not None:
        key = "seed" if model is OdeConfig else "master_seed"
        data[key] = args.seed
    if getattr(args, "index_base", None) is not None:
        data["index_base"] = args.index_base
    return model.model_validate(data)


# =============================================================================
# Subcommands
# =============================================================================

def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, ExperimentConfig, args)
    if args.command == "dynamic" and not (cfg.schedule or cfg.preset):
        raise DomainError("dynamic needs a schedule or a preset in the config")
    if args.command == "simulate" and (cfg.schedule or cfg.preset):
        raise DomainError("config has a removal schedule; use the dynamic subcommand")
    series = run_experiment(cfg, args.jobs)
    with open_output(args.out) as out:
        write_metric_series(series, out)
    for warning in series.warnings:
        logger.warning("experiment_warning", detail=warning)

    if args.events or args.samples:
        traj, samples = trace_run(cfg, 0)
        labels = traj.epochs[0].graph.node_labels if len(traj.epochs) == 1 else None
        if args.events:
            with open_output(args.events) as out:
                write_events_csv(traj.events, out, labels)
        if args.samples:
            with open_output(args.samples) as out:
                write_samples_csv(samples, out)
    return 0


def cmd_spectral(args: argparse.Namespace) -> int:
    if args.config:
        source = _load_config(args.config, GraphSource, args)
    elif args.graph:
        source = GraphSource(graph_path=args.graph, index_base=args.index_base or 0, symmetrize=args.symmetrize)
    else:
        raise DomainError("spectral needs --graph or --config")
    g = resolve_graph(source)
    kind = KernelKind(args.kernel)
    k = build_kernel(kind, g, source.dtmc_path)
    spectrum = kernel_spectrum(k)
    with open_output(args.out) as out:
        write_spectrum_csv(spectrum, out, g.node_labels)

    lambda2, v2 = spectrum.pair(2)
    s, _ = sign_partition(v2)
    summary = {"lambda2": lambda2, "partition_size": len(s), "rcut": rcut_value(g, s), "ncut": ncut_value(g, s)}
    if k.source == KernelSource.RANDOM_WALK:
        summary["normalized_fiedler"] = rw_to_normalized_fiedler(v2, g).tolist()
    if g.node_count <= get_settings().brute_force_limit:
        _, best = brute_force_rcut(g)
        summary["rcut_optimum"] = best
    logger.info("spectral_summary", **summary)
    if args.partition:
        with open_output(args.partition) as out:
            write_partition_csv(s.members, g.node_labels, summary, out)
    return 0


def _ode_config(args: argparse.Namespace) -> OdeConfig:
    """OdeConfig from --config, with --graph / --kappa / --T / --dt-max / --init layered on top."""
    data = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    if args.graph:
        for key in ("graph_path", "synthetic", "family", "dtmc_path"):
            data.pop(key, None)
        data["graph_path"] = args.graph
    for key, value in (("kappa", args.kappa), ("T", args.T), ("dt_max", args.dt_max),
                       ("seed", args.seed), ("index_base", args.index_base)):
        if value is not None:
            data[key] = value
    if args.init == "random":
        data.pop("initial", None)
    elif args.init is not None:
        data["initial"] = json.loads(Path(args.init).read_text(encoding="utf-8"))
    return OdeConfig.model_validate(data)


def cmd_ode(args: argparse.Namespace) -> int:
    cfg = _ode_config(args)
    traj, ref = solve_ode(cfg)
    rows = normalized_series(traj, traj.kernel, ref.vector)
    with open_output(args.out) as out:
        write_ode_series(rows, out)
    logger.info("ode_final", lambda2=ref.value, rq=rows[-1][1], cs=rows[-1][2], max_mass_drift=traj.max_mass_drift)
    return 0


def cmd_occupation(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, ExperimentConfig, args)
    report = occupation_study(cfg, args.radius, args.burn_in, args.jobs)
    with open_output(args.out) as out:
        write_occupation_report(report, out)
    for warning in report.metadata["warnings"]:
        logger.warning("experiment_warning", detail=warning)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, CompareConfig, args)
    report = compare_sim_vs_ode(cfg, args.jobs)
    with open_output(args.out) as out:
        write_deviation_report(report, out)
    return 0


def cmd_bound(args: argparse.Namespace) -> int:
    inputs = DeviationBoundInputs(n=args.n, kappa=args.kappa, N=args.nodes, T=args.T, epsilon=args.epsilon, M=args.M)
    with open_output(args.out) as out:
        write_bound_csv(inputs, deviation_bound(inputs), out)
    return 0


# =============================================================================
# Parser
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fiedwalk",
        description="Estimate Fiedler vectors with two groups of interacting random walkers.",
        epilog=COLUMNS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--log-json", action="store_true", help="Render logs as JSON lines")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="Output CSV (stdout when omitted)")
    common.add_argument("--seed", type=int, default=None, help="Override the master seed (u64)")
    common.add_argument("--index-base", type=int, choices=(0, 1), default=None, help="First node index in edge lists")

    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("simulate", "Multi-run estimator on a static graph"),
        ("dynamic", "Multi-run estimator with scheduled node removals"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text, epilog=COLUMNS,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", required=True, help="Experiment JSON document")
        p.add_argument("--jobs", type=int, default=None, help="Worker processes")
        p.add_argument("--events", default=None, help="Also write the event log of run 0")
        p.add_argument("--samples", default=None, help="Also write the (t, RQ, CS) samples of run 0")
        p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("occupation", parents=[common], help="Time near the Fiedler direction and exit times per run",
                       epilog=COLUMNS, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", required=True, help="Experiment JSON document (static graph)")
    p.add_argument("--radius", type=float, default=DEFAULT_OCCUPATION_RADIUS,
                   help="Neighborhood is CS >= 1 - radius")
    p.add_argument("--burn-in", type=float, default=0.0, help="Start of the occupation window")
    p.add_argument("--jobs", type=int, default=None, help="Worker processes")
    p.set_defaults(handler=cmd_occupation)

    p = sub.add_parser("spectral", parents=[common], help="Oracle spectrum of a graph kernel")
    p.add_argument("--config", default=None, help="Graph source JSON document")
    p.add_argument("--graph", default=None, help="Edge-list file")
    p.add_argument("--symmetrize", action="store_true", help="Edge list holds directed arcs")
    p.add_argument("--kernel", default=KernelKind.COMBINATORIAL.value, choices=[k.value for k in KernelKind])
    p.add_argument("--partition", default=None, help="Also write the Fiedler sign partition and its cuts")
    p.set_defaults(handler=cmd_spectral)

    p = sub.add_parser("ode", parents=[common], help="Integrate the fluid limit")
    p.add_argument("--config", default=None, help="ODE JSON document")
    p.add_argument("--graph", default=None, help="Edge-list file (replaces the config graph)")
    p.add_argument("--kappa", type=float, default=None, help="Interaction strength")
    p.add_argument("--T", type=float, default=None, help="Horizon")
    p.add_argument("--dt-max", type=float, default=None, help="RK4 step cap")
    p.add_argument("--init", default=None, help="'random' or a JSON file with initial densities {x, y}")
    p.set_defaults(handler=cmd_ode)

    p = sub.add_parser("compare", parents=[common], help="Process-vs-ODE deviation across n")
    p.add_argument("--config", required=True, help="Compare JSON document")
    p.add_argument("--jobs", type=int, default=None, help="Worker processes")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("bound", parents=[common], help="Deviation probability bound")
    p.add_argument("--n", type=int, required=True, help="Walkers per group")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--nodes", "-N", type=int, required=True, help="Number of graph nodes")
    p.add_argument("--T", type=float, required=True, help="Horizon")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--M", type=float, required=True, help="Lipschitz constant")
    p.set_defaults(handler=cmd_bound)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level, True if args.log_json else None)
    try:
        return args.handler(args)
    except ValidationError as exc:
        for error in exc.errors():
            field = ".".join(str(part) for part in error["loc"]) or "<document>"
            print(f"error: {field}: {error['msg']}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    except FiedwalkError as exc:
        logger.error("command_failed", command=args.command, error=type(exc).__name__, detail=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
