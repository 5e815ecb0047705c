"""Command line interface of the fshape matching toolkit"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

import numpy as np
from colorama import Fore, Style, init

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from src.controllers import ExperimentController, MatchingController, MatchProblem
from src.controllers.matching_controller import TRACE_HEADER
from src.utils import file_io
from src.utils.config import RunConfig, load_config
from src.utils.errors import FShapeError, NumericError, ValidationError, WrongModel
from src.utils.expression import parse_expression
from src.utils.fem import Signal, SignalP1, p0_project
from src.utils.oracle import continuous_energy_oracle
from src.utils.parallel import set_default_workers
from src.utils.sampling import (RefinementFamily, admissibility_report, discretize_signal,
                                sample_triangulation)
from src.utils.surface import SURFACES, builtin_surface
from src.utils.topology import (boundary_loops, connected_components, euler_characteristic,
                                orientation_consistent)
from src.utils.varifold import from_fshape

logger = logging.getLogger("fshape")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERIC = 2

LEVEL_COLORS = {
    logging.DEBUG: Fore.BLUE,
    logging.INFO: Fore.CYAN,
    logging.WARNING: Fore.YELLOW,
    logging.ERROR: Fore.RED,
    logging.CRITICAL: Fore.RED + Style.BRIGHT,
}


class ColoredFormatter(logging.Formatter):
    """Prefixes every record with its level name in a level-dependent colour."""

    def format(self, record: logging.LogRecord) -> str:
        color = LEVEL_COLORS.get(record.levelno, "")
        message = super().format(record)
        return f"{color}{record.levelname.lower():<7}{Style.RESET_ALL} {message}"


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(ColoredFormatter("%(name)s: %(message)s"))
    root = logging.getLogger()
    for old in list(root.handlers):
        root.removeHandler(old)
    root.addHandler(handler)
    root.setLevel(level)


class UsageError(Exception):
    pass


class FShapeArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors instead of exiting with status 2."""

    def error(self, message: str) -> None:
        raise UsageError(message)


def create_parser() -> argparse.ArgumentParser:
    """Create and configure the argument parser."""
    parser = FShapeArgumentParser(prog="cli.py", description="signal matching on fixed triangulated surfaces")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--workers', type=int, default=None, help='worker threads (0 = all cores)')
    common.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    common.add_argument('-q', '--quiet', action='store_true', help='warnings and errors only')
    commands = parser.add_subparsers(dest='command', help='Available functionalities',
                                     parser_class=FShapeArgumentParser)

    match_arg = commands.add_parser('match', parents=[common], help='optimize the source signal against a target fshape')
    match_arg.add_argument('--source', required=True, help='source fshape (.off or .ply); its signal is the initial signal')
    match_arg.add_argument('--target', required=True, help='target fshape (.off or .ply)')
    match_arg.add_argument('--config', required=True, help='run configuration (key=value)')
    match_arg.add_argument('--out', required=True, help='output directory')

    energy_arg = commands.add_parser('energy', parents=[common], help='print the energy breakdown of an fshape')
    energy_arg.add_argument('--fshape', required=True, help='fshape whose signal is evaluated')
    energy_arg.add_argument('--target', required=True, help='target fshape')
    energy_arg.add_argument('--config', required=True, help='run configuration (key=value)')

    gamma_arg = commands.add_parser('gamma', parents=[common], help='run a refinement experiment and write its table')
    gamma_arg.add_argument('--config', required=True, help='run configuration (key=value)')
    gamma_arg.add_argument('--out', default=None, help='output directory (overrides output.dir)')
    gamma_arg.add_argument('--plot', default=None, help='write a log-log PNG of the gaps versus h')

    check_arg = commands.add_parser('meshcheck', parents=[common], help='check a mesh against an analytic surface')
    check_arg.add_argument('--mesh', required=True, help='mesh file (.off or .ply)')
    check_arg.add_argument('--surface', required=True, choices=sorted(SURFACES), help='reference surface')
    check_arg.add_argument('--h', required=True, type=float, help='mesh step')
    check_arg.add_argument('--param', action='append', default=[], metavar='NAME=VALUE',
                           help='surface parameter (repeatable)')
    check_arg.add_argument('--json', default=None, help='write the report as JSON to this path')

    disc_arg = commands.add_parser('discretize', parents=[common], help='sample a surface and discretize a signal on it')
    disc_arg.add_argument('--surface', required=True, choices=sorted(SURFACES), help='surface to sample')
    disc_arg.add_argument('--signal', required=True, help="signal expression over u, v, x, y, z, e.g. 'sin(3*u)*cos(2*v)'")
    disc_arg.add_argument('--h', required=True, type=float, help='mesh step')
    disc_arg.add_argument('--element', choices=['p0', 'p1'], default='p1', help='element kind')
    disc_arg.add_argument('--param', action='append', default=[], metavar='NAME=VALUE',
                          help='surface parameter (repeatable)')
    disc_arg.add_argument('--out', required=True, help='output fshape (.off or .ply)')

    return parser


# ===================================================================
# HELPERS
# ===================================================================

def _surface_params(pairs: List[str]) -> Dict[str, float]:
    params = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"--param expects NAME=VALUE, got '{pair}'")
        name, value = (part.strip() for part in pair.split("=", 1))
        expr = parse_expression(value)
        if expr.variables:
            raise UsageError(f"--param {name}: '{value}' must be a constant")
        params[name] = float(expr(np.zeros(1), np.zeros(1), np.zeros((1, 3)))[0])
    return params


def _initial_signal(signal: Signal, element: str) -> Signal:
    """Bring a loaded signal to the element kind of the model."""
    if signal.element == element:
        return signal
    if element == "p0" and isinstance(signal, SignalP1):
        logger.info("projecting the P1 source signal to P0 for the l2 model")
        return p0_project(signal)
    raise WrongModel(f"the model needs a {element.upper()} signal but the file carries "
                     f"{signal.element.upper()} values")


def _apply_workers(args, config: Optional[RunConfig] = None) -> None:
    workers = args.workers if args.workers is not None else (config.workers if config else 1)
    set_default_workers(workers)


def _problem(source_path: str, target_path: str, config: RunConfig) -> MatchProblem:
    source = file_io.load_fshape(source_path)
    target = file_io.load_fshape(target_path)
    initial = _initial_signal(source.signal, config.model.element)
    return MatchProblem(source.mesh, config.model, from_fshape(target.mesh, target.signal), initial)


def _print_breakdown(breakdown) -> None:
    for name, value in breakdown.terms.items():
        print(f"  {Fore.CYAN}{name:<9}{Style.RESET_ALL} {file_io.format_number(value)}")
    print(f"  {Fore.GREEN}{'total':<9}{Style.RESET_ALL} {file_io.format_number(breakdown.total)}")


def _plot_gamma(result, path: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    h = result.column("h")
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, label in (("energy_gap", "|min E_h - min E_prev|"), ("l1_gap", "lifted L1 gap"),
                        ("oracle_gap", "oracle gap")):
        values = result.column(name)
        keep = np.isfinite(values) & (values > 0)
        if keep.any():
            ax.loglog(h[keep], values[keep], marker="o", label=label)
    ax.set_xlabel("h")
    ax.invert_xaxis()
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ===================================================================
# COMMANDS
# ===================================================================

def run_match(args) -> int:
    config = load_config(args.config)
    _apply_workers(args, config)
    problem = _problem(args.source, args.target, config)
    controller = MatchingController(config.descent)
    trace = controller.minimize(problem)
    os.makedirs(args.out, exist_ok=True)
    suffix = os.path.splitext(args.source)[1].lower() or ".off"
    optimal = os.path.join(args.out, f"optimal{suffix if suffix in ('.off', '.ply') else '.off'}")
    file_io.save_fshape(file_io.FShapeFile(problem.mesh, trace.signal), optimal)
    file_io.save_csv(os.path.join(args.out, "trace.csv"), TRACE_HEADER, trace.rows())
    print(f"{Fore.CYAN}descent stopped ({trace.reason}) after {trace.iterations} iterations{Style.RESET_ALL}")
    _print_breakdown(controller.energy(problem, trace.signal))
    print(f"{Fore.GREEN}✓ saved to {args.out}{Style.RESET_ALL}")
    return EXIT_OK


def run_energy(args) -> int:
    config = load_config(args.config)
    _apply_workers(args, config)
    problem = _problem(args.fshape, args.target, config)
    _print_breakdown(MatchingController(config.descent).energy(problem, problem.initial))
    return EXIT_OK


def run_gamma(args) -> int:
    config = load_config(args.config)
    _apply_workers(args, config)
    out_dir = args.out or config.output_dir
    surface = config.build_surface()
    target_surface = config.build_target_surface()
    f0, g = config.source_expression(), config.target_expression()
    controller = ExperimentController(config.descent, quadrature_order=config.quadrature.order)

    reference = continuous_energy_oracle(surface, f0, controller.target_varifold(target_surface, g, config.model.kernel),
                                         config.model, order=config.quadrature.order,
                                         max_order=config.quadrature.max_order, rtol=config.quadrature.rtol)
    logger.info("continuous energy of the initial signal: %.12g (order %d)", reference.value, reference.order)

    family = RefinementFamily.build(surface, config.gamma_levels)
    result = controller.gamma_experiment(surface, target_surface, f0, g, config.model, family)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "gamma.csv")
    file_io.save_csv(path, result.header, result.rows())

    print(f"{Fore.CYAN}{'  '.join(f'{name:>12}' for name in result.header)}{Style.RESET_ALL}")
    for row in result.rows():
        print("  ".join(f"{x:>12.6g}" for x in row))
    if args.plot:
        _plot_gamma(result, args.plot)
        print(f"{Fore.GREEN}✓ plot saved to {args.plot}{Style.RESET_ALL}")
    print(f"{Fore.GREEN}✓ saved to {path}{Style.RESET_ALL}")
    return EXIT_OK


def run_meshcheck(args) -> int:
    _apply_workers(args)
    surface = builtin_surface(args.surface, _surface_params(args.param))
    mesh = file_io.load_fshape(args.mesh).mesh
    report = admissibility_report(mesh, surface, args.h)
    consistent, bad_edges = orientation_consistent(mesh)
    topology = {
        "components": len(connected_components(mesh)),
        "boundary_loops": len(boundary_loops(mesh)),
        "euler_characteristic": euler_characteristic(mesh),
        "orientation_consistent": consistent,
        "inconsistent_edges": bad_edges,
    }

    print(f"{Fore.CYAN}mesh {args.mesh} against {surface.name} at h={args.h}{Style.RESET_ALL}")
    for name in ("max_dist", "hausdorff_estimate", "alpha_max", "alpha_ratio", "out_area",
                 "out_area_ratio", "diam", "reach_violation_fraction", "orientation_flips"):
        print(f"  {name:<26} {getattr(report, name):.6g}")
    for name, value in topology.items():
        print(f"  {name:<26} {value}")
    for name, ok in report.checks.items():
        color = Fore.GREEN if ok else Fore.RED
        print(f"  {color}{'✓' if ok else '✗'} {name}{Style.RESET_ALL}")

    data = dict(vars(report), passed=report.passed, topology=topology)
    if args.json:
        file_io.save_json(args.json, data)
        print(f"{Fore.GREEN}✓ saved to {args.json}{Style.RESET_ALL}")
    else:
        print(file_io.format_json(data), end="")
    return EXIT_OK


def run_discretize(args) -> int:
    _apply_workers(args)
    surface = builtin_surface(args.surface, _surface_params(args.param))
    expression = parse_expression(args.signal)
    mesh = sample_triangulation(surface, args.h)
    signal = discretize_signal(surface, expression, mesh, args.element)
    file_io.save_fshape(file_io.FShapeFile(mesh, signal), args.out)
    print(f"{Fore.GREEN}✓ {mesh.n_triangles} triangles saved to {args.out}{Style.RESET_ALL}")
    return EXIT_OK


COMMANDS = {
    "match": run_match,
    "energy": run_energy,
    "gamma": run_gamma,
    "meshcheck": run_meshcheck,
    "discretize": run_discretize,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns 0 on success, 1 on invalid input, 2 on numeric failure."""
    init(autoreset=True)
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"{Fore.RED}Error: {e}{Style.RESET_ALL}", file=sys.stderr)
        parser.print_help()
        return EXIT_INVALID
    if args.command is None:
        parser.print_help()
        return EXIT_INVALID

    setup_logging(args.verbose, args.quiet)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"{Fore.RED}Error: {e}{Style.RESET_ALL}", file=sys.stderr)
        return EXIT_INVALID
    except NumericError as e:
        print(f"{Fore.RED}numeric failure: {e}{Style.RESET_ALL}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, FShapeError) as e:
        print(f"{Fore.RED}invalid input: {e}{Style.RESET_ALL}", file=sys.stderr)
        return EXIT_INVALID


# Main execution
if __name__ == "__main__":
    sys.exit(main())
