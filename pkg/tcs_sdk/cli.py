"""Command Line interface to the tcs_sdk package."""
import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

import numpy
import pandas
from tabulate import tabulate

import tcs_sdk
from tcs_sdk.classical import integrate_newton
from tcs_sdk.evaluate import compare, run_invariant_suite
from tcs_sdk.obstruction import (
    build_target,
    compute_t_double_star,
    gaussian_set_distance,
    run_obstruction_experiment,
    target_box,
)
from tcs_sdk.pde import propagate, size_grid
from tcs_sdk.riccati import check_q2_band, compute_t_star, det_residual, integrate_riccati
from tcs_sdk.scenario import DEFAULT_SCENARIO, Scenario, load_scenario
from tcs_sdk.tcs import constant_c_star, constant_cn, evaluate_packet, packet_at, packets
from tcs_sdk.utils import (
    DegenerateTarget,
    GridMismatch,
    NotNormalized,
    NumericalGuard,
    ScenarioError,
    UnsupportedPotential,
    get_timestamp,
    write_json,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATION = 2
EXIT_CONFIG = 3
EXIT_GUARD = 4

SETTINGS = (
    'DT_ODE',
    'DT_PDE',
    'BLOW_UP_GUARD',
    'TAIL_BUDGET',
    'TAIL_CELLS',
    'T_CAP',
    'DET_TOLERANCE',
    'BAND_SLACK',
    'SOLVER_TOLERANCE',
    'A_MAX',
    'N_RANDOM_CONTROLS',
    'DEGENERATE_THRESHOLD',
    'THREADS',
    'SEED',
)

EPILOG = """
exit status: 0 run clean, 2 certified property violated, 3 configuration error, 4 numerical guard tripped.
Settings can be overridden by TCS_<NAME> environment variables or a .env file in the working directory.
"""


class ArgumentParser(argparse.ArgumentParser):
    """Argument parser which raises instead of exiting, so main can map the error to an exit status."""

    def error(self, message):
        """Raise a configuration error."""
        raise ScenarioError('arguments', message)


def build_parser() -> ArgumentParser:
    """Create the parser with the four subcommands."""
    parser = ArgumentParser(
        prog='tcs_sdk',
        description='Gaussian packet propagation and small time obstruction experiments.',
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument('--print-defaults', action='store_true', help='print the default scenario and settings')
    subparsers = parser.add_subparsers(dest='command')

    def add_common(subparser):
        subparser.add_argument('--config', required=True, help='scenario file (YAML)')
        subparser.add_argument('--out', help='output directory, overrides the scenario')
        subparser.add_argument('--seed', type=int, help='seed of all randomness, overrides the scenario')
        subparser.add_argument('--threads', type=int, help='worker processes and transform threads')

    add_common(subparsers.add_parser('propagate', help='run packet and reference solver, compare with the bound'))
    add_common(subparsers.add_parser('obstruct', help='compute delta0, T** and run the control battery'))
    add_common(subparsers.add_parser('check', help='run the invariant suite of a scenario'))
    constants = subparsers.add_parser('constants', help='print C_N, C* and T*')
    constants.add_argument('--dim', type=int, default=1, help='space dimension N')
    constants.add_argument('--b', type=float, default=1.0, help='width parameter b')
    constants.add_argument('--hess-sup', type=float, default=0.0, help='sup norm of the Hessian of V')
    return parser


def print_defaults() -> str:
    """Return the default scenario followed by the current settings as YAML comments."""
    settings = [(name, getattr(tcs_sdk, name)) for name in SETTINGS]
    table = tabulate(settings, headers=['setting', 'value'], tablefmt='pipe')
    commented = '\n'.join(f'# {line}' for line in table.splitlines())
    return f'{DEFAULT_SCENARIO}\n# settings (environment TCS_<NAME>)\n{commented}\n'


def cmd_constants(dim: int, b: float, hess_sup: float) -> pandas.DataFrame:
    """Return C_N, C* and T* for the given inputs."""
    t_star = compute_t_star(b, hess_sup)
    return pandas.DataFrame(
        [
            {'name': 'C_N', 'value': constant_cn(dim)},
            {'name': 'C*', 'value': constant_c_star(dim)},
            {'name': 'T*', 'value': t_star},
        ]
    )


def resolve_horizon(scenario: Scenario) -> float:
    """Turn the horizon mode of a scenario into a time."""
    if not isinstance(scenario.horizon, str):
        return scenario.horizon
    p, b = scenario.potential, scenario.b
    t_star = compute_t_star(b, p.hess_sup)
    if scenario.horizon == 't_star':
        return t_star
    grid = scenario.grid
    if scenario.target['kind'] == 'field_file':
        target = build_target(scenario.target, grid)
    else:
        if grid is None:
            u = scenario.control_signal(t_star)
            traj = integrate_newton(p, u, scenario.x0, scenario.v0, scenario.dt_ode, t_end=t_star)
            v_max = float(numpy.linalg.norm(traj.v, axis=1).max())
            grid = size_grid(b, [traj.x], v_max, *target_box(scenario.target, scenario.dim))
        target = build_target(scenario.target, grid)
    fit = gaussian_set_distance(target, b, scenario.fit['n_eig'], scenario.fit['n_angle'], scenario.threads)
    t_double_star, _ = compute_t_double_star(fit.delta0, b, p, t_star, tcs_sdk.DEGENERATE_THRESHOLD)
    return t_double_star


def cmd_propagate(scenario: Scenario) -> Dict:
    """
    Run classical, Riccati, packet and reference solver and compare the packet with the a priori bound.

    Writes classical.csv, riccati.csv, comparison.csv, snapshots/ and summary.json to the output directory.

    :return: The summary
    """
    p, b = scenario.potential, scenario.b
    t_star = compute_t_star(b, p.hess_sup)
    horizon = resolve_horizon(scenario)
    u = scenario.control_signal(horizon)
    traj = integrate_newton(p, u, scenario.x0, scenario.v0, scenario.dt_ode, t_end=horizon)
    ric = integrate_riccati(p, traj, b)
    band = check_q2_band(ric, min(horizon, t_star))
    grid = scenario.grid or size_grid(b, [traj.x], float(numpy.linalg.norm(traj.v, axis=1).max()))
    psi0 = evaluate_packet(packet_at(traj, ric, 0), grid)
    propagation = propagate(psi0, p, u, 0.0, horizon, scenario.dt_pde, keep_snapshots=True, workers=scenario.threads)
    comparison = compare(traj, ric, propagation, p)

    out = scenario.output
    os.makedirs(out, exist_ok=True)
    traj.to_csv(os.path.join(out, 'classical.csv'))
    ric.to_csv(os.path.join(out, 'riccati.csv'))
    comparison.to_csv(os.path.join(out, 'comparison.csv'), index=False, float_format='%.17g')
    propagation.export(os.path.join(out, 'snapshots'))
    certified = ric.valid_times <= min(horizon, t_star) * (1 + 1e-12)
    summary = {
        't_star': t_star,
        'horizon': horizon,
        'blow_up_at': ric.blow_up_at,
        'grid': grid.to_dict(),
        'band_report': band.to_dict(),
        'det_residual_max': float(det_residual(ric)[certified].max()),
        'tcs_norm_drift': max(abs(w.analytic_norm() - 1.0) for w in packets(traj, ric)),
        'max_measured_error': float(comparison['measured'].max()),
        'max_error_bound': float(comparison['error_bound'].max()),
        'bound_ok': bool(comparison['bound_ok'].all()),
    }
    write_json(summary, os.path.join(out, 'summary.json'))
    return summary


def cmd_obstruct(scenario: Scenario):
    """
    Run the obstruction experiment and write report.json and one distance trace per control under trials/.

    :return: The report
    """
    report = run_obstruction_experiment(scenario)
    out = scenario.output
    trials_dir = os.path.join(out, 'trials')
    os.makedirs(trials_dir, exist_ok=True)
    for i, trial in enumerate(report.trials):
        trial.trace.to_csv(os.path.join(trials_dir, f'{i:02d}_{trial.name}.csv'), index=False, float_format='%.17g')
    write_json(report.to_dict(), os.path.join(out, 'report.json'))
    return report


def cmd_check(scenario: Scenario) -> pandas.DataFrame:
    """Run the invariant suite and write checks.csv."""
    checks = run_invariant_suite(scenario)
    os.makedirs(scenario.output, exist_ok=True)
    checks.to_csv(os.path.join(scenario.output, 'checks.csv'), index=False, float_format='%.17g')
    return checks


def _load(args) -> Scenario:
    scenario = load_scenario(args.config)
    if args.out is not None:
        scenario.output = args.out
    if args.seed is not None:
        scenario.seed = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ScenarioError('--threads', f'must be at least 1, got {args.threads}')
        scenario.threads = args.threads
    return scenario


def main(argv: Optional[List[str]] = None) -> int:
    """CLI of the tcs_sdk, returns the exit status."""
    try:
        args = build_parser().parse_args(sys.argv[1:] if argv is None else argv)
        if args.print_defaults:
            print(print_defaults())
            return EXIT_OK
        if args.command is None:
            raise ScenarioError('arguments', 'choose one of propagate, obstruct, constants, check')
        logger.info(f'tcs_sdk {args.command} started at {get_timestamp()}.')
        if args.command == 'constants':
            try:
                table = cmd_constants(args.dim, args.b, args.hess_sup)
            except ValueError as e:
                raise ScenarioError('constants', str(e))
            print(tabulate(table, floatfmt='.12g', headers='keys', tablefmt='pipe', showindex=False))
            return EXIT_OK
        scenario = _load(args)
        if args.command == 'propagate':
            summary = cmd_propagate(scenario)
            clean = summary['bound_ok'] and summary['band_report']['holds']
        elif args.command == 'obstruct':
            report = cmd_obstruct(scenario)
            clean = report.verdict and report.bound_ok
        else:
            clean = bool(cmd_check(scenario)['passed'].all())
    except (ScenarioError, DegenerateTarget, UnsupportedPotential, NotNormalized, GridMismatch) as e:
        logger.error(f'Configuration error: {e}')
        return EXIT_CONFIG
    except NumericalGuard as e:
        logger.error(f'Numerical guard tripped: {e}')
        return EXIT_GUARD
    if not clean:
        logger.warning(f'tcs_sdk {args.command} finished with a violated property.')
        return EXIT_VIOLATION
    logger.info(f'tcs_sdk {args.command} finished at {get_timestamp()}.')
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())  # pragma: no cover
