"""Compare the packet with the reference solver and run the invariant checks of a scenario."""
import logging
from typing import List, Optional, Sequence

import numpy
import pandas
from tabulate import tabulate

from tcs_sdk import BAND_SLACK, DET_TOLERANCE, SOLVER_TOLERANCE
from tcs_sdk.classical import ClassicalTrajectory, energy, integrate_newton, work
from tcs_sdk.pde import Propagation, l2_distance
from tcs_sdk.potentials import PotentialSpec, check_derivatives
from tcs_sdk.riccati import (
    RiccatiTrajectory,
    check_gronwall,
    check_q2_band,
    compute_t_star,
    det_residual,
    horizon_residuals,
    integrate_riccati,
    symmetry_defect,
)
from tcs_sdk.tcs import error_bound, evaluate_packet, packet_at, packets

logger = logging.getLogger(__name__)


def compare(
    traj: ClassicalTrajectory,
    ric: RiccatiTrajectory,
    propagation: Propagation,
    potential: PotentialSpec,
    tolerance: float = SOLVER_TOLERANCE,
) -> pandas.DataFrame:
    """
    Compare every stored snapshot of the reference solver with the packet at the same time.

    Snapshots at times which are not samples of the trajectories, or which lie beyond the Riccati blow-up, are
    skipped.

    :param traj: Classical trajectory
    :param ric: Riccati trajectory on the same grid
    :param propagation: Reference propagation with snapshots
    :param potential: Potential of the run
    :param tolerance: Solver error granted on top of the a priori bound
    :return: One row per compared snapshot with t, measured, error_bound, bound_ok, norm, norm_drift
    """
    rows = []
    for snapshot in propagation.snapshots:
        i = traj.index_of(snapshot.t)
        if i is None or i >= len(ric):
            continue
        w = packet_at(traj, ric, i)
        measured = l2_distance(snapshot.field, evaluate_packet(w, snapshot.field.grid))
        bound = error_bound(ric, potential, traj.times[i])
        rows.append(
            {
                't': traj.times[i],
                'measured': measured,
                'error_bound': bound,
                'bound_ok': measured <= bound + tolerance,
                'norm': snapshot.field.norm(),
                'norm_drift': abs(w.analytic_norm() - 1.0),
            }
        )
    return pandas.DataFrame(rows, columns=['t', 'measured', 'error_bound', 'bound_ok', 'norm', 'norm_drift'])


class ConvergenceCalculator:
    """Observed convergence of errors under refinement of the step size."""

    def __init__(self, errors: Sequence[float], dts: Sequence[float], allow_zero: bool = True):
        """
        Store errors of a refinement study.

        :param errors: Errors, one per step size
        :param dts: Step sizes in decreasing order
        :param allow_zero: If true, ratios with a vanishing error are None. Raises ZeroDivisionError otherwise.
        """
        if len(errors) != len(dts) or len(errors) < 2:
            raise ValueError(f'Need at least two pairs of errors and step sizes, got {len(errors)} and {len(dts)}.')
        self.errors = list(map(float, errors))
        self.dts = list(map(float, dts))
        self._valid(allow_zero)

    def _valid(self, allow_zero: bool = True) -> None:
        """Check for vanishing errors."""
        if allow_zero:
            return
        if any(e == 0 for e in self.errors[1:]):
            raise ZeroDivisionError("An error vanishes, please specify allow_zero=True if the ratio should be None.")

    @property
    def ratios(self) -> List[Optional[float]]:
        """Error reduction per refinement."""
        return [a / b if b else None for a, b in zip(self.errors, self.errors[1:])]

    @property
    def orders(self) -> List[Optional[float]]:
        """Observed order log(e_k / e_k+1) / log(dt_k / dt_k+1)."""
        return [
            None if r is None else float(numpy.log(r) / numpy.log(a / b))
            for r, a, b in zip(self.ratios, self.dts, self.dts[1:])
        ]

    @property
    def min_ratio(self) -> Optional[float]:
        """Worst error reduction of the study."""
        ratios = [r for r in self.ratios if r is not None]
        return min(ratios) if ratios else None

    def to_dataframe(self) -> pandas.DataFrame:
        """Return dt, error, ratio and order per refinement level."""
        return pandas.DataFrame(
            {
                'dt': self.dts,
                'error': self.errors,
                'ratio': [None] + self.ratios,
                'order': [None] + self.orders,
            }
        )


def run_invariant_suite(scenario) -> pandas.DataFrame:
    """
    Run the classical, Riccati and packet invariants of a scenario.

    The trajectories are integrated up to the numeric horizon of the scenario, or up to T* for the symbolic horizons;
    band, determinant and norm checks are restricted to [0, T*].

    :param scenario: Scenario to check
    :return: One row per check with value, threshold and passed
    """
    p, b = scenario.potential, scenario.b
    t_star = compute_t_star(b, p.hess_sup)
    horizon = t_star if isinstance(scenario.horizon, str) else scenario.horizon
    u = scenario.control_signal(horizon)
    traj = integrate_newton(p, u, scenario.x0, scenario.v0, scenario.dt_ode, t_end=horizon)
    ric = integrate_riccati(p, traj, b)
    t_check = min(horizon, t_star)
    certified = numpy.flatnonzero(ric.valid_times <= t_check + 1e-9 * max(1.0, t_check))
    rows = []

    def add(check: str, value: float, threshold: float, passed: Optional[bool] = None):
        passed = value <= threshold if passed is None else passed
        rows.append({'check': check, 'value': float(value), 'threshold': float(threshold), 'passed': bool(passed)})

    add('t_star_conditions', max(horizon_residuals(b, p.hess_sup, t_star)), 0.0)
    add('symmetry', symmetry_defect(ric), 1e-12)
    add('det_identity', float(det_residual(ric)[certified].max()), DET_TOLERANCE)
    band = check_q2_band(ric, t_check)
    add('q2_band_min', b / 2 - band.min_eig, BAND_SLACK, band.holds)
    add('q2_band_max', band.max_eig - 3 * b / 2, BAND_SLACK, band.holds)
    add('q1_norm', band.max_q1_norm, 1 + BAND_SLACK, band.q1_bound_holds)
    add('gronwall', check_gronwall(ric), 1 + 1e-9)
    drift = max(abs(w.analytic_norm() - 1.0) for w in packets(traj, ric) if w.t <= t_check * (1 + 1e-12))
    add('packet_norm', drift, DET_TOLERANCE)
    last = len(traj) - 1
    balance = abs(energy(p, traj, last) - energy(p, traj, 0) - work(traj, last))
    add('energy_balance', balance / (1.0 + abs(energy(p, traj, 0))), 1e-6)
    derivatives = check_derivatives(p, traj.x[:: max(1, len(traj) // 16)])
    add('potential_gradient', derivatives['gradient'], 1e-6)
    add('potential_hessian', derivatives['hessian'], 1e-6)
    add('hess_sup', derivatives['hess_sup_excess'], 1e-9)

    df = pandas.DataFrame(rows, columns=['check', 'value', 'threshold', 'passed'])
    logger.info(f'\n\n{tabulate(df, floatfmt=".3e", headers="keys", tablefmt="pipe", showindex=False)}\n')
    return df
