"""Distance of a target to the Gaussian profile set, the horizon T** and the adversarial control experiment."""
import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy
import pandas
import scipy.fft
import scipy.optimize
from pathos.pools import ProcessPool
from tabulate import tabulate

from tcs_sdk import DEGENERATE_THRESHOLD, SOLVER_TOLERANCE, TAIL_BUDGET, TAIL_CELLS
from tcs_sdk.classical import ControlSignal, SinusoidPiece, integrate_newton
from tcs_sdk.pde import ComplexField, Grid, iterate_propagation, l2_distance, size_grid
from tcs_sdk.potentials import PotentialSpec
from tcs_sdk.riccati import check_q2_band, compute_t_star, integrate_riccati
from tcs_sdk.tcs import constant_c_star, constant_cn, error_bound, evaluate_packet, packet_at
from tcs_sdk.utils import (
    DegenerateTarget,
    EmptyControlSet,
    GridMismatch,
    NotNormalized,
    ScenarioError,
    matrix_to_list,
    trial_seed,
)

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-8
SUPPORT_THRESHOLD = 1e-8


def rotation(theta: float) -> numpy.ndarray:
    """Rotation of the plane by theta."""
    c, s = numpy.cos(theta), numpy.sin(theta)
    return numpy.array([[c, -s], [s, c]])


def width_matrix(eigenvalues: Sequence[float], theta: float = 0.0) -> numpy.ndarray:
    """Symmetric q with the given eigenvalues, rotated by theta in dimension 2."""
    if len(eigenvalues) == 1:
        return numpy.array([[float(eigenvalues[0])]])
    r = rotation(theta)
    return r @ numpy.diag(eigenvalues) @ r.T


def gaussian_amplitude(grid: Grid, q: numpy.ndarray, alpha) -> ComplexField:
    """Sample g(x) = (det q)^{1/2} / C_N exp(-|q (x - alpha)|^2 / 2), the modulus of an element of the Gaussian set."""
    q = numpy.atleast_2d(numpy.asarray(q, dtype=float))
    y = (grid.points - numpy.asarray(alpha, dtype=float)) @ q.T
    values = numpy.sqrt(numpy.linalg.det(q)) / constant_cn(grid.dim) * numpy.exp(-0.5 * numpy.sum(y**2, axis=-1))
    return ComplexField(grid, values)


def double_bump(grid: Grid, width: float, centers: Sequence) -> ComplexField:
    """
    Equal weight sum of unit Gaussians of width parameter `width` at the centers, renormalized, with flat phase.

    :param grid: Grid to sample on
    :param width: Width parameter of the bumps, the modulus of every bump is exp(-width |x - c|^2 / 2) up to scale
    :param centers: Centres of the bumps, scalars in dimension 1
    """
    q = numpy.sqrt(width) * numpy.eye(grid.dim)
    values = sum(gaussian_amplitude(grid, q, numpy.atleast_1d(c)).values for c in centers)
    return ComplexField(grid, values).normalized()


def target_box(target: Dict, dim: int) -> Tuple[numpy.ndarray, numpy.ndarray]:
    """Hull of the analytic target centres, used to size the grid."""
    centers = numpy.array([numpy.atleast_1d(c) for c in target['centers']], dtype=float).reshape(-1, dim)
    return centers.min(axis=0), centers.max(axis=0)


def build_target(target: Dict, grid: Optional[Grid] = None) -> ComplexField:
    """
    Build the target state from its record.

    :param target: {'kind': 'double_bump', 'centers': [...], 'width': b} or {'kind': 'field_file', 'path': ...}
    :param grid: Grid of an analytic target, a field file brings its own grid
    """
    kind = target.get('kind')
    if kind == 'double_bump':
        if grid is None:
            raise ValueError('An analytic target needs a grid.')
        return double_bump(grid, float(target.get('width', 1.0)), target['centers'])
    if kind == 'field_file':
        field = ComplexField.from_file(target['path'])
        if grid is not None and field.grid != grid:
            raise GridMismatch(f'The target file lives on {field.grid}, not on {grid}.')
        return field
    raise ScenarioError('target.kind', f'unknown target kind {kind!r}, use double_bump or field_file')


class GaussianFit:
    """Closest element of the Gaussian profile set, found by a coarse scan and a local refinement."""

    def __init__(self, delta0: float, q: numpy.ndarray, alpha: numpy.ndarray, coarse_delta0: float):
        """Store the fit."""
        self.delta0 = delta0
        self.q = q
        self.alpha = alpha
        self.coarse_delta0 = coarse_delta0

    def __repr__(self):
        """Return string representation of the class."""
        return f"{self.__class__.__name__} delta0={self.delta0:.8g} alpha={self.alpha.tolist()}"

    def __iter__(self):
        """Unpack as (delta0, q, alpha)."""
        return iter((self.delta0, self.q, self.alpha))


def _support_box(amplitude: numpy.ndarray, grid: Grid) -> Tuple[numpy.ndarray, numpy.ndarray]:
    """Bounding box of the nodes where the modulus exceeds a tiny fraction of its maximum."""
    nodes = grid.points[amplitude >= SUPPORT_THRESHOLD * amplitude.max()]
    return nodes.min(axis=0), nodes.max(axis=0)


def _centred_amplitude(grid: Grid, q: numpy.ndarray) -> numpy.ndarray:
    """Gaussian modulus centred at node 0 in periodically wrapped coordinates."""
    length = grid.hi - grid.lo
    y = numpy.mod(grid.points - grid.lo + 0.5 * length, length) - 0.5 * length
    y = y @ q.T
    return numpy.sqrt(numpy.linalg.det(q)) / constant_cn(grid.dim) * numpy.exp(-0.5 * numpy.sum(y**2, axis=-1))


def gaussian_set_distance(
    target: ComplexField,
    b: float,
    n_eig: Optional[int] = None,
    n_angle: int = 16,
    workers: int = 1,
) -> GaussianFit:
    """
    Compute the L2 distance of the target to the set of Gaussian profiles of width band [sqrt(b/2), sqrt(3b/2)].

    The phase of a set element is free, so the distance equals the distance between the modulus of the target and
    the closest Gaussian modulus g_{q, alpha}. A coarse scan visits n_eig eigenvalues per axis of q, n_angle rotations
    in dimension 2 and every grid node of the target support as alpha, the latter at once through an FFT
    cross-correlation. A bounded Nelder-Mead search refines the best coarse point.

    :param target: Unit norm target
    :param b: Width parameter of the initial state
    :param n_eig: Eigenvalues per axis of the coarse scan, 64 in dimension 1 and 16 in dimension 2 by default
    :param n_angle: Rotation angles of the coarse scan in dimension 2
    :param workers: Threads of the Fourier transforms
    :raises NotNormalized: When the target does not have unit norm.
    :return: delta0, the minimizing q and alpha
    """
    norm = target.norm()
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise NotNormalized(f'The target has norm {norm:.12g}, expected 1.')
    grid = target.grid
    dim = grid.dim
    n_eig = n_eig or (64 if dim == 1 else 16)
    band = (numpy.sqrt(b / 2), numpy.sqrt(1.5 * b))
    eigenvalues = numpy.linspace(band[0], band[1], n_eig)
    angles = numpy.linspace(0.0, 0.5 * numpy.pi, n_angle, endpoint=False) if dim == 2 else [0.0]

    amplitude = numpy.abs(target.values)
    box_lo, box_hi = _support_box(amplitude, grid)
    inside = numpy.all((grid.points >= box_lo) & (grid.points <= box_hi), axis=-1)
    weight = grid.cell_volume
    amplitude_sq = numpy.sum(amplitude**2) * weight
    amplitude_hat = scipy.fft.fftn(amplitude, workers=workers)

    best = (numpy.inf, None, None, None)
    combinations = [(lam,) for lam in eigenvalues] if dim == 1 else [(a, c) for a in eigenvalues for c in eigenvalues]
    for lam in combinations:
        for theta in angles:
            q = width_matrix(lam, theta)
            g0 = _centred_amplitude(grid, q)
            g0_hat = scipy.fft.fftn(g0, workers=workers)
            correlation = scipy.fft.ifftn(amplitude_hat * numpy.conj(g0_hat), workers=workers)
            distance_sq = amplitude_sq + numpy.sum(g0**2) * weight - 2.0 * correlation.real * weight
            distance_sq = numpy.where(inside, distance_sq, numpy.inf)
            flat = int(numpy.argmin(distance_sq))
            if distance_sq.flat[flat] < best[0]:
                alpha = grid.points.reshape(-1, dim)[flat]
                best = (float(distance_sq.flat[flat]), numpy.array(lam), float(theta), alpha)
    coarse_delta0 = float(numpy.sqrt(max(best[0], 0.0)))
    _, lam0, theta0, alpha0 = best
    q0 = width_matrix(lam0, theta0)
    logger.debug(f'Coarse Gaussian fit: delta0 = {coarse_delta0:.8g} at q = {q0.tolist()}, alpha = {alpha0.tolist()}.')

    def unpack(z):
        lam = lam0 + z[:dim]
        theta = theta0 + z[dim] if dim == 2 else 0.0
        return width_matrix(lam, theta), alpha0 + z[-dim:]

    def objective(z):
        q, alpha = unpack(z)
        return float(numpy.sqrt(numpy.sum((amplitude - gaussian_amplitude(grid, q, alpha).values.real) ** 2) * weight))

    eig_step = (band[1] - band[0]) / n_eig
    steps = [eig_step if lam + eig_step <= band[1] else -eig_step for lam in lam0]
    if dim == 2:
        steps.append(0.5 * numpy.pi / n_angle)
    steps += [h if a + h <= hi else -h for a, h, hi in zip(alpha0, grid.spacing, box_hi)]
    n_par = len(steps)
    simplex = numpy.zeros((n_par + 1, n_par))
    simplex[1:] = numpy.diag(steps)
    lower = [band[0] - lam for lam in lam0] + ([-numpy.inf] if dim == 2 else []) + list(box_lo - alpha0)
    upper = [band[1] - lam for lam in lam0] + ([numpy.inf] if dim == 2 else []) + list(box_hi - alpha0)
    result = scipy.optimize.minimize(
        objective,
        numpy.zeros(n_par),
        method='Nelder-Mead',
        bounds=scipy.optimize.Bounds(lower, upper),
        options={'initial_simplex': simplex, 'xatol': 1e-10, 'fatol': 1e-14, 'maxiter': 4000 * n_par},
    )
    q_best, alpha_best = unpack(result.x)
    delta0 = float(result.fun)
    if not delta0 <= coarse_delta0:
        logger.warning(f'Refinement did not improve the coarse fit {coarse_delta0:.8g}, keeping it.')
        delta0, q_best, alpha_best = coarse_delta0, q0, alpha0
    logger.info(f'delta0 = {delta0:.8g} (coarse {coarse_delta0:.8g}).')
    alpha_best = numpy.asarray(alpha_best, dtype=float)
    return GaussianFit(delta0=delta0, q=q_best, alpha=alpha_best, coarse_delta0=coarse_delta0)


def compute_t_double_star(
    delta0: float, b: float, p: PotentialSpec, t_star: float, threshold: float = 0.0
) -> Tuple[float, float]:
    """
    Return T** = min(T*, delta0 (b/2)^{3/2} / (2 C* |V'''|)) and the exclusion radius delta = delta0 / 2.

    :raises DegenerateTarget: When delta0 <= threshold, the target then has a Gaussian profile.
    """
    if not delta0 > threshold:
        raise DegenerateTarget(f'delta0 = {delta0:.3e} does not exceed {threshold:.1e}, the target is Gaussian.')
    if p.third_sup == 0:
        return float(t_star), 0.5 * delta0
    t_bound = delta0 * (b / 2) ** 1.5 / (2.0 * constant_c_star(p.dim) * p.third_sup)
    return float(min(t_star, t_bound)), 0.5 * delta0


def lower_bound(delta0: float, b: float, p: PotentialSpec, t: float) -> float:
    """Certified lower bound delta0 - C* |V'''| t / (b/2)^{3/2} of the distance at time t."""
    return float(delta0 - constant_c_star(p.dim) * p.third_sup * t / (b / 2) ** 1.5)


def control_battery(
    dim: int,
    horizon: float,
    a_max: float,
    n_random: int,
    seed: int,
    omega_norm: float = 0.0,
) -> List[Tuple[str, ControlSignal]]:
    """
    Build the seeded adversarial controls on [0, horizon].

    Zero, constants +-A, bang-bang with 2, 4 and 8 switchings starting with + and -, resonant sinusoids at
    sqrt(|Omega|) with phases 0 and pi/2 and both signs, and n_random piecewise constant controls with 8 pieces
    uniform in [-A, A]^N. Control number i of the battery draws from the seed `seed ^ i`.

    :param omega_norm: Norm of the harmonic part, 0 falls back to one period per horizon
    :return: Named controls in a fixed order
    """
    direction = numpy.ones(dim) / numpy.sqrt(dim)
    battery = [('zero', ControlSignal.zero(dim, horizon))]
    for sign, label in ((1, '+'), (-1, '-')):
        battery.append((f'constant{label}', ControlSignal.constant(sign * a_max * direction, horizon)))
    for switches in (2, 4, 8):
        for sign, label in ((1, '+'), (-1, '-')):
            values = [sign * (-1) ** j * a_max * direction for j in range(switches + 1)]
            battery.append((f'bang_bang_{switches}{label}', ControlSignal.piecewise_constant(values, horizon)))
    frequency = numpy.sqrt(omega_norm) if omega_norm > 0 else 2 * numpy.pi / horizon
    for phase, phase_label in ((0.0, 'sin'), (0.5 * numpy.pi, 'cos')):
        for sign, label in ((1, '+'), (-1, '-')):
            piece = SinusoidPiece(0.0, horizon, sign * a_max * direction, frequency, phase)
            battery.append((f'resonant_{phase_label}{label}', ControlSignal([piece])))
    for i in range(n_random):
        index = len(battery)
        rng = numpy.random.default_rng(trial_seed(seed, index))
        values = rng.uniform(-a_max, a_max, size=(8, dim))
        battery.append((f'random_{i:02d}', ControlSignal.piecewise_constant(values, horizon)))
    return battery


class TrialResult:
    """Outcome of one control of the experiment."""

    def __init__(
        self,
        name: str,
        control: ControlSignal,
        trace: pandas.DataFrame,
        delta: float,
        tolerance: float,
        band_holds: bool,
    ):
        """Derive the summary numbers from the distance trace."""
        self.name = name
        self.band_holds = band_holds
        self.control = control
        self.trace = trace
        i = int(trace['distance'].to_numpy().argmin())
        self.min_distance = float(trace['distance'].iat[i])
        self.argmin_t = float(trace['t'].iat[i])
        self.initial_distance = float(trace['distance'].iat[0])
        self.min_lower_bound = float(trace['lower_bound'].min())
        checked = trace.dropna(subset=['tcs_distance'])
        self.max_tcs_distance = float(checked['tcs_distance'].max())
        self.bound_ok = bool((checked['tcs_distance'] <= checked['error_bound'] + tolerance).all())
        self.excluded = self.min_distance > delta

    def __repr__(self):
        """Return string representation of the class."""
        return f"{self.__class__.__name__} {self.name} min={self.min_distance:.6g} at t={self.argmin_t:.6g}"

    def to_dict(self) -> Dict:
        """Return the JSON record of the trial, without the trace."""
        return {
            'control': {'name': self.name, 'pieces': self.control.to_dict()},
            'min_distance': self.min_distance,
            'argmin_t': self.argmin_t,
            'initial_distance': self.initial_distance,
            'lower_bound': self.min_lower_bound,
            'max_tcs_distance': self.max_tcs_distance,
            'bound_ok': self.bound_ok,
            'band_holds': self.band_holds,
        }


def _run_trial(job: Dict) -> TrialResult:
    """Propagate one control and record the distance traces, runs inside a worker process."""
    p, u, grid, target = job['potential'], job['control'], job['grid'], job['target']
    t_end, delta0, b = job['t_end'], job['delta0'], job['b']
    traj = integrate_newton(p, u, job['x0'], job['v0'], job['dt_ode'], t_end=t_end)
    ric = integrate_riccati(p, traj, b)
    band = check_q2_band(ric, t_end)
    psi0 = evaluate_packet(packet_at(traj, ric, 0), grid)
    rows = []
    for snapshot in iterate_propagation(
        psi0, p, u, 0.0, t_end, job['dt_pde'], job['tail_budget'], job['tail_cells'], job['workers']
    ):
        i = traj.index_of(snapshot.t)
        tcs_distance, bound = numpy.nan, numpy.nan
        if i is not None and i < len(ric):
            tcs_distance = l2_distance(snapshot.field, evaluate_packet(packet_at(traj, ric, i), grid))
            bound = error_bound(ric, p, traj.times[i])
        rows.append(
            {
                't': snapshot.t,
                'distance': l2_distance(snapshot.field, target),
                'tcs_distance': tcs_distance,
                'error_bound': bound,
                'lower_bound': lower_bound(delta0, b, p, snapshot.t),
            }
        )
    trace = pandas.DataFrame(rows, columns=['t', 'distance', 'tcs_distance', 'error_bound', 'lower_bound'])
    return TrialResult(job['name'], u, trace, job['delta'], job['tolerance'], band.holds)


class ObstructionReport:
    """Result of the adversarial experiment."""

    def __init__(
        self,
        fit: GaussianFit,
        t_star: float,
        t_double_star: float,
        delta: float,
        grid: Grid,
        trials: List[TrialResult],
    ):
        """Store the results, the verdict holds if every trial stays farther than delta from the target."""
        self.delta0 = fit.delta0
        self.argmin_q = fit.q
        self.argmin_alpha = fit.alpha
        self.coarse_delta0 = fit.coarse_delta0
        self.t_star = t_star
        self.t_double_star = t_double_star
        self.delta = delta
        self.grid = grid
        self.trials = trials
        self.verdict = all(trial.excluded for trial in trials)
        self.bound_ok = all(trial.bound_ok for trial in trials)

    def __repr__(self):
        """Return string representation of the class."""
        return f"{self.__class__.__name__} delta={self.delta:.6g} T**={self.t_double_star:.6g} verdict={self.verdict}"

    def to_dict(self) -> Dict:
        """Return the JSON report."""
        return {
            'delta0': self.delta0,
            'coarse_delta0': self.coarse_delta0,
            'q': matrix_to_list(self.argmin_q),
            'alpha': matrix_to_list(self.argmin_alpha),
            't_star': self.t_star,
            't_double_star': self.t_double_star,
            'delta': self.delta,
            'grid': self.grid.to_dict(),
            'trials': [trial.to_dict() for trial in self.trials],
            'verdict': self.verdict,
            'bound_ok': self.bound_ok,
        }

    def summary(self) -> pandas.DataFrame:
        """One row per trial."""
        return pandas.DataFrame(
            [
                {
                    'control': t.name,
                    'min_distance': t.min_distance,
                    'argmin_t': t.argmin_t,
                    'excluded': t.excluded,
                    'bound_ok': t.bound_ok,
                }
                for t in self.trials
            ]
        )


def run_obstruction_experiment(
    scenario,
    controls: Optional[Sequence[Union[ControlSignal, Tuple[str, ControlSignal]]]] = None,
    rng_seed: Optional[int] = None,
) -> ObstructionReport:
    """
    Check that no control brings the state within delta of the target before T**.

    The grid covers the centre trajectories of all controls on [0, T*] and the target, unless the scenario fixes a
    grid or the target comes from a field file. Trials run in a process pool when the scenario asks for more than one
    thread, the report order follows the control order.

    :param scenario: Scenario with a target
    :param controls: Controls or (name, control) pairs, the seeded battery of the scenario by default
    :param rng_seed: Seed of the battery, the seed of the scenario by default
    :raises EmptyControlSet: When no control is given.
    :raises DegenerateTarget: When the target has a Gaussian profile.
    :return: Report with one trial per control
    """
    if scenario.target is None:
        raise ScenarioError('target', 'an obstruction run needs a target')
    p, b, dim = scenario.potential, scenario.b, scenario.potential.dim
    seed = scenario.seed if rng_seed is None else rng_seed
    t_star = compute_t_star(b, p.hess_sup)
    if controls is None:
        controls = control_battery(
            dim,
            t_star,
            scenario.battery['a_max'],
            scenario.battery['n_random'],
            seed,
            getattr(p, 'omega_norm', 0.0),
        )
    named = [c if isinstance(c, tuple) else (f'control_{i:02d}', c) for i, c in enumerate(controls)]
    if not named:
        raise EmptyControlSet('The experiment needs at least one control.')

    grid = scenario.grid
    if scenario.target['kind'] == 'field_file':
        target = build_target(scenario.target)
        if grid is not None and target.grid != grid:
            raise GridMismatch(f'The target file lives on {target.grid}, not on {grid}.')
        grid = target.grid
    else:
        if grid is None:
            centers, v_max = [], 0.0
            for _, u in named:
                traj = integrate_newton(p, u, scenario.x0, scenario.v0, scenario.dt_ode, t_end=min(t_star, u.horizon))
                centers.append(traj.x)
                v_max = max(v_max, float(numpy.linalg.norm(traj.v, axis=1).max()))
            extra_lo, extra_hi = target_box(scenario.target, dim)
            grid = size_grid(b, centers, v_max, extra_lo, extra_hi)
        target = build_target(scenario.target, grid)

    fit = gaussian_set_distance(target, b, scenario.fit['n_eig'], scenario.fit['n_angle'], scenario.threads)
    t_double_star, delta = compute_t_double_star(fit.delta0, b, p, t_star, DEGENERATE_THRESHOLD)
    logger.info(f'T* = {t_star:.10g}, delta0 = {fit.delta0:.10g}, T** = {t_double_star:.10g}, delta = {delta:.10g}.')

    jobs = []
    for name, u in named:
        if u.horizon < t_double_star * (1 - 1e-12):
            raise ScenarioError('control', f'{name} ends at {u.horizon} before T** = {t_double_star}')
        jobs.append(
            {
                'name': name,
                'control': u,
                'potential': p,
                'b': b,
                'x0': scenario.x0,
                'v0': scenario.v0,
                'dt_ode': scenario.dt_ode,
                'dt_pde': scenario.dt_pde,
                't_end': t_double_star,
                'grid': grid,
                'target': target,
                'delta0': fit.delta0,
                'delta': delta,
                'tolerance': SOLVER_TOLERANCE,
                'tail_budget': TAIL_BUDGET,
                'tail_cells': TAIL_CELLS,
                'workers': 1,
            }
        )
    if scenario.threads > 1:
        pool = ProcessPool(nodes=scenario.threads)
        try:
            trials = pool.map(_run_trial, jobs)
        finally:
            pool.close()
            pool.join()
            pool.clear()
    else:
        trials = [_run_trial(job) for job in jobs]

    report = ObstructionReport(fit, t_star, t_double_star, delta, grid, trials)
    logger.info(f'\n\n{tabulate(report.summary(), floatfmt=".6f", headers="keys", tablefmt="pipe")}\n')
    if not report.verdict:
        logger.warning(f'{report}: a control came within delta of the target.')
    if not report.bound_ok:
        logger.warning(f'{report}: the measured TCS error exceeded the a priori bound.')
    return report
