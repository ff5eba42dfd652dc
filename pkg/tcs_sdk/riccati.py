"""Integrate the matrix Riccati equation of the packet width and certify the horizon on which it stays well posed."""
import logging
from typing import Optional, Tuple

import numpy
import pandas

from tcs_sdk import BAND_SLACK, BLOW_UP_GUARD, DET_TOLERANCE, T_CAP
from tcs_sdk.classical import ClassicalTrajectory
from tcs_sdk.potentials import PotentialSpec
from tcs_sdk.utils import GridMismatch, HorizonNotCovered, operator_norm, rk4_step, symmetrize

logger = logging.getLogger(__name__)

T_STAR_TOLERANCE = 1e-12


def horizon_residuals(b: float, hess_sup: float, t: float) -> Tuple[float, float]:
    """
    Return g1(t) - 1 and g2(t) - 1/2 of the two horizon conditions.

    g1(t) = t (1 + max(b, b^2) e^{4t} + hess_sup) and g2(t) = 2 t e^{2t}, both increasing in t.
    """
    g1 = t * (1.0 + max(b, b * b) * numpy.exp(4.0 * t) + hess_sup)
    g2 = 2.0 * t * numpy.exp(2.0 * t)
    return float(g1 - 1.0), float(g2 - 0.5)


def _feasible(b: float, hess_sup: float, t: float) -> bool:
    r1, r2 = horizon_residuals(b, hess_sup, t)
    return r1 <= -T_STAR_TOLERANCE and r2 <= 0.0


def compute_t_star(b: float, hess_sup: float, t_cap: float = T_CAP) -> float:
    """
    Compute the guaranteed horizon T* on which the width stays in the band [b/2, 3b/2].

    Bisection keeps the lower end feasible, so the returned time satisfies both conditions and lies within 1e-12 of
    the largest time that does.

    :param b: Initial width parameter, Q(0) = i b I
    :param hess_sup: Sup norm of the Hessian of the potential
    :param t_cap: Upper end of the search
    :return: T*
    """
    if not b > 0:
        raise ValueError(f'The width parameter must be positive, got {b}.')
    if hess_sup < 0:
        raise ValueError(f'The Hessian bound cannot be negative, got {hess_sup}.')
    if _feasible(b, hess_sup, t_cap):
        return float(t_cap)
    lo, hi = 0.0, float(t_cap)
    while hi - lo > T_STAR_TOLERANCE:
        mid = 0.5 * (lo + hi)
        if _feasible(b, hess_sup, mid):
            lo = mid
        else:
            hi = mid
    logger.debug(f'T* = {lo} for b = {b} and hess_sup = {hess_sup}.')
    return lo


class BandReport:
    """Extreme eigenvalues of Q2 and the norm of Q1 on [0, t_star]."""

    def __init__(self, b: float, t_star: float, min_eig: float, max_eig: float, max_q1_norm: float, slack: float):
        """Store the extremes and derive the verdicts."""
        self.b = b
        self.t_star = t_star
        self.min_eig = min_eig
        self.max_eig = max_eig
        self.max_q1_norm = max_q1_norm
        self.holds = bool(min_eig >= b / 2 - slack and max_eig <= 3 * b / 2 + slack)
        self.q1_bound_holds = bool(max_q1_norm <= 1 + slack)

    def __repr__(self):
        """Return string representation of the class."""
        return f"{self.__class__.__name__} [{self.min_eig:.6g}, {self.max_eig:.6g}] holds={self.holds}"

    def to_dict(self) -> dict:
        """Return the report as JSON compatible dictionary."""
        return {
            't_star': self.t_star,
            'min_eig': self.min_eig,
            'max_eig': self.max_eig,
            'holds': self.holds,
            'max_q1_norm': self.max_q1_norm,
            'q1_bound_holds': self.q1_bound_holds,
        }


class RiccatiTrajectory:
    """
    Samples of Q = Q1 + i Q2 and of the trace integrals on the grid of a classical trajectory.

    When the blow-up guard trips the samples end before the grid does: q1, q2 and the integrals hold the valid
    prefix and blow_up_at is the time of the first step which tripped the guard.
    """

    def __init__(
        self,
        times: numpy.ndarray,
        q1: numpy.ndarray,
        q2: numpy.ndarray,
        int_tr_q1: numpy.ndarray,
        int_tr_q2: numpy.ndarray,
        int_inv_q2: numpy.ndarray,
        int_q1_norm: numpy.ndarray,
        b: float,
        blow_up_at: Optional[float] = None,
    ):
        """
        Store the samples.

        :param times: The grid of the classical trajectory, the very same array object
        :param q1: Re Q at the valid samples, shape (n, N, N)
        :param q2: Im Q at the valid samples
        :param int_tr_q1: int_0^t Tr Q1 ds
        :param int_tr_q2: int_0^t Tr Q2 ds
        :param int_inv_q2: int_0^t ||Q2^-1||^{3/2} ds with the spectral norm
        :param int_q1_norm: int_0^t ||Q1|| ds with the spectral norm
        :param b: Initial width parameter
        :param blow_up_at: First time where a divergence guard tripped
        """
        self.times = times
        self.q1 = q1
        self.q2 = q2
        self.int_tr_q1 = int_tr_q1
        self.int_tr_q2 = int_tr_q2
        self.int_inv_q2 = int_inv_q2
        self.int_q1_norm = int_q1_norm
        self.b = b
        self.blow_up_at = blow_up_at

    def __repr__(self):
        """Return string representation of the class."""
        suffix = '' if self.blow_up_at is None else f', blow-up at {self.blow_up_at}'
        return f"{self.__class__.__name__} ({len(self)} samples, b={self.b}{suffix})"

    def __len__(self):
        """Number of valid samples."""
        return len(self.q1)

    @property
    def dim(self) -> int:
        """Space dimension."""
        return self.q1.shape[1]

    @property
    def valid_times(self) -> numpy.ndarray:
        """Times of the valid samples."""
        return self.times[: len(self)]

    @property
    def last_time(self) -> float:
        """Last time before blow-up."""
        return float(self.times[len(self) - 1])

    def covers(self, t: float) -> bool:
        """Check whether [0, t] lies before blow-up and inside the sample grid."""
        return t <= self.last_time + 1e-9 * max(1.0, abs(t))

    def to_dataframe(self) -> pandas.DataFrame:
        """Return columns t, vec(Q1), vec(Q2), int_tr_q1, int_tr_q2."""
        n = self.dim
        data = {'t': self.valid_times}
        for name, stack in (('q1', self.q1), ('q2', self.q2)):
            for i in range(n):
                for j in range(n):
                    data[f'{name}_{i + 1}{j + 1}'] = stack[:, i, j]
        data['int_tr_q1'] = self.int_tr_q1
        data['int_tr_q2'] = self.int_tr_q2
        return pandas.DataFrame(data)

    def to_csv(self, file_path: str) -> str:
        """Export the samples as CSV."""
        self.to_dataframe().to_csv(file_path, index=False, float_format='%.17g')
        return file_path


def _riccati_rhs(dim: int):
    """Right hand side of the real system (Q1, Q2) augmented by the four integrands."""
    size = dim * dim

    def rhs(state: numpy.ndarray, hessian: numpy.ndarray) -> numpy.ndarray:
        q1 = state[:size].reshape(dim, dim)
        q2 = state[size : 2 * size].reshape(dim, dim)
        dq1 = -q1 @ q1 + q2 @ q2 - hessian
        dq2 = -(q1 @ q2 + q2 @ q1)
        lam = numpy.linalg.eigvalsh(symmetrize(q2))[0]
        inv = lam**-1.5 if lam > 0 else numpy.inf
        integrands = [numpy.trace(q1), numpy.trace(q2), inv, operator_norm(symmetrize(q1))]
        return numpy.concatenate([dq1.ravel(), dq2.ravel(), integrands])

    return rhs


def integrate_riccati(
    p: PotentialSpec, traj: ClassicalTrajectory, b: float, guard: float = BLOW_UP_GUARD
) -> RiccatiTrajectory:
    """
    Integrate Q1' = -Q1^2 + Q2^2 - V''(x_c), Q2' = -(Q1 Q2 + Q2 Q1) with Q(0) = i b I.

    Uses the Runge-Kutta stages of the classical step sequence, V'' is sampled at the nodes and at the stored step
    midpoints of x_c. Q1 and Q2 are symmetrized after every step. The guard trips when ||Q1|| + ||Q2|| exceeds guard,
    when Q2 stops being positive definite, or when a value is not finite; the trajectory is truncated there.

    :param p: The potential the classical trajectory was integrated with
    :param traj: Classical trajectory
    :param b: Initial width parameter
    :param guard: Divergence threshold
    :return: Riccati trajectory on the same grid
    """
    if len(traj) == 0:
        raise GridMismatch(f'{traj} has an empty grid.')
    if not b > 0:
        raise ValueError(f'The width parameter must be positive, got {b}.')
    if traj.potential != p:
        logger.warning(f'{traj} was integrated with {traj.potential}, not with {p}.')
    dim = traj.dim
    size = dim * dim
    hess_nodes = p.hessian(traj.x)
    hess_mid = p.hessian(traj.x_mid)
    rhs = _riccati_rhs(dim)

    states = numpy.empty((len(traj), 2 * size + 4))
    states[0] = numpy.concatenate([numpy.zeros(size), (b * numpy.eye(dim)).ravel(), [0.0, 0.0, 0.0, 0.0]])
    blow_up_at = None
    n_valid = len(traj)
    for k in range(len(traj) - 1):
        h = traj.times[k + 1] - traj.times[k]
        state = rk4_step(rhs, states[k], h, hess_nodes[k], hess_mid[k], hess_nodes[k + 1])
        q1 = symmetrize(state[:size].reshape(dim, dim))
        q2 = symmetrize(state[size : 2 * size].reshape(dim, dim))
        state[:size], state[size : 2 * size] = q1.ravel(), q2.ravel()
        tripped = not numpy.all(numpy.isfinite(state))
        if not tripped:
            tripped = operator_norm(q1) + operator_norm(q2) > guard or numpy.linalg.eigvalsh(q2)[0] <= 0
        if tripped:
            blow_up_at = float(traj.times[k + 1])
            n_valid = k + 1
            logger.warning(f'Riccati guard tripped at t = {blow_up_at}, trajectory truncated to {n_valid} samples.')
            break
        states[k + 1] = state

    states = states[:n_valid]
    return RiccatiTrajectory(
        times=traj.times,
        q1=states[:, :size].reshape(-1, dim, dim),
        q2=states[:, size : 2 * size].reshape(-1, dim, dim),
        int_tr_q1=states[:, 2 * size],
        int_tr_q2=states[:, 2 * size + 1],
        int_inv_q2=states[:, 2 * size + 2],
        int_q1_norm=states[:, 2 * size + 3],
        b=float(b),
        blow_up_at=blow_up_at,
    )


def _samples_until(r: RiccatiTrajectory, t_star: float) -> numpy.ndarray:
    """Indices of the valid samples in [0, t_star], raise if the trajectory stops earlier."""
    if r.blow_up_at is not None and r.blow_up_at < t_star:
        logger.error(f'{r} blows up at {r.blow_up_at} before {t_star}.')
        raise HorizonNotCovered(f'{r} blows up at {r.blow_up_at} before {t_star}.')
    if not r.covers(t_star):
        raise HorizonNotCovered(f'{r} ends at {r.last_time} before {t_star}.')
    return numpy.flatnonzero(r.valid_times <= t_star + 1e-9 * max(1.0, t_star))


def check_q2_band(r: RiccatiTrajectory, t_star: float, slack: float = BAND_SLACK) -> BandReport:
    """
    Check b/2 <= Q2(t) <= 3b/2 on every sample of [0, t_star].

    :param r: Riccati trajectory
    :param t_star: End of the checked interval, usually T*
    :param slack: Absolute slack of the eigenvalue comparison
    :raises HorizonNotCovered: When r blows up or ends before t_star.
    """
    index = _samples_until(r, t_star)
    eigs = numpy.linalg.eigvalsh(r.q2[index])
    report = BandReport(
        b=r.b,
        t_star=float(t_star),
        min_eig=float(eigs.min()),
        max_eig=float(eigs.max()),
        max_q1_norm=float(operator_norm(r.q1[index]).max()),
        slack=slack,
    )
    if not report.holds:
        logger.warning(f'Q2 leaves the band [{r.b / 2}, {3 * r.b / 2}] on [0, {t_star}]: {report}.')
    return report


def check_gronwall(r: RiccatiTrajectory) -> float:
    """Return max_t ||Q2(t)|| / (b exp(2 int_0^t ||Q1|| ds)), which is <= 1 up to the integration error."""
    return float(numpy.max(operator_norm(r.q2) / (r.b * numpy.exp(2.0 * r.int_q1_norm))))


def det_residual(r: RiccatiTrajectory) -> numpy.ndarray:
    """Relative residual |det Q2 - b^N exp(-2 int Tr Q1)| / det Q2 per valid sample."""
    det = numpy.linalg.det(r.q2)
    expected = r.b**r.dim * numpy.exp(-2.0 * r.int_tr_q1)
    return numpy.abs(det - expected) / numpy.abs(det)


def det_identity_holds(r: RiccatiTrajectory, tolerance: float = DET_TOLERANCE) -> bool:
    """Check the determinant identity on every valid sample."""
    return bool(numpy.all(det_residual(r) <= tolerance))


def symmetry_defect(r: RiccatiTrajectory) -> float:
    """Max over samples of ||Q_i - Q_i^T|| / (1 + ||Q_i||) for Q1 and Q2."""
    defects = [
        operator_norm(stack - numpy.swapaxes(stack, -1, -2)) / (1.0 + operator_norm(stack)) for stack in (r.q1, r.q2)
    ]
    return float(max(d.max() for d in defects))
