"""Gaussian trajectory coherent states: evaluation, residual and the a priori error bound."""
import logging
from typing import Iterator

import numpy

from tcs_sdk import THREADS
from tcs_sdk.classical import ClassicalTrajectory, ControlSignal
from tcs_sdk.pde import ComplexField, Grid
from tcs_sdk.potentials import PotentialSpec
from tcs_sdk.riccati import RiccatiTrajectory
from tcs_sdk.utils import BlownUp, GridMismatch, HorizonNotCovered

logger = logging.getLogger(__name__)


def constant_cn(dim: int) -> float:
    """Return C_N = (int e^{-|y|^2} dy)^{1/2} = pi^{N/4}."""
    if dim < 1:
        raise ValueError(f'The dimension must be positive, got {dim}.')
    return float(numpy.pi ** (dim / 4))


def constant_c_star(dim: int) -> float:
    """
    Return C* = (int |y|^6 e^{-|y|^2} dy)^{1/2} / (6 C_N).

    Uses int |y|^6 e^{-|y|^2} dy = pi^{N/2} N (N + 2) (N + 4) / 8, so C* = sqrt(N (N + 2) (N + 4) / 8) / 6.
    """
    if dim < 1:
        raise ValueError(f'The dimension must be positive, got {dim}.')
    return float(numpy.sqrt(dim * (dim + 2) * (dim + 4) / 8) / 6)


class WavePacket:
    """Parameters of the Gaussian packet at one time."""

    def __init__(
        self,
        t: float,
        b: float,
        x_c: numpy.ndarray,
        v_c: numpy.ndarray,
        q1: numpy.ndarray,
        q2: numpy.ndarray,
        action_free: float,
        action_control: float,
        int_tr_q1: float,
        int_tr_q2: float,
    ):
        """Store the packet parameters, q2 must be positive definite."""
        self.t = float(t)
        self.b = float(b)
        self.x_c = numpy.asarray(x_c, dtype=float)
        self.v_c = numpy.asarray(v_c, dtype=float)
        self.q1 = numpy.asarray(q1, dtype=float)
        self.q2 = numpy.asarray(q2, dtype=float)
        self.action_free = float(action_free)
        self.action_control = float(action_control)
        self.int_tr_q1 = float(int_tr_q1)
        self.int_tr_q2 = float(int_tr_q2)
        if numpy.linalg.eigvalsh(self.q2)[0] <= 0:
            raise ValueError(f'{self} has a width matrix which is not positive definite.')

    def __repr__(self):
        """Return string representation of the class."""
        return f"{self.__class__.__name__} t={self.t} x_c={self.x_c.tolist()}"

    @property
    def dim(self) -> int:
        """Space dimension."""
        return self.x_c.size

    def analytic_norm(self) -> float:
        """Closed form L2 norm b^{N/4} e^{-int Tr Q1 / 2} / det(Q2)^{1/4}."""
        return float(
            self.b ** (self.dim / 4) * numpy.exp(-0.5 * self.int_tr_q1) / numpy.linalg.det(self.q2) ** 0.25
        )

    def evaluate(self, grid: Grid) -> ComplexField:
        """Sample the packet on a grid."""
        return evaluate_packet(self, grid)


def packet_at(traj: ClassicalTrajectory, ric: RiccatiTrajectory, i: int) -> WavePacket:
    """
    Assemble the packet at sample i of the two trajectories.

    :raises GridMismatch: When the trajectories do not share the grid.
    :raises BlownUp: When sample i lies at or beyond the blow-up of the Riccati trajectory.
    """
    if ric.times is not traj.times and not numpy.array_equal(ric.times, traj.times):
        raise GridMismatch(f'{traj} and {ric} do not share the time grid.')
    if i < 0:
        i += len(traj)
    if not 0 <= i < len(traj):
        raise IndexError(f'Sample {i} is not part of {traj}.')
    if i >= len(ric):
        raise BlownUp(f'Sample {i} at t = {traj.times[i]} lies beyond the blow-up of {ric}.')
    return WavePacket(
        t=traj.times[i],
        b=ric.b,
        x_c=traj.x[i],
        v_c=traj.v[i],
        q1=ric.q1[i],
        q2=ric.q2[i],
        action_free=traj.action_free[i],
        action_control=traj.action_control[i],
        int_tr_q1=ric.int_tr_q1[i],
        int_tr_q2=ric.int_tr_q2[i],
    )


def packets(traj: ClassicalTrajectory, ric: RiccatiTrajectory) -> Iterator[WavePacket]:
    """Iterate the packets of all samples before blow-up."""
    for i in range(len(ric)):
        yield packet_at(traj, ric, i)


def evaluate_packet(w: WavePacket, grid: Grid) -> ComplexField:
    """
    Sample psi(x) = b^{N/4} / C_N exp(Phi(x)) on a grid.

    With y = x - x_c the exponent reads
    Phi = i S_free + i <v_c, y> + i/2 <(Q1 + i Q2) y, y> + i S_control - 1/2 int Tr Q1 - i/2 int Tr Q2.
    """
    if grid.dim != w.dim:
        raise GridMismatch(f'{w} lives in dimension {w.dim}, {grid} in {grid.dim}.')
    y = grid.points - w.x_c
    quadratic = numpy.einsum('...i,ij,...j->...', y, w.q1 + 1j * w.q2, y)
    phase = (
        1j * w.action_free
        + 1j * (y @ w.v_c)
        + 0.5j * quadratic
        + 1j * w.action_control
        - 0.5 * w.int_tr_q1
        - 0.5j * w.int_tr_q2
    )
    prefactor = w.b ** (w.dim / 4) / constant_cn(w.dim)
    return ComplexField(grid, prefactor * numpy.exp(phase))


def residual_field(w: WavePacket, p: PotentialSpec, grid: Grid) -> ComplexField:
    """Sample r = -(V(x) - V(x_c) - <grad V(x_c), y> - 1/2 <V''(x_c) y, y>) psi, zero for quadratic V."""
    psi = evaluate_packet(w, grid)
    remainder = p.taylor_remainder(grid.points, w.x_c)
    return ComplexField(grid, -remainder * psi.values)


def residual_bound(w: WavePacket, p: PotentialSpec) -> float:
    """Pointwise in time bound ||r(t)|| <= C* |V'''| ||Q2(t)^-1||^{3/2}."""
    if p.third_sup == 0:
        return 0.0
    lam = numpy.linalg.eigvalsh(w.q2)[0]
    return float(constant_c_star(w.dim) * p.third_sup * lam**-1.5)


def error_bound(ric: RiccatiTrajectory, p: PotentialSpec, t: float) -> float:
    """
    Bound ||psi(t) - psi_tcs(t)|| <= C* |V'''| int_0^t ||Q2(s)^-1||^{3/2} ds.

    The integral is part of the Riccati state and therefore accumulated with the Runge-Kutta stages. Between samples
    it is interpolated linearly.

    :param ric: Riccati trajectory
    :param p: Potential
    :param t: Time, at most the last sample before blow-up
    :raises HorizonNotCovered: When t lies beyond the last valid sample.
    """
    if not ric.covers(t):
        raise HorizonNotCovered(f'{ric} does not reach t = {t}.')
    if p.third_sup == 0:
        return 0.0
    integral = numpy.interp(t, ric.valid_times, ric.int_inv_q2)
    return float(constant_c_star(ric.dim) * p.third_sup * integral)


def schrodinger_defect(
    traj: ClassicalTrajectory,
    ric: RiccatiTrajectory,
    i: int,
    p: PotentialSpec,
    u: ControlSignal,
    grid: Grid,
    workers: int = THREADS,
) -> ComplexField:
    """
    Evaluate i d/dt psi + 1/2 Laplace psi - V psi + <E, x> psi for the packet at sample i.

    The time derivative uses the fourth order central difference of the packets at samples i-2..i+2, which must be
    equally spaced; the Laplacian is spectral. The result agrees with residual_field up to O(dt^4) and the spectral
    error.
    """
    if i < 2 or i + 2 >= len(ric):
        raise IndexError(f'Sample {i} needs two neighbours on both sides in {ric}.')
    steps = numpy.diff(traj.times[i - 2 : i + 3])
    if not numpy.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise GridMismatch(f'Samples around {i} are not equally spaced: {steps}.')
    neighbours = [evaluate_packet(packet_at(traj, ric, j), grid).values for j in range(i - 2, i + 3)]
    dt_psi = (neighbours[0] - 8 * neighbours[1] + 8 * neighbours[3] - neighbours[4]) / (12 * steps[0])
    psi = neighbours[2]
    points = grid.points
    e = u.value(traj.times[i])
    defect = 1j * dt_psi + 0.5 * grid.laplacian(psi, workers) - p.value(points) * psi + (points @ e) * psi
    return ComplexField(grid, defect)
