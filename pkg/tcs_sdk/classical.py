"""Integrate the controlled Newton equation x'' + grad V(x) = E(t) and the action integrals of the packet phase."""
import abc
import logging
from typing import Dict, List, Optional, Tuple

import numpy
import pandas

from tcs_sdk import DT_ODE
from tcs_sdk.potentials import PotentialSpec
from tcs_sdk.utils import NonFiniteState, as_vector, rk4_step

logger = logging.getLogger(__name__)


class ControlPiece(metaclass=abc.ABCMeta):
    """Continuous closed form of the control E on the closed interval [t_start, t_end]."""

    kind = None

    def __init__(self, t_start: float, t_end: float):
        """Store the interval of the piece."""
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        if not (numpy.isfinite(self.t_start) and numpy.isfinite(self.t_end)) or self.t_end <= self.t_start:
            raise ValueError(f'{self} needs t_start < t_end.')

    def __repr__(self):
        """Return string representation of the class."""
        return f"{self.__class__.__name__} [{self.t_start}, {self.t_end}]"

    def __eq__(self, other) -> bool:
        """Compare two pieces by their serialized form."""
        return isinstance(other, ControlPiece) and self.to_dict() == other.to_dict()

    def __hash__(self):
        """Get unique hash for the piece."""
        return hash(repr(self.to_dict()))

    @property
    @abc.abstractmethod
    def dim(self) -> int:
        """Number of components of E."""

    @abc.abstractmethod
    def value(self, t: float) -> numpy.ndarray:
        """Evaluate the closed form, also at both ends of the interval."""

    @abc.abstractmethod
    def sup_norm(self) -> float:
        """Sup of |E(t)| over the piece."""

    @abc.abstractmethod
    def to_dict(self) -> Dict:
        """Return the tagged record used in scenario files."""

    @abc.abstractmethod
    def restrict(self, t_start: float, t_end: float) -> 'ControlPiece':
        """Return the same closed form on a sub interval."""


class ConstantPiece(ControlPiece):
    """E(t) = value."""

    kind = 'constant'

    def __init__(self, t_start: float, t_end: float, value):
        """Create a constant piece."""
        super().__init__(t_start, t_end)
        self._value = as_vector(value, name='value')

    @property
    def dim(self) -> int:
        """Number of components of E."""
        return self._value.size

    def value(self, t: float) -> numpy.ndarray:
        """Evaluate the closed form."""
        return self._value

    def sup_norm(self) -> float:
        """Sup of |E(t)| over the piece."""
        return float(numpy.linalg.norm(self._value))

    def restrict(self, t_start, t_end):
        """Return the same closed form on a sub interval."""
        return ConstantPiece(t_start, t_end, self._value)

    def to_dict(self) -> Dict:
        """Return the tagged record used in scenario files."""
        return {'kind': self.kind, 't_start': self.t_start, 't_end': self.t_end, 'value': self._value.tolist()}


class SinusoidPiece(ControlPiece):
    """E(t) = amplitude sin(angular_freq t + phase), the phase refers to the absolute time t = 0."""

    kind = 'sinusoid'

    def __init__(self, t_start: float, t_end: float, amplitude, angular_freq: float, phase: float = 0.0):
        """Create a sinusoidal piece."""
        super().__init__(t_start, t_end)
        self.amplitude = as_vector(amplitude, name='amplitude')
        self.angular_freq = float(angular_freq)
        self.phase = float(phase)

    @property
    def dim(self) -> int:
        """Number of components of E."""
        return self.amplitude.size

    def value(self, t: float) -> numpy.ndarray:
        """Evaluate the closed form."""
        return self.amplitude * numpy.sin(self.angular_freq * t + self.phase)

    def sup_norm(self) -> float:
        """Upper bound |amplitude|, attained once the piece covers a quarter period."""
        return float(numpy.linalg.norm(self.amplitude))

    def restrict(self, t_start, t_end):
        """Return the same closed form on a sub interval."""
        return SinusoidPiece(t_start, t_end, self.amplitude, self.angular_freq, self.phase)

    def to_dict(self) -> Dict:
        """Return the tagged record used in scenario files."""
        return {
            'kind': self.kind,
            't_start': self.t_start,
            't_end': self.t_end,
            'amplitude': self.amplitude.tolist(),
            'angular_freq': self.angular_freq,
            'phase': self.phase,
        }


class LinearPiece(ControlPiece):
    """E(t) = value0 + slope (t - t_start)."""

    kind = 'linear'

    def __init__(self, t_start: float, t_end: float, value0, slope):
        """Create a linear ramp."""
        super().__init__(t_start, t_end)
        self.value0 = as_vector(value0, name='value0')
        self.slope = as_vector(slope, self.value0.size, name='slope')

    @property
    def dim(self) -> int:
        """Number of components of E."""
        return self.value0.size

    def value(self, t: float) -> numpy.ndarray:
        """Evaluate the closed form."""
        return self.value0 + self.slope * (t - self.t_start)

    def sup_norm(self) -> float:
        """A linear function attains its maximal norm at an end point."""
        return float(max(numpy.linalg.norm(self.value(self.t_start)), numpy.linalg.norm(self.value(self.t_end))))

    def restrict(self, t_start, t_end):
        """Return the same closed form on a sub interval."""
        return LinearPiece(t_start, t_end, self.value(t_start), self.slope)

    def to_dict(self) -> Dict:
        """Return the tagged record used in scenario files."""
        return {
            'kind': self.kind,
            't_start': self.t_start,
            't_end': self.t_end,
            'value0': self.value0.tolist(),
            'slope': self.slope.tolist(),
        }


PIECE_KINDS = {ConstantPiece.kind: ConstantPiece, SinusoidPiece.kind: SinusoidPiece, LinearPiece.kind: LinearPiece}


def piece_from_dict(record: Dict) -> ControlPiece:
    """Build a control piece from its tagged record."""
    record = dict(record)
    kind = record.pop('kind', None)
    if kind not in PIECE_KINDS:
        raise ValueError(f'Unknown control piece kind {kind!r}, use one of {sorted(PIECE_KINDS)}.')
    try:
        return PIECE_KINDS[kind](**record)
    except TypeError as e:
        raise ValueError(f'Control piece {kind!r} cannot be built from {sorted(record)}: {e}')


class ControlSignal:
    """Piecewise continuous control E: [0, T] -> R^N given by pieces which partition [0, T]."""

    def __init__(self, pieces: List[ControlPiece]):
        """
        Validate that the pieces partition [0, T] without gaps or overlaps.

        :param pieces: Pieces ordered in time, the first starts at 0
        """
        if not pieces:
            raise ValueError('A ControlSignal needs at least one piece.')
        self.pieces = list(pieces)
        self.horizon = self.pieces[-1].t_end
        tolerance = 1e-15 * max(1.0, self.horizon)
        if abs(self.pieces[0].t_start) > tolerance:
            raise ValueError(f'{self} must start at t = 0, not at {self.pieces[0].t_start}.')
        for before, after in zip(self.pieces, self.pieces[1:]):
            if abs(after.t_start - before.t_end) > tolerance:
                raise ValueError(f'{before} and {after} of {self} do not abut.')
        if len({piece.dim for piece in self.pieces}) != 1:
            raise ValueError(f'All pieces of {self} must have the same dimension.')
        self.dim = self.pieces[0].dim
        self._starts = numpy.array([piece.t_start for piece in self.pieces])

    def __repr__(self):
        """Return string representation of the class."""
        return f"{self.__class__.__name__} ({len(self.pieces)} pieces on [0, {self.horizon}])"

    def __eq__(self, other) -> bool:
        """Compare two signals piece by piece."""
        return isinstance(other, ControlSignal) and self.pieces == other.pieces

    def __hash__(self):
        """Get unique hash for the signal."""
        return hash(tuple(self.pieces))

    @classmethod
    def zero(cls, dim: int, horizon: float) -> 'ControlSignal':
        """No control at all."""
        return cls([ConstantPiece(0.0, horizon, numpy.zeros(dim))])

    @classmethod
    def constant(cls, value, horizon: float) -> 'ControlSignal':
        """One constant piece."""
        return cls([ConstantPiece(0.0, horizon, value)])

    @classmethod
    def piecewise_constant(cls, values: numpy.ndarray, horizon: float) -> 'ControlSignal':
        """Equal length constant pieces, values has shape (pieces, N)."""
        values = numpy.atleast_2d(numpy.asarray(values, dtype=float))
        edges = numpy.linspace(0.0, horizon, len(values) + 1)
        edges[-1] = horizon
        return cls([ConstantPiece(edges[i], edges[i + 1], values[i]) for i in range(len(values))])

    @classmethod
    def from_dict(cls, records: List[Dict]) -> 'ControlSignal':
        """Build a signal from the list of tagged pieces of a scenario file."""
        return cls([piece_from_dict(record) for record in records])

    def to_dict(self) -> List[Dict]:
        """Return the list of tagged pieces."""
        return [piece.to_dict() for piece in self.pieces]

    @property
    def breakpoints(self) -> numpy.ndarray:
        """Interior times where E may jump."""
        return self._starts[1:]

    def piece_index(self, t: float) -> int:
        """Index of the piece which holds t, the later piece at a breakpoint."""
        return int(numpy.clip(numpy.searchsorted(self._starts, t, side='right') - 1, 0, len(self.pieces) - 1))

    def value(self, t: float) -> numpy.ndarray:
        """Evaluate E(t), right continuous at breakpoints."""
        return self.pieces[self.piece_index(t)].value(t)

    def sup_norm(self) -> float:
        """Sup norm of E over [0, T]."""
        return max(piece.sup_norm() for piece in self.pieces)

    def restrict(self, t_end: float) -> 'ControlSignal':
        """Return the signal on [0, t_end]."""
        if t_end > self.horizon * (1 + 1e-12):
            raise ValueError(f'{self} is not defined up to {t_end}.')
        pieces = [piece for piece in self.pieces if piece.t_start < t_end]
        pieces[-1] = pieces[-1].restrict(pieces[-1].t_start, t_end)
        return ControlSignal(pieces)


def step_sequence(
    u: ControlSignal, dt: float, t_start: float = 0.0, t_end: Optional[float] = None
) -> Tuple[numpy.ndarray, numpy.ndarray]:
    """
    Build the sorted union of uniform steps and control breakpoints on [t_start, t_end].

    No step straddles a breakpoint, so E is continuous inside every step. Uniform nodes closer than 1e-9 dt to a
    breakpoint are merged into it.

    :param u: Control signal
    :param dt: Uniform step length
    :param t_start: First node
    :param t_end: Last node, defaults to the horizon of the control
    :return: Nodes and, per step, the index of the control piece which holds it
    """
    if dt <= 0:
        raise ValueError(f'The time step must be positive, got {dt}.')
    t_end = u.horizon if t_end is None else float(t_end)
    if t_end > u.horizon * (1 + 1e-12) or t_end <= t_start:
        raise ValueError(f'Cannot build steps on [{t_start}, {t_end}] for {u}.')
    tolerance = 1e-9 * dt
    n = int(numpy.floor((t_end - t_start) / dt + 1e-9))
    breaks = u.breakpoints[(u.breakpoints > t_start) & (u.breakpoints < t_end)]
    candidates = numpy.sort(numpy.concatenate([t_start + numpy.arange(n + 1) * dt, breaks, [t_end]]))
    candidates = candidates[candidates <= t_end + tolerance]
    kept = [candidates[0]]
    for t in candidates[1:]:
        if t - kept[-1] > tolerance:
            kept.append(t)
    times = numpy.array(kept)
    for exact in list(breaks) + [t_start, t_end]:
        times[numpy.argmin(numpy.abs(times - exact))] = exact
    pieces = numpy.array([u.piece_index(0.5 * (a + b)) for a, b in zip(times[:-1], times[1:])], dtype=int)
    return times, pieces


class ClassicalTrajectory:
    """Samples of the classical trajectory and of the action integrals on the exact step sequence."""

    def __init__(
        self,
        times: numpy.ndarray,
        x: numpy.ndarray,
        v: numpy.ndarray,
        action_free: numpy.ndarray,
        action_control: numpy.ndarray,
        work: numpy.ndarray,
        x_mid: numpy.ndarray,
        piece_index: numpy.ndarray,
        potential: PotentialSpec,
        control: ControlSignal,
    ):
        """
        Store the samples.

        :param times: Strictly increasing nodes t_0 = 0 < ... < t_M
        :param x: x_c at the nodes, shape (M + 1, N)
        :param v: dx_c/dt at the nodes
        :param action_free: int_0^t (|v|^2 / 2 - V(x_c)) ds at the nodes
        :param action_control: int_0^t <x_c, E> ds at the nodes
        :param work: int_0^t <E, dx_c/dt> ds at the nodes
        :param x_mid: x_c at the middle of every step, shape (M, N), needed by the Riccati stages
        :param piece_index: Control piece of every step
        :param potential: Potential used to integrate
        :param control: Control used to integrate
        """
        self.times = times
        self.x = x
        self.v = v
        self.action_free = action_free
        self.action_control = action_control
        self.work = work
        self.x_mid = x_mid
        self.piece_index = piece_index
        self.potential = potential
        self.control = control

    def __repr__(self):
        """Return string representation of the class."""
        return f"{self.__class__.__name__} ({len(self.times)} samples on [0, {self.times[-1]}])"

    def __len__(self):
        """Number of samples."""
        return len(self.times)

    @property
    def dim(self) -> int:
        """Space dimension."""
        return self.x.shape[1]

    def index_of(self, t: float, tolerance: float = 1e-9) -> Optional[int]:
        """Return the index of the sample at time t or None if t is not a node."""
        i = int(numpy.argmin(numpy.abs(self.times - t)))
        return i if abs(self.times[i] - t) <= tolerance * max(1.0, abs(t)) else None

    def to_dataframe(self) -> pandas.DataFrame:
        """Return the samples with columns t, x_1..x_N, v_1..v_N, action_free, action_control."""
        data = {'t': self.times}
        for j in range(self.dim):
            data[f'x_{j + 1}'] = self.x[:, j]
        for j in range(self.dim):
            data[f'v_{j + 1}'] = self.v[:, j]
        data['action_free'] = self.action_free
        data['action_control'] = self.action_control
        return pandas.DataFrame(data)

    def to_csv(self, file_path: str) -> str:
        """Export the samples as CSV."""
        self.to_dataframe().to_csv(file_path, index=False, float_format='%.17g')
        return file_path


def _newton_rhs(p: PotentialSpec, dim: int):
    """Right hand side of the augmented first order system (x, v, action_free, action_control, work)."""

    def rhs(state: numpy.ndarray, e: numpy.ndarray) -> numpy.ndarray:
        x, v = state[:dim], state[dim : 2 * dim]
        return numpy.concatenate([v, e - p.gradient(x), [0.5 * (v @ v) - p.value(x), x @ e, v @ e]])

    return rhs


def integrate_newton(
    p: PotentialSpec, u: ControlSignal, x0, v0, dt: float = DT_ODE, t_end: Optional[float] = None
) -> ClassicalTrajectory:
    """
    Integrate x'' + grad V(x) = E(t) with the classic fourth order Runge-Kutta scheme.

    The action integrands and the power of E are appended to the state, so the integrals are accumulated with the
    same stages (Simpson's rule where the integrand only depends on t). Steps never straddle a breakpoint of E: every
    step evaluates E with the closed form of the piece which holds it, also at the step ends.

    :param p: Potential
    :param u: Control
    :param x0: Initial position
    :param v0: Initial velocity
    :param dt: Uniform step length
    :param t_end: Final time, defaults to the horizon of u
    :raises NonFiniteState: When a component becomes NaN or Inf.
    :return: Samples on the step sequence
    """
    dim = p.dim
    if u.dim != dim:
        raise ValueError(f'{u} has {u.dim} components but {p} lives in dimension {dim}.')
    x0, v0 = as_vector(x0, dim, name='x0'), as_vector(v0, dim, name='v0')
    times, piece_index = step_sequence(u, dt, t_end=t_end)
    rhs = _newton_rhs(p, dim)

    states = numpy.empty((len(times), 2 * dim + 3))
    x_mid = numpy.empty((len(times) - 1, dim))
    states[0] = numpy.concatenate([x0, v0, [0.0, 0.0, 0.0]])
    for k, (t, t_next) in enumerate(zip(times[:-1], times[1:])):
        piece = u.pieces[piece_index[k]]
        h = t_next - t
        e_left, e_mid, e_right = piece.value(t), piece.value(t + 0.5 * h), piece.value(t_next)
        states[k + 1] = rk4_step(rhs, states[k], h, e_left, e_mid, e_right)
        # midpoint by a half step from the node, no interpolation
        x_mid[k] = rk4_step(rhs, states[k], 0.5 * h, e_left, piece.value(t + 0.25 * h), e_mid)[:dim]
        if not numpy.all(numpy.isfinite(states[k + 1])):
            logger.error(f'Classical state is not finite at t = {t_next} for {p} and {u}.')
            raise NonFiniteState(f'Classical state is not finite at t = {t_next}.')

    logger.debug(f'Integrated {p} under {u} with {len(times) - 1} steps.')
    return ClassicalTrajectory(
        times=times,
        x=states[:, :dim],
        v=states[:, dim : 2 * dim],
        action_free=states[:, 2 * dim],
        action_control=states[:, 2 * dim + 1],
        work=states[:, 2 * dim + 2],
        x_mid=x_mid,
        piece_index=piece_index,
        potential=p,
        control=u,
    )


def energy(p: PotentialSpec, traj: ClassicalTrajectory, i: int) -> float:
    """Return |v_i|^2 / 2 + V(x_i)."""
    return float(0.5 * traj.v[i] @ traj.v[i] + p.value(traj.x[i]))


def work(traj: ClassicalTrajectory, i: int) -> float:
    """Return int_0^{t_i} <E, dx_c/dt> ds, the work of the control, which equals energy(i) - energy(0)."""
    return float(traj.work[i])
