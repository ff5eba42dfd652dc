"""Reference split-step Fourier solver of the controlled Schroedinger equation on a periodic box."""
import logging
import os
from typing import Iterator, List, Optional, Sequence

import numpy
import pandas
import scipy.fft

from tcs_sdk import DT_PDE, TAIL_BUDGET, TAIL_CELLS, THREADS
from tcs_sdk.classical import ControlSignal, step_sequence
from tcs_sdk.potentials import PotentialSpec
from tcs_sdk.utils import GridMismatch, NonFiniteState, TailMassExceeded, is_file, next_power_of_two

logger = logging.getLogger(__name__)


class Grid:
    """
    Uniform periodic grid on the box [lo, hi) in dimension 1 or 2.

    Node j of an axis sits at lo + j h with h = (hi - lo) / points, hi is identified with lo.
    """

    def __init__(self, lo, hi, points):
        """
        Validate the box and the number of points.

        :param lo: Lower corner
        :param hi: Upper corner, componentwise larger than lo
        :param points: Power of two per axis, a single integer is used for every axis
        """
        self.lo = numpy.atleast_1d(numpy.asarray(lo, dtype=float))
        self.hi = numpy.atleast_1d(numpy.asarray(hi, dtype=float))
        self.dim = self.lo.size
        if self.dim not in (1, 2):
            raise ValueError(f'Grids are available in dimension 1 and 2, not {self.dim}.')
        if self.hi.size != self.dim or not numpy.all(self.hi > self.lo):
            raise ValueError(f'The box [{self.lo}, {self.hi}] is empty or has mismatching corners.')
        points = numpy.atleast_1d(numpy.asarray(points, dtype=int))
        if points.size == 1:
            points = numpy.full(self.dim, points[0])
        if points.size != self.dim or any(n < 2 or n & (n - 1) for n in points):
            raise ValueError(f'Points per axis must be powers of two, got {points.tolist()}.')
        self.points_per_axis = points
        self.spacing = (self.hi - self.lo) / self.points_per_axis
        self.axes = [self.lo[j] + self.spacing[j] * numpy.arange(self.points_per_axis[j]) for j in range(self.dim)]

    def __repr__(self):
        """Return string representation of the class."""
        return f"{self.__class__.__name__} {self.lo.tolist()} - {self.hi.tolist()} x {self.points_per_axis.tolist()}"

    def __eq__(self, other) -> bool:
        """Two grids are equal if they have the same box and points."""
        return (
            isinstance(other, Grid)
            and self.dim == other.dim
            and numpy.array_equal(self.lo, other.lo)
            and numpy.array_equal(self.hi, other.hi)
            and numpy.array_equal(self.points_per_axis, other.points_per_axis)
        )

    def __hash__(self):
        """Get unique hash for the grid."""
        return hash((tuple(self.lo), tuple(self.hi), tuple(self.points_per_axis)))

    @property
    def shape(self) -> tuple:
        """Shape of the sample arrays."""
        return tuple(int(n) for n in self.points_per_axis)

    @property
    def cell_volume(self) -> float:
        """h^N, the quadrature weight."""
        return float(numpy.prod(self.spacing))

    @property
    def points(self) -> numpy.ndarray:
        """Coordinates of all nodes, shape (*shape, N)."""
        if not hasattr(self, '_points'):
            self._points = numpy.stack(numpy.meshgrid(*self.axes, indexing='ij'), axis=-1)
        return self._points

    @property
    def wavenumbers(self) -> List[numpy.ndarray]:
        """Wavenumbers k = 2 pi m / L per axis, in the order of the forward transform."""
        return [2 * numpy.pi * scipy.fft.fftfreq(int(n), d=h) for n, h in zip(self.points_per_axis, self.spacing)]

    @property
    def k_squared(self) -> numpy.ndarray:
        """|k|^2 on the transform grid."""
        if not hasattr(self, '_k_squared'):
            mesh = numpy.meshgrid(*self.wavenumbers, indexing='ij')
            self._k_squared = sum(k**2 for k in mesh)
        return self._k_squared

    def laplacian(self, values: numpy.ndarray, workers: int = THREADS) -> numpy.ndarray:
        """Spectral Laplacian of periodic samples."""
        return scipy.fft.ifftn(-self.k_squared * scipy.fft.fftn(values, workers=workers), workers=workers)

    def boundary_mask(self, cells: int = TAIL_CELLS) -> numpy.ndarray:
        """Mask of the nodes within cells of the boundary of any axis."""
        mask = numpy.zeros(self.shape, dtype=bool)
        for j, n in enumerate(self.shape):
            index = [slice(None)] * self.dim
            index[j] = numpy.r_[0:cells, n - cells : n]
            mask[tuple(index)] = True
        return mask

    def to_dict(self) -> dict:
        """Return lo, hi and points."""
        return {'lo': self.lo.tolist(), 'hi': self.hi.tolist(), 'points': self.points_per_axis.tolist()}


class ComplexField:
    """Complex samples of a wave function on a grid."""

    def __init__(self, grid: Grid, values: numpy.ndarray):
        """Store the samples, their shape must match the grid."""
        values = numpy.asarray(values, dtype=complex)
        if values.shape != grid.shape:
            raise GridMismatch(f'Values of shape {values.shape} do not fit {grid}.')
        self.grid = grid
        self.values = values

    def __repr__(self):
        """Return string representation of the class."""
        return f"{self.__class__.__name__} on {self.grid}"

    def norm(self) -> float:
        """Discrete L2 norm."""
        return l2_norm(self)

    def abs(self) -> 'ComplexField':
        """Return the modulus as a field."""
        return ComplexField(self.grid, numpy.abs(self.values))

    def normalized(self) -> 'ComplexField':
        """Return the field divided by its norm."""
        return ComplexField(self.grid, self.values / self.norm())

    def to_dataframe(self) -> pandas.DataFrame:
        """Return columns x_1..x_N, re, im in C order of the grid."""
        points = self.grid.points.reshape(-1, self.grid.dim)
        data = {f'x_{j + 1}': points[:, j] for j in range(self.grid.dim)}
        data['re'] = self.values.real.ravel()
        data['im'] = self.values.imag.ravel()
        return pandas.DataFrame(data)

    def to_csv(self, file_path: str) -> str:
        """Export as CSV."""
        self.to_dataframe().to_csv(file_path, index=False, float_format='%.17g')
        return file_path

    def to_npz(self, file_path: str) -> str:
        """Export grid and samples as binary numpy archive."""
        numpy.savez(
            file_path,
            lo=self.grid.lo,
            hi=self.grid.hi,
            points=self.grid.points_per_axis,
            values=self.values,
        )
        return file_path

    @classmethod
    def from_file(cls, file_path: str) -> 'ComplexField':
        """
        Load a field written by to_npz or to_csv.

        A CSV file must hold the full grid in C order, the grid is recovered from the distinct coordinates.
        """
        is_file(file_path)
        if file_path.endswith('.npz'):
            with numpy.load(file_path) as data:
                grid = Grid(data['lo'], data['hi'], data['points'])
                return cls(grid, data['values'])
        df = pandas.read_csv(file_path)
        columns = [c for c in df.columns if c.startswith('x_')]
        axes = [numpy.unique(df[c].to_numpy()) for c in columns]
        spacing = [axis[1] - axis[0] for axis in axes]
        grid = Grid([a[0] for a in axes], [a[-1] + h for a, h in zip(axes, spacing)], [len(a) for a in axes])
        values = (df['re'].to_numpy() + 1j * df['im'].to_numpy()).reshape(grid.shape)
        return cls(grid, values)


def l2_norm(f: ComplexField) -> float:
    """Return sqrt(sum |f|^2 h^N)."""
    return float(numpy.sqrt(numpy.sum(numpy.abs(f.values) ** 2) * f.grid.cell_volume))


def l2_distance(f: ComplexField, g: ComplexField) -> float:
    """Return the discrete L2 distance of two fields on the same grid."""
    if f.grid != g.grid:
        raise GridMismatch(f'{f} and {g} live on different grids.')
    return float(numpy.sqrt(numpy.sum(numpy.abs(f.values - g.values) ** 2) * f.grid.cell_volume))


def tail_mass(f: ComplexField, cells: int = TAIL_CELLS) -> float:
    """Probability mass in the boundary cells relative to the total mass."""
    density = numpy.abs(f.values) ** 2
    return float(density[f.grid.boundary_mask(cells)].sum() / density.sum())


def size_grid(
    b: float,
    centers: Sequence[numpy.ndarray],
    v_max: float = 0.0,
    extra_lo: Optional[numpy.ndarray] = None,
    extra_hi: Optional[numpy.ndarray] = None,
) -> Grid:
    """
    Size a grid for packets of width parameter b which follow the given centre trajectories.

    The box is the hull of the centres (and of an extra box, e.g. a target support) padded by 8 (b/2)^{-1/2} per side
    and rounded outwards to integers. The spacing resolves the narrowest packet of the width band with six points per
    standard deviation and the fastest packet below the Nyquist wavenumber.

    :param b: Width parameter
    :param centers: Arrays of centre positions of shape (samples, N)
    :param v_max: Largest centre speed
    :param extra_lo: Lower corner of an additional box to cover
    :param extra_hi: Upper corner of an additional box to cover
    """
    stacked = numpy.concatenate([numpy.atleast_2d(c) for c in centers])
    lo, hi = stacked.min(axis=0), stacked.max(axis=0)
    if extra_lo is not None:
        lo, hi = numpy.minimum(lo, extra_lo), numpy.maximum(hi, extra_hi)
    pad = 8.0 * (b / 2) ** -0.5
    lo, hi = numpy.floor(lo - pad), numpy.ceil(hi + pad)
    sigma_min = (1.5 * b) ** -0.5
    h = min(sigma_min / 6, numpy.pi / (v_max + 8 * numpy.sqrt(1.5 * b)))
    points = [next_power_of_two((b_hi - b_lo) / h) for b_lo, b_hi in zip(lo, hi)]
    grid = Grid(lo, hi, points)
    logger.debug(f'Sized {grid} for b = {b} and speed {v_max}.')
    return grid


class Snapshot:
    """State after a propagation step."""

    def __init__(self, t: float, field: ComplexField, tail: float):
        """Store time, field and boundary mass."""
        self.t = t
        self.field = field
        self.tail = tail

    def __repr__(self):
        """Return string representation of the class."""
        return f"{self.__class__.__name__} t={self.t}"


def iterate_propagation(
    f0: ComplexField,
    p: PotentialSpec,
    u: ControlSignal,
    t0: float,
    t1: float,
    dt: float = DT_PDE,
    tail_budget: float = TAIL_BUDGET,
    tail_cells: int = TAIL_CELLS,
    workers: int = THREADS,
) -> Iterator[Snapshot]:
    """
    Yield the state at every node of the step sequence on [t0, t1], the initial state first.

    Each Strang step multiplies by exp(-i dt/2 (V - <E_mid, x>)), applies exp(-i dt |k|^2 / 2) in Fourier space and
    multiplies by the potential factor again. E_mid is the control at the step midpoint, taken from the piece which
    holds the step.

    :raises TailMassExceeded: When the boundary mass exceeds tail_budget.
    :raises NonFiniteState: When the state stops being finite.
    """
    grid = f0.grid
    if grid.dim != p.dim or u.dim != p.dim:
        raise GridMismatch(f'{grid}, {p} and {u} do not share the dimension.')
    times, piece_index = step_sequence(u, dt, t_start=t0, t_end=t1)
    points = grid.points
    potential = p.value(points)
    kinetic = {}
    mask = grid.boundary_mask(tail_cells)
    psi = f0.values.copy()

    def checked_tail(values, t):
        density = numpy.abs(values) ** 2
        tail = float(density[mask].sum() / density.sum())
        if tail > tail_budget:
            logger.error(f'Boundary mass {tail:.3e} exceeds {tail_budget:.1e} at t = {t} on {grid}.')
            raise TailMassExceeded(f'Boundary mass {tail:.3e} exceeds {tail_budget:.1e} at t = {t} on {grid}.')
        return tail

    yield Snapshot(float(times[0]), ComplexField(grid, psi.copy()), checked_tail(psi, times[0]))
    for k, (t, t_next) in enumerate(zip(times[:-1], times[1:])):
        h = t_next - t
        e_mid = u.pieces[piece_index[k]].value(t + 0.5 * h)
        half = numpy.exp(-0.5j * h * (potential - points @ e_mid))
        if h not in kinetic:
            kinetic[h] = numpy.exp(-0.5j * h * grid.k_squared)
        psi = half * psi
        psi = scipy.fft.ifftn(kinetic[h] * scipy.fft.fftn(psi, workers=workers), workers=workers)
        psi = half * psi
        if not numpy.all(numpy.isfinite(psi)):
            raise NonFiniteState(f'PDE state is not finite at t = {t_next}.')
        yield Snapshot(float(t_next), ComplexField(grid, psi), checked_tail(psi, t_next))


class Propagation:
    """Final state and stored snapshots of a propagation."""

    def __init__(self, final: ComplexField, snapshots: List[Snapshot]):
        """Store the results."""
        self.final = final
        self.snapshots = snapshots

    def __repr__(self):
        """Return string representation of the class."""
        return f"{self.__class__.__name__} ({len(self.snapshots)} snapshots)"

    @property
    def times(self) -> numpy.ndarray:
        """Times of the snapshots."""
        return numpy.array([s.t for s in self.snapshots])

    def index(self) -> pandas.DataFrame:
        """Return columns t, filename, norm, tail_mass."""
        return pandas.DataFrame(
            {
                't': [s.t for s in self.snapshots],
                'filename': [f'snapshot_{i:05d}.npz' for i in range(len(self.snapshots))],
                'norm': [s.field.norm() for s in self.snapshots],
                'tail_mass': [s.tail for s in self.snapshots],
            }
        )

    def export(self, directory: str, every: int = 1) -> str:
        """Write every n-th snapshot as npz plus index.csv and return the index path."""
        os.makedirs(directory, exist_ok=True)
        index = self.index().iloc[::every]
        for i in index.index:
            self.snapshots[i].field.to_npz(os.path.join(directory, index.at[i, 'filename']))
        file_path = os.path.join(directory, 'index.csv')
        index.to_csv(file_path, index=False, float_format='%.17g')
        logger.info(f'Exported {len(index)} snapshots to {directory}.')
        return file_path


def propagate(
    f0: ComplexField,
    p: PotentialSpec,
    u: ControlSignal,
    t0: float,
    t1: float,
    dt: float = DT_PDE,
    keep_snapshots: bool = False,
    tail_budget: float = TAIL_BUDGET,
    tail_cells: int = TAIL_CELLS,
    workers: int = THREADS,
) -> Propagation:
    """
    Propagate f0 from t0 to t1 with Strang splitting.

    :param f0: Initial state
    :param p: Potential
    :param u: Control, defined up to t1
    :param t0: Initial time
    :param t1: Final time
    :param dt: Uniform step length, steps are split at control breakpoints
    :param keep_snapshots: Store the state at every node, otherwise only the final one
    :param tail_budget: Largest admissible boundary mass
    :param tail_cells: Width of the boundary layer in cells
    :param workers: Threads of the Fourier transforms
    :return: Final state and snapshots
    """
    snapshots = []
    last = None
    for snapshot in iterate_propagation(f0, p, u, t0, t1, dt, tail_budget, tail_cells, workers):
        last = snapshot
        if keep_snapshots:
            snapshots.append(snapshot)
    if not keep_snapshots:
        snapshots = [last]
    drift = abs(last.field.norm() - f0.norm())
    logger.debug(f'Propagated to t = {last.t}, norm drift {drift:.2e}.')
    return Propagation(last.field, snapshots)
