"""Utils for the tcs_sdk package."""
import datetime
import json
import logging
import os
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy

logger = logging.getLogger(__name__)


class NumericalGuard(Exception):
    """Mark an error raised by a numerical guard, i.e. the run is invalid but the inputs may be fine."""


class NonFiniteState(NumericalGuard, ArithmeticError):
    """A state component became NaN or Inf."""


class TailMassExceeded(NumericalGuard, ArithmeticError):
    """Probability mass close to the periodic boundary exceeds the budget."""


class HorizonNotCovered(NumericalGuard, ValueError):
    """A trajectory ends, or blows up, before the requested time."""


class BlownUp(NumericalGuard, IndexError):
    """A sample beyond the blow-up of the Riccati trajectory was requested."""


class GridMismatch(ValueError):
    """Two objects do not live on the same time or space grid."""


class NotNormalized(ValueError):
    """A state is expected to have unit L2 norm."""


class DegenerateTarget(ValueError):
    """The target has a Gaussian profile, so no obstruction can be certified."""


class EmptyControlSet(ValueError):
    """An experiment needs at least one control."""


class UnsupportedPotential(NotImplementedError):
    """The potential kind is declared but not available."""


class ScenarioError(ValueError):
    """Invalid scenario configuration, carries the path of the offending field."""

    def __init__(self, field: str, message: str):
        """
        Store the field path next to the message.

        :param field: Dotted path of the field in the scenario, e.g. "potential.omega_sq"
        :param message: What is wrong with the value
        """
        self.field = field
        super().__init__(f'{field}: {message}')


def get_timestamp(tcs_format='%Y-%m-%d-%H-%M-%S') -> str:
    """
    Return formatted timestamp.

    :param tcs_format: Format of the timestamp (e.g. year-month-day-hour-min-sec)
    :return: Timestamp
    """
    now = datetime.datetime.now()
    timestamp = now.strftime(tcs_format)
    return timestamp


def is_file(file_path, raise_exception=True, allow_empty=False) -> bool:
    """
    Check if file is available or raise error if it does not exist.

    :param file_path: Path to the file to be checked
    :param raise_exception: Will raise an exception if file is not available
    :param allow_empty: Bool to allow empty files
    :return: True or false depending on the existence of the file
    """
    if os.path.isfile(file_path):
        file_size = os.path.getsize(file_path)
        if file_size > 0 or allow_empty:
            logger.debug(f"File expected and found at {file_path} with size {file_size}.")
            return True
        else:
            if raise_exception:
                raise FileExistsError(f'Please check your file {file_path} with size {file_size} at {file_path}.')
            else:
                return False
    else:
        if raise_exception:
            raise FileNotFoundError(f'File expected but not found at: {file_path}')
        else:
            return False


@contextmanager
def does_not_raise():
    """
    Serve a complement to raise, no-op context manager does_not_raise.

    docs.pytest.org/en/latest/example/parametrize.html#parametrizing-conditional-raising
    """
    yield


def rk4_step(rhs: Callable, y: numpy.ndarray, h: float, left, middle, right) -> numpy.ndarray:
    """
    Advance y by one classic fourth order Runge-Kutta step.

    The right hand side is called as rhs(y, context) where context describes the stage point, e.g. the time or the
    sampled coefficients at the left end, the middle and the right end of the step.

    :param rhs: Right hand side of y' = rhs(y, context)
    :param y: State at the left end of the step
    :param h: Step length
    :param left: Context of the first stage
    :param middle: Context of the second and third stage
    :param right: Context of the fourth stage
    :return: State at the right end of the step
    """
    k1 = rhs(y, left)
    k2 = rhs(y + 0.5 * h * k1, middle)
    k3 = rhs(y + 0.5 * h * k2, middle)
    k4 = rhs(y + h * k3, right)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def symmetrize(matrix: numpy.ndarray) -> numpy.ndarray:
    """Return (M + M^T) / 2 for a matrix or a stack of matrices."""
    return 0.5 * (matrix + numpy.swapaxes(matrix, -1, -2))


def operator_norm(matrix: numpy.ndarray) -> numpy.ndarray:
    """Spectral norm of a matrix or of every matrix in a stack."""
    return numpy.linalg.norm(matrix, ord=2, axis=(-2, -1))


def as_vector(value, dim: int = None, name: str = 'value') -> numpy.ndarray:
    """
    Convert a scalar or a sequence into a finite float vector.

    :param value: Scalar or sequence
    :param dim: Expected length, a scalar is broadcast to it
    :param name: Name used in the error message
    :raises ValueError: When the length does not match or an entry is not finite.
    """
    vector = numpy.atleast_1d(numpy.asarray(value, dtype=float))
    if vector.ndim != 1:
        raise ValueError(f'{name} must be a vector but has shape {vector.shape}.')
    if dim is not None and vector.size == 1 and dim > 1:
        vector = numpy.full(dim, vector[0])
    if dim is not None and vector.size != dim:
        raise ValueError(f'{name} must have {dim} components but has {vector.size}.')
    if not numpy.all(numpy.isfinite(vector)):
        raise ValueError(f'{name} must be finite: {vector}.')
    return vector


def trial_seed(seed: int, index: int) -> int:
    """Seed of trial number index, all randomness of a run flows from one seed."""
    return int(seed) ^ int(index)


def next_power_of_two(n: float) -> int:
    """Smallest power of two which is >= n."""
    return 1 << max(0, int(numpy.ceil(numpy.log2(max(n, 1.0)))))


def to_json(data: dict) -> str:
    """Serialize a report deterministically, two equal reports give identical bytes."""
    return json.dumps(data, indent=2, sort_keys=True) + '\n'


def write_json(data: dict, file_path: str) -> str:
    """Write a report to file_path and return the path."""
    os.makedirs(os.path.dirname(os.path.abspath(file_path)), exist_ok=True)
    with open(file_path, 'w') as f:
        f.write(to_json(data))
    logger.info(f'Report written to {file_path}.')
    return file_path


def matrix_to_list(matrix: numpy.ndarray) -> Sequence:
    """Convert numpy data to nested lists of python floats for JSON."""
    return numpy.asarray(matrix, dtype=float).tolist()
