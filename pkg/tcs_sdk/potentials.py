"""Smooth subquadratic potentials with exact derivatives and the sup-norm constants consumed by the bounds.

Every potential V evaluates on a single point x of shape (N,) or on a stack of points of shape (..., N), e.g. all
points of a spatial grid.
"""
import abc
import logging
from typing import Dict

import numpy

from tcs_sdk.utils import UnsupportedPotential, as_vector

logger = logging.getLogger(__name__)


class PotentialSpec(metaclass=abc.ABCMeta):
    """Abstract definition of an admissible potential: smooth, all derivatives of order >= 2 bounded."""

    kind = None

    def __init__(self, dim: int):
        """Store the space dimension N."""
        if int(dim) < 1:
            raise ValueError(f'{self.__class__.__name__} needs a positive dimension, got {dim}.')
        self.dim = int(dim)

    def __repr__(self):
        """Return string representation of the class."""
        return f"{self.__class__.__name__} (N={self.dim})"

    def __eq__(self, other) -> bool:
        """Compare two potentials by their serialized form."""
        return isinstance(other, PotentialSpec) and self.to_dict() == other.to_dict()

    def __hash__(self):
        """Get unique hash for the potential."""
        return hash(repr(sorted(self.to_dict().items())))

    @property
    @abc.abstractmethod
    def hess_sup(self) -> float:
        """Sup over R^N of the operator norm of V''."""

    @property
    @abc.abstractmethod
    def third_sup(self) -> float:
        """Sup over R^N of the norm of the third differential of V."""

    @abc.abstractmethod
    def value(self, x: numpy.ndarray) -> numpy.ndarray:
        """Evaluate V."""

    @abc.abstractmethod
    def gradient(self, x: numpy.ndarray) -> numpy.ndarray:
        """Evaluate the gradient of V."""

    @abc.abstractmethod
    def hessian(self, x: numpy.ndarray) -> numpy.ndarray:
        """Evaluate V'', shape (..., N, N)."""

    @abc.abstractmethod
    def to_dict(self) -> Dict:
        """Return the tagged record used in scenario files."""

    def taylor_remainder(self, x: numpy.ndarray, center: numpy.ndarray) -> numpy.ndarray:
        """
        Evaluate V(x) - V(c) - <grad V(c), x-c> - 1/2 <V''(c)(x-c), x-c>.

        Subclasses override this to cancel the quadratic part analytically.
        """
        y = x - center
        return (
            self.value(x)
            - self.value(center)
            - y @ self.gradient(center)
            - 0.5 * numpy.einsum('...i,ij,...j->...', y, self.hessian(center), y)
        )

    def _check(self, x) -> numpy.ndarray:
        x = numpy.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ValueError(f'{self} cannot be evaluated on points of shape {x.shape}.')
        return x


class ZeroPotential(PotentialSpec):
    """V = 0, the free particle."""

    kind = 'zero'

    @property
    def hess_sup(self) -> float:
        """No curvature."""
        return 0.0

    @property
    def third_sup(self) -> float:
        """No third differential."""
        return 0.0

    def value(self, x):
        """Evaluate V."""
        x = self._check(x)
        return numpy.zeros(x.shape[:-1])

    def gradient(self, x):
        """Evaluate the gradient of V."""
        x = self._check(x)
        return numpy.zeros(x.shape)

    def hessian(self, x):
        """Evaluate V''."""
        x = self._check(x)
        return numpy.zeros(x.shape[:-1] + (self.dim, self.dim))

    def taylor_remainder(self, x, center):
        """Vanishes identically."""
        x = self._check(x)
        return numpy.zeros(x.shape[:-1])

    def to_dict(self) -> Dict:
        """Return the tagged record used in scenario files."""
        return {'kind': self.kind, 'dim': self.dim}


class HarmonicPotential(PotentialSpec):
    """V(x) = 1/2 <Omega x, x> with Omega symmetric positive semidefinite."""

    kind = 'harmonic'

    def __init__(self, omega_sq):
        """
        Validate the curvature matrix.

        :param omega_sq: Symmetric positive semidefinite N x N matrix Omega, a scalar is read as a 1 x 1 matrix
        """
        omega_sq = numpy.atleast_2d(numpy.asarray(omega_sq, dtype=float))
        if omega_sq.ndim != 2 or omega_sq.shape[0] != omega_sq.shape[1]:
            raise ValueError(f'omega_sq must be a square matrix but has shape {omega_sq.shape}.')
        if not numpy.all(numpy.isfinite(omega_sq)):
            raise ValueError('omega_sq must be finite.')
        if not numpy.allclose(omega_sq, omega_sq.T, rtol=0, atol=1e-12 * (1 + numpy.abs(omega_sq).max())):
            raise ValueError(f'omega_sq must be symmetric: {omega_sq.tolist()}.')
        super().__init__(dim=omega_sq.shape[0])
        self.omega_sq = 0.5 * (omega_sq + omega_sq.T)
        eigenvalues = numpy.linalg.eigvalsh(self.omega_sq)
        if eigenvalues.min() < -1e-12 * (1 + numpy.abs(eigenvalues).max()):
            raise ValueError(f'omega_sq must be positive semidefinite, eigenvalues {eigenvalues.tolist()}.')
        self._omega_norm = float(numpy.abs(eigenvalues).max())

    @property
    def omega_norm(self) -> float:
        """Operator norm of Omega."""
        return self._omega_norm

    @property
    def hess_sup(self) -> float:
        """The Hessian is constant."""
        return self._omega_norm

    @property
    def third_sup(self) -> float:
        """Quadratic potentials have no third differential."""
        return 0.0

    def value(self, x):
        """Evaluate V."""
        x = self._check(x)
        return 0.5 * numpy.einsum('...i,ij,...j->...', x, self.omega_sq, x)

    def gradient(self, x):
        """Evaluate the gradient of V."""
        x = self._check(x)
        return x @ self.omega_sq

    def hessian(self, x):
        """Evaluate V''."""
        x = self._check(x)
        return numpy.broadcast_to(self.omega_sq, x.shape[:-1] + (self.dim, self.dim)).copy()

    def taylor_remainder(self, x, center):
        """Vanishes identically, the second order Taylor expansion of a quadratic is exact."""
        x = self._check(x)
        return numpy.zeros(x.shape[:-1])

    def to_dict(self) -> Dict:
        """Return the tagged record used in scenario files."""
        return {'kind': self.kind, 'omega_sq': self.omega_sq.tolist()}


class CosinePerturbedHarmonic(HarmonicPotential):
    """V(x) = 1/2 <Omega x, x> + a cos(<k, x>)."""

    kind = 'cosine_harmonic'

    def __init__(self, omega_sq, amplitude: float, wavevector):
        """
        Validate the perturbation.

        :param omega_sq: Curvature of the harmonic part
        :param amplitude: a >= 0
        :param wavevector: k in R^N
        """
        super().__init__(omega_sq)
        if not numpy.isfinite(amplitude) or amplitude < 0:
            raise ValueError(f'amplitude must be a finite number >= 0, got {amplitude}.')
        self.amplitude = float(amplitude)
        self.wavevector = as_vector(wavevector, self.dim, name='wavevector')
        self._k_norm = float(numpy.linalg.norm(self.wavevector))

    @property
    def hess_sup(self) -> float:
        """Triangle inequality bound ||Omega|| + a ||k||^2."""
        return self.omega_norm + self.amplitude * self._k_norm ** 2

    @property
    def third_sup(self) -> float:
        """The third differential is a sin(<k, x>) k (x) k (x) k."""
        return self.amplitude * self._k_norm ** 3

    def value(self, x):
        """Evaluate V."""
        x = self._check(x)
        return super().value(x) + self.amplitude * numpy.cos(x @ self.wavevector)

    def gradient(self, x):
        """Evaluate the gradient of V."""
        phase = self._check(x) @ self.wavevector
        return super().gradient(x) - self.amplitude * numpy.sin(phase)[..., None] * self.wavevector

    def hessian(self, x):
        """Evaluate V''."""
        phase = self._check(x) @ self.wavevector
        outer = numpy.outer(self.wavevector, self.wavevector)
        return super().hessian(x) - self.amplitude * numpy.cos(phase)[..., None, None] * outer

    def taylor_remainder(self, x, center):
        """Only the cosine contributes, the harmonic part cancels exactly."""
        x = self._check(x)
        center = numpy.asarray(center, dtype=float)
        phase_c = float(center @ self.wavevector)
        s = (x - center) @ self.wavevector
        return self.amplitude * (
            numpy.cos(phase_c + s) - numpy.cos(phase_c) + numpy.sin(phase_c) * s + 0.5 * numpy.cos(phase_c) * s ** 2
        )

    def to_dict(self) -> Dict:
        """Return the tagged record used in scenario files."""
        return {
            'kind': self.kind,
            'omega_sq': self.omega_sq.tolist(),
            'amplitude': self.amplitude,
            'wavevector': self.wavevector.tolist(),
        }


class TabulatedSmooth(PotentialSpec):
    """Cubic spline in N=1 with clamped quadratic far field, reserved for empirical potentials."""

    kind = 'tabulated'

    def __init__(self, *args, **kwargs):
        """Tabulated potentials need sup-norms estimated from samples, which is not offered."""
        raise UnsupportedPotential(f'{self.__class__.__name__} is declared but unsupported in this version.')


POTENTIAL_KINDS = {
    ZeroPotential.kind: ZeroPotential,
    HarmonicPotential.kind: HarmonicPotential,
    CosinePerturbedHarmonic.kind: CosinePerturbedHarmonic,
    TabulatedSmooth.kind: TabulatedSmooth,
}


def potential_from_dict(record: Dict) -> PotentialSpec:
    """
    Build a potential from its tagged record.

    :param record: e.g. {kind: "cosine_harmonic", omega_sq: [[1.0]], amplitude: 0.1, wavevector: [2.0]}
    :raises ValueError: When the kind is unknown or a field is missing.
    :return: The potential
    """
    record = dict(record)
    kind = record.pop('kind', None)
    if kind not in POTENTIAL_KINDS:
        raise ValueError(f'Unknown potential kind {kind!r}, use one of {sorted(POTENTIAL_KINDS)}.')
    try:
        return POTENTIAL_KINDS[kind](**record)
    except TypeError as e:
        raise ValueError(f'Potential {kind!r} cannot be built from {sorted(record)}: {e}')


def eval_potential(p: PotentialSpec, x) -> float:
    """Evaluate V(x) at one point."""
    return float(p.value(as_vector(x, p.dim, name='x')))


def eval_gradient(p: PotentialSpec, x) -> numpy.ndarray:
    """Evaluate the gradient of V at one point."""
    return p.gradient(as_vector(x, p.dim, name='x'))


def eval_hessian(p: PotentialSpec, x) -> numpy.ndarray:
    """Evaluate the symmetric Hessian of V at one point."""
    return p.hessian(as_vector(x, p.dim, name='x'))


def check_derivatives(p: PotentialSpec, points: numpy.ndarray, h: float = 1e-4) -> Dict[str, float]:
    """
    Compare gradient and Hessian with central differences of the level below.

    Errors are relative to 1 + |exact| so that vanishing derivatives do not blow up the ratio.

    :param p: Potential to check
    :param points: Probe points, shape (M, N)
    :param h: Finite difference step
    :return: Maximal relative errors of gradient and Hessian and the maximal |eig V''| - hess_sup
    """
    points = numpy.atleast_2d(numpy.asarray(points, dtype=float))
    eye = numpy.eye(p.dim)
    grad_error, hess_error, band_excess = 0.0, 0.0, -numpy.inf
    for x in points:
        fd_gradient = numpy.array([(p.value(x + h * e) - p.value(x - h * e)) / (2 * h) for e in eye])
        fd_hessian = numpy.array([(p.gradient(x + h * e) - p.gradient(x - h * e)) / (2 * h) for e in eye])
        gradient, hessian = p.gradient(x), p.hessian(x)
        grad_error = max(grad_error, numpy.abs(fd_gradient - gradient).max() / (1 + numpy.abs(gradient).max()))
        hess_error = max(hess_error, numpy.abs(fd_hessian - hessian).max() / (1 + numpy.abs(hessian).max()))
        band_excess = max(band_excess, numpy.abs(numpy.linalg.eigvalsh(hessian)).max() - p.hess_sup)
    return {'gradient': float(grad_error), 'hessian': float(hess_error), 'hess_sup_excess': float(band_excess)}
