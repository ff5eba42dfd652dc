"""Validate the Gaussian packet, its residual and the a priori error bound."""
import unittest

import numpy
from scipy.integrate import quad

from tcs_sdk.classical import ControlSignal, SinusoidPiece, integrate_newton
from tcs_sdk.pde import Grid, l2_distance, l2_norm
from tcs_sdk.potentials import CosinePerturbedHarmonic, HarmonicPotential, ZeroPotential
from tcs_sdk.riccati import compute_t_star, integrate_riccati
from tcs_sdk.tcs import (
    WavePacket,
    constant_c_star,
    constant_cn,
    error_bound,
    evaluate_packet,
    packet_at,
    packets,
    residual_bound,
    residual_field,
    schrodinger_defect,
)
from tcs_sdk.utils import BlownUp, GridMismatch, HorizonNotCovered
from tests.variables import C_STAR_1, C_STAR_2, FLAGSHIP_RESIDUAL_BOUND

FLAGSHIP = CosinePerturbedHarmonic([[1.0]], amplitude=0.1, wavevector=[2.0])
GRID = Grid([-12.0], [12.0], 1024)


def run(p, u, b=1.0, x0=0.0, v0=0.0, dt=1e-3):
    """Integrate centre and width of one scenario."""
    traj = integrate_newton(p, u, x0, v0, dt)
    return traj, integrate_riccati(p, traj, b)


class TestConstants(unittest.TestCase):
    """Test the normalization constants against quadrature."""

    def test_cn(self):
        """Test C_N^2 = int exp(-|y|^2) dy in dimension 1 and 2."""
        gauss, _ = quad(lambda y: numpy.exp(-(y**2)), -numpy.inf, numpy.inf, epsabs=1e-14)
        assert abs(constant_cn(1) - numpy.sqrt(gauss)) < 1e-10
        assert abs(constant_cn(2) - gauss) < 1e-10

    def test_c_star_1(self):
        """Test C* = (int |y|^6 e^{-|y|^2} dy)^{1/2} / (6 C_N) in dimension 1."""
        moment, _ = quad(lambda y: y**6 * numpy.exp(-(y**2)), -numpy.inf, numpy.inf, epsabs=1e-14)
        assert abs(constant_c_star(1) - numpy.sqrt(moment) / (6 * constant_cn(1))) < 1e-10
        assert abs(constant_c_star(1) - C_STAR_1) < 1e-12

    def test_c_star_2(self):
        """Test C* in dimension 2 with the integral in polar coordinates."""
        radial, _ = quad(lambda r: r**7 * numpy.exp(-(r**2)), 0.0, numpy.inf, epsabs=1e-14)
        moment = 2 * numpy.pi * radial
        assert abs(constant_c_star(2) - numpy.sqrt(moment) / (6 * constant_cn(2))) < 1e-10
        assert abs(constant_c_star(2) - C_STAR_2) < 1e-12

    def test_invalid_dimension(self):
        """Test that the dimension must be positive."""
        with self.assertRaises(ValueError):
            constant_cn(0)
        with self.assertRaises(ValueError):
            constant_c_star(0)


class TestWavePacket(unittest.TestCase):
    """Test the evaluation of packets."""

    def test_initial_packet(self):
        """Test that the initial packet is the normalized Gaussian of width b."""
        traj, ric = run(ZeroPotential(1), ControlSignal.zero(1, 0.1), b=2.0, x0=1.0)
        psi = evaluate_packet(packet_at(traj, ric, 0), GRID)
        x = GRID.points[..., 0]
        expected = 2.0**0.25 / numpy.pi**0.25 * numpy.exp(-(x - 1.0) ** 2)
        assert numpy.abs(psi.values - expected).max() < 1e-14
        assert abs(l2_norm(psi) - 1.0) < 1e-10

    def test_free_closed_form(self):
        """Test the spreading free Gaussian (1 + i t)^{-1/2} exp(-x^2 / (2 (1 + i t))) / pi^{1/4}."""
        traj, ric = run(ZeroPotential(1), ControlSignal.zero(1, 0.5))
        w = packet_at(traj, ric, -1)
        assert w.t == 0.5
        x = GRID.points[..., 0]
        expected = (1 + 0.5j) ** -0.5 * numpy.exp(-(x**2) / (2 * (1 + 0.5j))) / numpy.pi**0.25
        assert numpy.abs(w.evaluate(GRID).values - expected).max() < 1e-8

    def test_modulus_identity(self):
        """Test |psi|^2 = det(Q2)^{1/2} / C_N^2 exp(-<Q2 y, y>) pointwise."""
        u = ControlSignal([SinusoidPiece(0.0, 0.15, [20.0], 3.0, 0.0)])
        traj, ric = run(FLAGSHIP, u, x0=0.3, v0=1.0)
        w = packet_at(traj, ric, len(ric) - 1)
        y = GRID.points[..., 0] - w.x_c[0]
        expected = numpy.sqrt(w.q2[0, 0]) / constant_cn(1) ** 2 * numpy.exp(-w.q2[0, 0] * y**2)
        density = numpy.abs(w.evaluate(GRID).values) ** 2
        visible = expected > 1e-200
        assert numpy.abs(density[visible] / expected[visible] - 1.0).max() < 1e-10

    def test_analytic_norm(self):
        """Test that the closed form norm stays one along a driven trajectory."""
        u = ControlSignal.piecewise_constant([[50.0], [-50.0]], 0.15)
        traj, ric = run(FLAGSHIP, u)
        assert max(abs(w.analytic_norm() - 1.0) for w in packets(traj, ric)) < 1e-10
        assert abs(l2_norm(packet_at(traj, ric, -1).evaluate(GRID)) - 1.0) < 1e-9

    def test_harmonic_quarter_period(self):
        """Test that the centre of an oscillator packet reaches the origin after a quarter period."""
        u = ControlSignal.zero(1, numpy.pi / 2)
        traj, ric = run(HarmonicPotential([[1.0]]), u, x0=1.0)
        w = packet_at(traj, ric, -1)
        assert abs(w.x_c[0]) < 1e-10
        assert abs(w.v_c[0] + 1.0) < 1e-10
        assert abs(w.q2[0, 0] - 1.0) < 1e-10

    def test_not_positive_definite(self):
        """Test that a width matrix with a non-positive eigenvalue is rejected."""
        with self.assertRaises(ValueError):
            WavePacket(0.0, 1.0, [0.0], [0.0], [[0.0]], [[0.0]], 0.0, 0.0, 0.0, 0.0)

    def test_dimension_mismatch(self):
        """Test that a packet cannot be evaluated on a grid of another dimension."""
        traj, ric = run(ZeroPotential(2), ControlSignal.zero(2, 0.01))
        with self.assertRaises(GridMismatch):
            evaluate_packet(packet_at(traj, ric, 0), GRID)

    def test_grids_must_match(self):
        """Test that the packet needs both trajectories on one grid."""
        traj, _ = run(ZeroPotential(1), ControlSignal.zero(1, 0.1))
        _, ric = run(ZeroPotential(1), ControlSignal.zero(1, 0.1), dt=2e-3)
        with self.assertRaises(GridMismatch):
            packet_at(traj, ric, 0)

    def test_beyond_blow_up(self):
        """Test that no packet exists after the Riccati guard tripped."""
        p = HarmonicPotential([[100.0]])
        traj = integrate_newton(p, ControlSignal.zero(1, 0.5), 0.0, 0.0, 1e-3)
        ric = integrate_riccati(p, traj, 1.0, guard=5.0)
        with self.assertRaises(BlownUp):
            packet_at(traj, ric, len(ric))
        with self.assertRaises(IndexError):
            packet_at(traj, ric, len(traj))
        assert len(list(packets(traj, ric))) == len(ric)


class TestResidual(unittest.TestCase):
    """Test the residual and the error bound."""

    def test_quadratic_residual_vanishes(self):
        """Test that the packet solves the equation exactly in a quadratic potential."""
        u = ControlSignal([SinusoidPiece(0.0, 1.0, [10.0], 1.0, 0.0)])
        p = HarmonicPotential([[1.0]])
        traj, ric = run(p, u)
        w = packet_at(traj, ric, 500)
        assert l2_norm(residual_field(w, p, GRID)) == 0.0
        assert residual_bound(w, p) == 0.0
        assert error_bound(ric, p, 1.0) == 0.0

    def test_residual_bound(self):
        """Test ||r(0)|| <= C* |V'''| for the unit width packet in the flagship potential."""
        traj, ric = run(FLAGSHIP, ControlSignal.zero(1, 0.1))
        w = packet_at(traj, ric, 0)
        assert abs(residual_bound(w, FLAGSHIP) - FLAGSHIP_RESIDUAL_BOUND) < 1e-12
        assert 0.0 < l2_norm(residual_field(w, FLAGSHIP, GRID)) <= FLAGSHIP_RESIDUAL_BOUND

    def test_error_bound_sandwich(self):
        """Test that the error bound grows at a rate between the band limits."""
        p = FLAGSHIP
        t_star = compute_t_star(1.0, p.hess_sup)
        traj, ric = run(p, ControlSignal.constant([20.0], t_star))
        rate = C_STAR_1 * p.third_sup
        for t in (0.05, 0.1, t_star):
            bound = error_bound(ric, p, t)
            assert rate * t * 1.5**-1.5 <= bound <= rate * t * 0.5**-1.5

    def test_error_bound_linear_for_fixed_width(self):
        """Test that the integral of ||Q2^-1||^{3/2} is t while Q2 = I."""
        traj, ric = run(HarmonicPotential([[1.0]]), ControlSignal.zero(1, 1.0))
        assert abs(numpy.interp(0.5, ric.valid_times, ric.int_inv_q2) - 0.5) < 1e-12

    def test_error_bound_beyond_horizon(self):
        """Test that the bound is refused beyond the Riccati samples."""
        traj, ric = run(FLAGSHIP, ControlSignal.zero(1, 0.1))
        with self.assertRaises(HorizonNotCovered):
            error_bound(ric, FLAGSHIP, 0.2)

    def test_defect_matches_residual_harmonic(self):
        """Test that the packet solves the driven oscillator up to the difference stencil."""
        p = HarmonicPotential([[1.0]])
        u = ControlSignal([SinusoidPiece(0.0, 1.0, [10.0], 1.0, 0.0)])
        traj, ric = run(p, u)
        grid = Grid([-12.0], [12.0], 256)
        defect = schrodinger_defect(traj, ric, 500, p, u, grid, workers=1)
        assert l2_norm(defect) < 1e-6

    def test_defect_matches_residual_cosine(self):
        """Test that the defect of the packet in the flagship potential is the residual."""
        t_star = compute_t_star(1.0, FLAGSHIP.hess_sup)
        u = ControlSignal.constant([20.0], t_star)
        traj, ric = run(FLAGSHIP, u, x0=0.5)
        grid = Grid([-12.0], [12.0], 256)
        defect = schrodinger_defect(traj, ric, 100, FLAGSHIP, u, grid, workers=1)
        residual = residual_field(packet_at(traj, ric, 100), FLAGSHIP, grid)
        assert l2_norm(residual) > 1e-3
        assert l2_distance(defect, residual) < 1e-6

    def test_defect_needs_neighbours(self):
        """Test that the stencil is refused at the ends of the grid."""
        traj, ric = run(FLAGSHIP, ControlSignal.zero(1, 0.1))
        with self.assertRaises(IndexError):
            schrodinger_defect(traj, ric, 1, FLAGSHIP, traj.control, GRID)
