"""Validate the Riccati width equation and the certified horizon."""
import unittest

import numpy

from tcs_sdk.classical import ControlSignal, integrate_newton
from tcs_sdk.potentials import CosinePerturbedHarmonic, HarmonicPotential, ZeroPotential
from tcs_sdk.riccati import (
    check_gronwall,
    check_q2_band,
    compute_t_star,
    det_identity_holds,
    det_residual,
    horizon_residuals,
    integrate_riccati,
    symmetry_defect,
)
from tcs_sdk.utils import HorizonNotCovered
from tests.variables import T_G2_ROOT, g1_root, g2_root


def run(p, u, b, x0=0.0, v0=0.0, dt=1e-3, t_end=None, **kwargs):
    """Integrate the centre and the width of one scenario."""
    traj = integrate_newton(p, u, x0, v0, dt, t_end=t_end)
    return traj, integrate_riccati(p, traj, b, **kwargs)


class TestTStar(unittest.TestCase):
    """Test the certified horizon."""

    def test_g2_binds(self):
        """Test that the second condition binds for b = 1 and ||V''|| = 1."""
        assert g1_root(1.0, 1.0) > g2_root()
        assert abs(compute_t_star(1.0, 1.0) - g2_root()) < 1e-10
        assert abs(g2_root() - T_G2_ROOT) < 1e-9

    def test_g1_binds(self):
        """Test that the first condition binds for b = 2 and ||V''|| = 1."""
        assert g1_root(2.0, 1.0) < g2_root()
        assert abs(compute_t_star(2.0, 1.0) - g1_root(2.0, 1.0)) < 1e-10

    def test_small_b(self):
        """Test the limit of a very wide packet without potential."""
        assert abs(compute_t_star(1e-9, 0.0) - g2_root()) < 1e-10

    def test_conditions_hold(self):
        """Test that T* satisfies both conditions, the binding one up to 1e-10, and a slightly later time does not."""
        for b, hess_sup in ((0.5, 0.0), (1.0, 1.4), (2.0, 3.0), (4.0, 10.0)):
            t_star = compute_t_star(b, hess_sup)
            residuals = horizon_residuals(b, hess_sup, t_star)
            assert max(residuals) <= 0.0
            assert max(residuals) >= -1e-10
            assert max(horizon_residuals(b, hess_sup, t_star + 1e-9)) > 0.0

    def test_monotone(self):
        """Test that T* does not grow with the Hessian bound nor with b."""
        by_hess = [compute_t_star(1.0, h) for h in (0.0, 0.5, 1.0, 5.0, 50.0)]
        by_b = [compute_t_star(b, 1.0) for b in (0.1, 1.0, 2.0, 4.0, 8.0)]
        assert by_hess == sorted(by_hess, reverse=True)
        assert by_b == sorted(by_b, reverse=True)

    def test_invalid_inputs(self):
        """Test that b must be positive and the Hessian bound non-negative."""
        with self.assertRaises(ValueError):
            compute_t_star(0.0, 1.0)
        with self.assertRaises(ValueError):
            compute_t_star(1.0, -1.0)


class TestIntegrateRiccati(unittest.TestCase):
    """Test the width of the packet against closed forms."""

    def test_free_closed_form(self):
        """Test Q(t) = i / (1 + i t) for the free particle with b = 1."""
        _, ric = run(ZeroPotential(1), ControlSignal.zero(1, 0.5), 1.0)
        t = ric.valid_times
        assert numpy.abs(ric.q1[:, 0, 0] - t / (1 + t**2)).max() < 1e-9
        assert numpy.abs(ric.q2[:, 0, 0] - 1 / (1 + t**2)).max() < 1e-9
        assert numpy.abs(ric.int_tr_q1 - 0.5 * numpy.log(1 + t**2)).max() < 1e-9
        assert numpy.abs(ric.int_tr_q2 - numpy.arctan(t)).max() < 1e-9

    def test_free_fourth_order(self):
        """Test that halving the step divides the error of Q against the closed form by about 16."""
        errors = []
        for dt in (0.05, 0.025):
            _, ric = run(ZeroPotential(1), ControlSignal.zero(1, 1.0), 1.0, dt=dt)
            t = ric.valid_times
            q = ric.q1[:, 0, 0] + 1j * ric.q2[:, 0, 0]
            errors.append(numpy.abs(q - 1j / (1 + 1j * t)).max())
        assert errors[1] > 1e-14
        assert errors[0] / errors[1] >= 12

    def test_harmonic_fixed_point(self):
        """Test that Q = i stays put for Omega = 1 and b = 1."""
        _, ric = run(HarmonicPotential([[1.0]]), ControlSignal.constant([3.0], 1.0), 1.0)
        assert numpy.abs(ric.q1).max() <= 1e-10
        assert numpy.abs(ric.q2 - 1.0).max() <= 1e-10
        assert numpy.abs(ric.int_inv_q2 - ric.valid_times).max() <= 1e-12
        assert ric.blow_up_at is None

    def test_control_independence(self):
        """Test that the width of a harmonic packet does not depend on the control at all."""
        p = HarmonicPotential([[2.0, 0.5], [0.5, 1.0]])
        _, free = run(p, ControlSignal.zero(2, 0.5), 1.5, x0=[1.0, -1.0])
        _, driven = run(p, ControlSignal.constant([50.0, -20.0], 0.5), 1.5, x0=[1.0, -1.0], v0=[3.0, 0.0])
        assert numpy.array_equal(free.q1, driven.q1)
        assert numpy.array_equal(free.q2, driven.q2)

    def test_det_identity(self):
        """Test det Q2 = b^N exp(-2 int Tr Q1) under a bang-bang control."""
        p = CosinePerturbedHarmonic([[1.0]], amplitude=0.1, wavevector=[2.0])
        t_star = compute_t_star(1.0, p.hess_sup)
        u = ControlSignal.piecewise_constant([[5.0], [-5.0], [5.0], [-5.0]], t_star)
        _, ric = run(p, u, 1.0)
        assert det_identity_holds(ric)
        assert det_residual(ric).max() < 1e-10

    def test_det_identity_2d(self):
        """Test the determinant identity in dimension 2."""
        p = CosinePerturbedHarmonic([[1.0, 0.3], [0.3, 0.6]], amplitude=0.2, wavevector=[1.0, 1.0])
        t_star = compute_t_star(1.3, p.hess_sup)
        _, ric = run(p, ControlSignal.constant([10.0, -10.0], t_star), 1.3, x0=[0.5, 0.0])
        assert det_identity_holds(ric)
        assert symmetry_defect(ric) <= 1e-15

    def test_band_random_scenarios(self):
        """Test that Q2 stays in [b/2, 3b/2] and ||Q1|| <= 1 on [0, T*] for random admissible scenarios."""
        rng = numpy.random.default_rng(2024)
        for k in range(50):
            dim = 1 + k % 2
            b = float(rng.choice([0.5, 1.0, 2.0]))
            if k % 3 == 0:
                p = ZeroPotential(dim)
            else:
                a = rng.normal(size=(dim, dim))
                omega = a @ a.T
                omega *= rng.uniform(0.5, 2.0) / numpy.linalg.norm(omega, 2)
                if k % 3 == 1:
                    p = HarmonicPotential(omega)
                else:
                    p = CosinePerturbedHarmonic(omega, rng.uniform(0.0, 0.5), rng.uniform(-2.0, 2.0, size=dim))
            t_star = compute_t_star(b, p.hess_sup)
            u = ControlSignal.piecewise_constant(rng.uniform(-100.0, 100.0, size=(8, dim)), t_star)
            x0 = rng.uniform(-1.0, 1.0, size=dim)
            _, ric = run(p, u, b, x0=x0, v0=numpy.zeros(dim))
            report = check_q2_band(ric, t_star)
            assert report.holds, (k, report)
            assert report.q1_bound_holds, (k, report)
            assert check_gronwall(ric) <= 1 + 1e-9

    def test_gronwall_free(self):
        """Test that the free packet spreads slower than the Gronwall bound."""
        _, ric = run(ZeroPotential(1), ControlSignal.zero(1, 0.5), 1.0)
        assert check_gronwall(ric) <= 1 + 1e-12

    def test_blow_up_guard(self):
        """Test that a tripped guard truncates the trajectory and the band check refuses it."""
        traj, ric = run(HarmonicPotential([[100.0]]), ControlSignal.zero(1, 0.5), 1.0, guard=5.0)
        assert ric.blow_up_at is not None
        assert len(ric) < len(traj)
        assert ric.last_time < ric.blow_up_at
        assert not ric.covers(0.2)
        with self.assertRaises(HorizonNotCovered):
            check_q2_band(ric, 0.2)

    def test_band_beyond_trajectory(self):
        """Test that the band cannot be certified beyond the sample grid."""
        _, ric = run(ZeroPotential(1), ControlSignal.zero(1, 0.1), 1.0)
        with self.assertRaises(HorizonNotCovered):
            check_q2_band(ric, 0.2)

    def test_same_grid(self):
        """Test that the Riccati samples live on the very grid of the classical trajectory."""
        traj, ric = run(ZeroPotential(1), ControlSignal.zero(1, 0.1), 1.0)
        assert ric.times is traj.times
        assert len(ric) == len(traj)

    def test_dataframe(self):
        """Test the exported columns in dimension 2."""
        _, ric = run(ZeroPotential(2), ControlSignal.zero(2, 0.01), 1.0)
        columns = ['t', 'q1_11', 'q1_12', 'q1_21', 'q1_22', 'q2_11', 'q2_12', 'q2_21', 'q2_22']
        columns += ['int_tr_q1', 'int_tr_q2']
        assert ric.to_dataframe().columns.tolist() == columns
