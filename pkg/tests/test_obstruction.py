"""Validate the Gaussian set distance, the horizon T** and the adversarial experiment."""
import unittest

import numpy
import pytest

from tcs_sdk.classical import ControlSignal
from tcs_sdk.obstruction import (
    build_target,
    compute_t_double_star,
    control_battery,
    double_bump,
    gaussian_amplitude,
    gaussian_set_distance,
    lower_bound,
    run_obstruction_experiment,
)
from tcs_sdk.pde import ComplexField, Grid
from tcs_sdk.potentials import CosinePerturbedHarmonic, HarmonicPotential
from tcs_sdk.riccati import compute_t_star
from tcs_sdk.samples import FlagshipScenario, HarmonicScenario
from tcs_sdk.utils import DegenerateTarget, EmptyControlSet, NotNormalized, ScenarioError, to_json
from tests.variables import DOUBLE_BUMP_DELTA0, T_DOUBLE_STAR_EXAMPLE

GRID = Grid([-16.0], [16.0], 512)
FLAGSHIP = CosinePerturbedHarmonic([[1.0]], amplitude=0.1, wavevector=[2.0])


class TestGaussianSetDistance(unittest.TestCase):
    """Test delta0 against targets with known distance."""

    @classmethod
    def setUpClass(cls) -> None:
        """Fit the double bump once."""
        cls.target = double_bump(GRID, 1.0, [-4.0, 4.0])
        cls.fit = gaussian_set_distance(cls.target, 1.0)

    def test_double_bump(self):
        """Test that the best profile matches one bump, delta0 = sqrt(2 - sqrt(2))."""
        self.assertAlmostEqual(self.fit.delta0, DOUBLE_BUMP_DELTA0, places=5)
        assert abs(abs(self.fit.alpha[0]) - 4.0) < 1e-3
        assert abs(self.fit.q[0, 0] - 1.0) < 1e-3

    def test_refinement_improves(self):
        """Test that the refined distance is never above the coarse scan."""
        assert self.fit.delta0 <= self.fit.coarse_delta0

    def test_unpack(self):
        """Test that a fit unpacks as delta0, q and alpha."""
        delta0, q, alpha = self.fit
        assert delta0 == self.fit.delta0
        assert q.shape == (1, 1) and alpha.shape == (1,)

    def test_target_in_set(self):
        """Test that an element of the set, with any phase, has distance zero."""
        amplitude = gaussian_amplitude(GRID, [[0.9]], [0.3])
        target = ComplexField(GRID, amplitude.values * numpy.exp(1j * GRID.points[..., 0]))
        fit = gaussian_set_distance(target, 1.0)
        assert fit.delta0 <= 1e-6
        assert abs(fit.q[0, 0] - 0.9) < 1e-3
        assert abs(fit.alpha[0] - 0.3) < 1e-3

    def test_width_outside_band(self):
        """Test that a too narrow Gaussian is matched by the edge of the width band."""
        q, edge = numpy.sqrt(3.0), numpy.sqrt(1.5)
        fit = gaussian_set_distance(gaussian_amplitude(GRID, [[q]], [0.0]), 1.0)
        expected = numpy.sqrt(2.0 - 2.0 * numpy.sqrt(2 * q * edge / (q**2 + edge**2)))
        assert abs(fit.delta0 - expected) < 1e-6
        assert abs(fit.q[0, 0] - edge) < 1e-4

    def test_phase_invariance(self):
        """Test that a global phase does not change the distance."""
        fit = gaussian_set_distance(ComplexField(GRID, self.target.values * numpy.exp(0.7j)), 1.0)
        assert abs(fit.delta0 - self.fit.delta0) < 1e-8

    def test_translation_invariance(self):
        """Test that shifting the target by a whole number of cells shifts the fit."""
        fit = gaussian_set_distance(ComplexField(GRID, numpy.roll(self.target.values, 16)), 1.0)
        assert abs(fit.delta0 - self.fit.delta0) < 1e-8
        shifted = min(abs(fit.alpha[0] - self.fit.alpha[0] - 1.0), abs(fit.alpha[0] + self.fit.alpha[0] - 1.0))
        assert shifted < 1e-6

    def test_not_normalized(self):
        """Test that the target must have unit norm."""
        with self.assertRaises(NotNormalized):
            gaussian_set_distance(ComplexField(GRID, 2.0 * self.target.values), 1.0)
        with self.assertRaises(NotNormalized):
            gaussian_set_distance(ComplexField(GRID, numpy.zeros(GRID.shape) + 1e-20), 1.0)


class TestTargets(unittest.TestCase):
    """Test the target records."""

    def test_double_bump_normalized(self):
        """Test that the double bump has unit norm and a flat phase."""
        target = build_target({'kind': 'double_bump', 'centers': [-4.0, 4.0], 'width': 1.0}, GRID)
        assert abs(target.norm() - 1.0) < 1e-12
        assert numpy.all(target.values.imag == 0.0)

    def test_double_bump_2d(self):
        """Test the double bump in dimension 2."""
        grid = Grid([-8.0, -8.0], [8.0, 8.0], 64)
        target = double_bump(grid, 1.0, [[-3.0, 0.0], [3.0, 0.0]])
        assert abs(target.norm() - 1.0) < 1e-12

    def test_analytic_target_needs_grid(self):
        """Test that a double bump cannot be sampled without a grid."""
        with self.assertRaises(ValueError):
            build_target({'kind': 'double_bump', 'centers': [0.0]})

    def test_unknown_kind(self):
        """Test that an unknown target kind raises."""
        with self.assertRaises(ScenarioError):
            build_target({'kind': 'triple_bump'}, GRID)


class TestTDoubleStar(unittest.TestCase):
    """Test the horizon of the obstruction."""

    def test_example(self):
        """Test delta0 = 0.4, b = 1 and |V'''| = 0.8, the cosine bound is below T* = 1."""
        t_double_star, delta = compute_t_double_star(0.4, 1.0, FLAGSHIP, 1.0)
        assert abs(t_double_star - T_DOUBLE_STAR_EXAMPLE) < 1e-9
        assert delta == 0.2

    def test_capped_by_t_star(self):
        """Test that T** never exceeds T*."""
        t_double_star, _ = compute_t_double_star(0.4, 1.0, FLAGSHIP, 0.1)
        assert t_double_star == 0.1

    def test_harmonic(self):
        """Test that T** = T* when the third differential vanishes."""
        t_double_star, delta = compute_t_double_star(0.5, 1.0, HarmonicPotential([[1.0]]), 0.17)
        assert t_double_star == 0.17
        assert delta == 0.25

    def test_degenerate(self):
        """Test that a Gaussian target is refused."""
        with self.assertRaises(DegenerateTarget):
            compute_t_double_star(0.0, 1.0, FLAGSHIP, 1.0)
        with self.assertRaises(DegenerateTarget):
            compute_t_double_star(1e-7, 1.0, FLAGSHIP, 1.0, threshold=1e-6)

    def test_monotone(self):
        """Test that T** grows with delta0 and shrinks with |V'''|."""
        by_delta0 = [compute_t_double_star(d, 1.0, FLAGSHIP, 10.0)[0] for d in (0.1, 0.2, 0.4, 0.8)]
        by_third = [
            compute_t_double_star(0.4, 1.0, CosinePerturbedHarmonic([[1.0]], a, [2.0]), 10.0)[0]
            for a in (0.05, 0.1, 0.2, 0.4)
        ]
        assert by_delta0 == sorted(by_delta0)
        assert by_third == sorted(by_third, reverse=True)

    def test_lower_bound(self):
        """Test that the certified distance starts at delta0 and reaches delta at T**."""
        t_double_star, delta = compute_t_double_star(0.4, 1.0, FLAGSHIP, 1.0)
        assert lower_bound(0.4, 1.0, FLAGSHIP, 0.0) == 0.4
        assert abs(lower_bound(0.4, 1.0, FLAGSHIP, t_double_star) - delta) < 1e-12


class TestControlBattery(unittest.TestCase):
    """Test the adversarial controls."""

    def setUp(self):
        """Build a battery with three random controls."""
        self.battery = control_battery(1, 0.2, 100.0, 3, seed=7, omega_norm=1.0)

    def test_size_and_names(self):
        """Test the fixed part and the random part of the battery."""
        names = [name for name, _ in self.battery]
        assert len(self.battery) == 16
        assert len(set(names)) == len(names)
        assert names[:3] == ['zero', 'constant+', 'constant-']
        assert 'bang_bang_8-' in names and 'resonant_cos+' in names
        assert names[-3:] == ['random_00', 'random_01', 'random_02']

    def test_deterministic(self):
        """Test that the same seed gives the same controls and another seed other random ones."""
        again = control_battery(1, 0.2, 100.0, 3, seed=7, omega_norm=1.0)
        other = control_battery(1, 0.2, 100.0, 3, seed=8, omega_norm=1.0)
        assert [u for _, u in again] == [u for _, u in self.battery]
        assert other[-1][1] != self.battery[-1][1]

    def test_amplitudes(self):
        """Test that every control is admissible and the constants saturate the bound."""
        controls = dict(self.battery)
        assert controls['constant+'].sup_norm() == 100.0
        assert all(u.sup_norm() <= 100.0 + 1e-12 for _, u in self.battery)
        assert all(u.horizon == 0.2 for _, u in self.battery)

    def test_bang_bang_switches(self):
        """Test the number of switchings."""
        controls = dict(self.battery)
        assert len(controls['bang_bang_4+'].breakpoints) == 4
        assert controls['bang_bang_4+'].value(0.0).tolist() == [100.0]
        assert controls['bang_bang_4-'].value(0.0).tolist() == [-100.0]


class TestObstructionExperiment(unittest.TestCase):
    """Test the experiment on small control sets."""

    def test_zero_control(self):
        """Test that the free packet stays away from the double bump."""
        scenario = FlagshipScenario(n_random=0)
        report = run_obstruction_experiment(scenario, controls=[('zero', ControlSignal.zero(1, 1.0))])
        assert report.verdict
        assert report.bound_ok
        assert report.t_double_star <= report.t_star
        assert report.delta == 0.5 * report.delta0
        trial = report.trials[0]
        assert trial.initial_distance >= report.delta0
        assert trial.trace.columns.tolist() == ['t', 'distance', 'tcs_distance', 'error_bound', 'lower_bound']
        assert abs(trial.trace['t'].iat[-1] - report.t_double_star) < 1e-12

    def test_strong_control_moves_state(self):
        """Test that a strong constant control changes the distance to the target."""
        scenario = FlagshipScenario(n_random=0)
        report = run_obstruction_experiment(scenario, controls=[ControlSignal.constant([100.0], 1.0)])
        trial = report.trials[0]
        assert trial.name == 'control_00'
        assert trial.trace['distance'].max() - trial.trace['distance'].min() > 1e-3
        assert trial.excluded

    def test_decelerating_control_approaches_target(self):
        """Test that a bang-bang control brings the state closer to the target but not within delta."""
        scenario = FlagshipScenario(n_random=0)
        t_star = compute_t_star(scenario.b, scenario.potential.hess_sup)
        u = ControlSignal.piecewise_constant([[100.0], [-100.0]], t_star)
        report = run_obstruction_experiment(scenario, controls=[('bang_bang', u)])
        trial = report.trials[0]
        assert trial.min_distance < trial.initial_distance
        assert trial.argmin_t > 0.0
        assert trial.min_distance > report.delta
        assert trial.excluded
        assert report.verdict

    def test_empty_control_set(self):
        """Test that an experiment needs a control."""
        with self.assertRaises(EmptyControlSet):
            run_obstruction_experiment(FlagshipScenario(n_random=0), controls=[])

    def test_without_target(self):
        """Test that an experiment needs a target."""
        with self.assertRaises(ScenarioError):
            run_obstruction_experiment(HarmonicScenario())

    def test_control_too_short(self):
        """Test that a control must cover [0, T**]."""
        with self.assertRaises(ScenarioError):
            run_obstruction_experiment(FlagshipScenario(n_random=0), controls=[ControlSignal.zero(1, 0.1)])


@pytest.mark.slow
class TestFlagshipExperiment(unittest.TestCase):
    """Test the full battery on the flagship scenario."""

    def test_no_control_reaches_target(self):
        """Test that every control of the battery stays farther than delta from the double bump."""
        report = run_obstruction_experiment(FlagshipScenario())
        assert len(report.trials) == 13 + 32
        assert report.delta0 > 0.3
        assert all(trial.excluded for trial in report.trials)
        assert report.verdict
        assert report.bound_ok

    def test_reproducible(self):
        """Test that a fixed seed gives byte identical reports."""
        first = run_obstruction_experiment(FlagshipScenario(n_random=2))
        second = run_obstruction_experiment(FlagshipScenario(n_random=2))
        assert to_json(first.to_dict()) == to_json(second.to_dict())
