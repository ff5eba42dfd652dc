"""Provide hardcoded scenarios for offline development and tests."""
from tcs_sdk.classical import ControlSignal, SinusoidPiece
from tcs_sdk.potentials import CosinePerturbedHarmonic, HarmonicPotential, ZeroPotential
from tcs_sdk.scenario import Scenario


class HarmonicScenario(Scenario):
    """Oscillator with Omega = 1 driven at resonance, the packet is an exact solution."""

    def __init__(self, amplitude: float = 10.0, horizon: float = 1.0, **kwargs):
        """Drive with amplitude sin(t) on [0, horizon]."""
        control = ControlSignal([SinusoidPiece(0.0, horizon, [amplitude], 1.0, 0.0)])
        super().__init__(
            potential=HarmonicPotential([[1.0]]),
            b=1.0,
            x0=[0.0],
            v0=[0.0],
            control=control,
            horizon=horizon,
            **kwargs,
        )


class FreeScenario(Scenario):
    """Free spreading packet without control."""

    def __init__(self, horizon: float = 0.5, **kwargs):
        """Create the scenario."""
        super().__init__(potential=ZeroPotential(1), b=1.0, x0=[0.0], v0=[0.0], horizon=horizon, **kwargs)


class FlagshipScenario(Scenario):
    """Cosine perturbed oscillator with a double bump target at -4 and 4."""

    def __init__(self, n_random: int = 32, a_max: float = 100.0, **kwargs):
        """Create the obstruction scenario."""
        super().__init__(
            potential=CosinePerturbedHarmonic([[1.0]], amplitude=0.1, wavevector=[2.0]),
            b=1.0,
            x0=[0.0],
            v0=[0.0],
            horizon='t_double_star',
            battery={'a_max': a_max, 'n_random': n_random},
            target={'kind': 'double_bump', 'centers': [-4.0, 4.0], 'width': 1.0},
            **kwargs,
        )
