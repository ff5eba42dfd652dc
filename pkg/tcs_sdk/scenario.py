"""Declarative run configuration read from a YAML scenario file."""
import logging
import os
from typing import Dict, Optional, Union

import numpy
import yaml

from tcs_sdk import A_MAX, DT_ODE, DT_PDE, N_RANDOM_CONTROLS, SEED, THREADS
from tcs_sdk.classical import ControlSignal
from tcs_sdk.pde import Grid
from tcs_sdk.potentials import PotentialSpec, potential_from_dict
from tcs_sdk.utils import ScenarioError, UnsupportedPotential, as_vector, is_file

logger = logging.getLogger(__name__)

HORIZON_MODES = ('t_star', 't_double_star')
TARGET_KINDS = ('double_bump', 'field_file')
KEYS = (
    'seed',
    'threads',
    'b',
    'x0',
    'v0',
    'dt_ode',
    'dt_pde',
    'horizon',
    'output',
    'potential',
    'control',
    'battery',
    'fit',
    'grid',
    'target',
)

DEFAULT_SCENARIO = f"""\
# Flagship obstruction run: cosine perturbed oscillator and a double bump target.
seed: {SEED}
threads: {THREADS}
b: 1.0
x0: [0.0]
v0: [0.0]
dt_ode: {DT_ODE}
dt_pde: {DT_PDE}
horizon: t_double_star  # number | t_star | t_double_star
output: out

potential:  # zero | harmonic | cosine_harmonic | tabulated
  kind: cosine_harmonic
  omega_sq: [[1.0]]
  amplitude: 0.1
  wavevector: [2.0]

# control: list of pieces (constant | sinusoid | linear) partitioning [0, T], zero control if omitted
#  - kind: sinusoid
#    t_start: 0.0
#    t_end: 1.0
#    amplitude: [10.0]
#    angular_freq: 1.0
#    phase: 0.0

battery:
  a_max: {A_MAX}
  n_random: {N_RANDOM_CONTROLS}

fit:
  n_eig: null  # 64 in dimension 1, 16 in dimension 2
  n_angle: 16

# grid: fixed box instead of the sizing rule
#  lo: [-16.0]
#  hi: [16.0]
#  points: [1024]

target:  # double_bump | field_file (with path)
  kind: double_bump
  centers: [-4.0, 4.0]
  width: 1.0
"""


def _number(data: Dict, key: str, default=None, field: Optional[str] = None) -> float:
    """Read a finite float, YAML reads 1e-3 as a string."""
    field = field or key
    value = data.get(key, default)
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ScenarioError(field, f'expected a number, got {value!r}')
    if not numpy.isfinite(number):
        raise ScenarioError(field, f'expected a finite number, got {value!r}')
    return number


def _integer(data: Dict, key: str, default=None, field: Optional[str] = None) -> int:
    field = field or key
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ScenarioError(field, f'expected a non-negative integer, got {value!r}')
    return value


class Scenario:
    """Validated run configuration."""

    def __init__(
        self,
        potential: PotentialSpec,
        b: float,
        x0,
        v0,
        control: Optional[ControlSignal] = None,
        dt_ode: float = DT_ODE,
        dt_pde: float = DT_PDE,
        horizon: Union[float, str] = 't_star',
        output: str = 'out',
        seed: int = SEED,
        threads: int = THREADS,
        battery: Optional[Dict] = None,
        fit: Optional[Dict] = None,
        grid: Optional[Grid] = None,
        target: Optional[Dict] = None,
        source: Optional[str] = None,
    ):
        """
        Validate the configuration.

        :param potential: Potential
        :param b: Width parameter of the initial packet
        :param x0: Initial centre
        :param v0: Initial momentum
        :param control: Control, zero if None
        :param dt_ode: Step of the classical and Riccati integration
        :param dt_pde: Step of the split-step solver, an integer multiple of dt_ode
        :param horizon: Final time, 't_star' or 't_double_star'
        :param output: Output directory
        :param seed: Seed of all randomness of the run
        :param threads: Worker processes of the experiment and threads of the transforms
        :param battery: {'a_max': ..., 'n_random': ...}
        :param fit: {'n_eig': ..., 'n_angle': ...}
        :param grid: Grid overriding the sizing rule
        :param target: Target record of obstruction runs
        :param source: File the scenario was read from
        :raises ScenarioError: When a field is invalid.
        """
        self.potential = potential
        self.dim = potential.dim
        if not b > 0:
            raise ScenarioError('b', f'the width parameter must be positive, got {b}')
        self.b = float(b)
        try:
            self.x0 = as_vector(x0, self.dim, name='x0')
            self.v0 = as_vector(v0, self.dim, name='v0')
        except ValueError as e:
            raise ScenarioError('x0/v0', str(e))
        if control is not None and control.dim != self.dim:
            raise ScenarioError('control', f'{control} has {control.dim} components, the potential {self.dim}')
        self.control = control
        if not (dt_ode > 0 and dt_pde > 0):
            raise ScenarioError('dt_ode/dt_pde', 'time steps must be positive')
        ratio = dt_pde / dt_ode
        if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ScenarioError('dt_pde', f'must be an integer multiple of dt_ode = {dt_ode}, got {dt_pde}')
        self.dt_ode = float(dt_ode)
        self.dt_pde = float(dt_pde)
        if isinstance(horizon, str):
            if horizon not in HORIZON_MODES:
                raise ScenarioError('horizon', f'use a number or one of {HORIZON_MODES}, got {horizon!r}')
        elif not horizon > 0:
            raise ScenarioError('horizon', f'must be positive, got {horizon}')
        else:
            horizon = float(horizon)
        if horizon == 't_double_star' and target is None:
            raise ScenarioError('horizon', 't_double_star needs a target')
        self.horizon = horizon
        self.output = output
        self.seed = seed
        if threads < 1:
            raise ScenarioError('threads', f'must be at least 1, got {threads}')
        self.threads = threads
        self.battery = {'a_max': A_MAX, 'n_random': N_RANDOM_CONTROLS, **(battery or {})}
        self.fit = {'n_eig': None, 'n_angle': 16, **(fit or {})}
        if grid is not None and grid.dim != self.dim:
            raise ScenarioError('grid', f'{grid} does not match dimension {self.dim}')
        self.grid = grid
        self.target = target
        self.source = source
        if target is not None:
            self._check_target(target)

    def __repr__(self):
        """Return string representation of the class."""
        return f"{self.__class__.__name__} {self.potential} b={self.b}" + (f' ({self.source})' if self.source else '')

    def _check_target(self, target: Dict):
        kind = target.get('kind')
        if kind not in TARGET_KINDS:
            raise ScenarioError('target.kind', f'use one of {TARGET_KINDS}, got {kind!r}')
        if kind == 'double_bump':
            centers = target.get('centers')
            if not centers:
                raise ScenarioError('target.centers', 'a double bump needs centres')
            for i, center in enumerate(centers):
                try:
                    as_vector(center, self.dim, name='center')
                except ValueError as e:
                    raise ScenarioError(f'target.centers[{i}]', str(e))
            if not _number(target, 'width', 1.0, 'target.width') > 0:
                raise ScenarioError('target.width', 'must be positive')
        elif not target.get('path') or not is_file(target['path'], raise_exception=False):
            raise ScenarioError('target.path', f'file not found: {target.get("path")!r}')

    def control_signal(self, horizon: float) -> ControlSignal:
        """Return the configured control or the zero control on [0, horizon]."""
        if self.control is None:
            return ControlSignal.zero(self.dim, horizon)
        if self.control.horizon < horizon * (1 - 1e-12):
            raise ScenarioError('control', f'{self.control} ends before the horizon {horizon}')
        return self.control

    @classmethod
    def from_dict(cls, data: Dict, source: Optional[str] = None) -> 'Scenario':
        """
        Validate a parsed scenario file.

        :raises ScenarioError: With the path of the offending field.
        """
        if not isinstance(data, dict):
            raise ScenarioError('<root>', 'a scenario must be a mapping')
        for key in data:
            if key not in KEYS:
                raise ScenarioError(key, f'unknown key, use one of {sorted(KEYS)}')
        if 'potential' not in data:
            raise ScenarioError('potential', 'missing')
        try:
            potential = potential_from_dict(data['potential'])
        except UnsupportedPotential as e:
            raise ScenarioError('potential.kind', str(e))
        except (ValueError, TypeError, AttributeError) as e:
            raise ScenarioError('potential', str(e))
        control = None
        if data.get('control'):
            try:
                control = ControlSignal.from_dict(data['control'])
            except (ValueError, TypeError, AttributeError) as e:
                raise ScenarioError('control', str(e))
        grid = None
        if data.get('grid'):
            record = data['grid']
            try:
                grid = Grid(record['lo'], record['hi'], record['points'])
            except (KeyError, ValueError, TypeError) as e:
                raise ScenarioError('grid', str(e))
        horizon = data.get('horizon', 't_star')
        if not (isinstance(horizon, str) and horizon in HORIZON_MODES):
            horizon = _number(data, 'horizon')
        battery = dict(data.get('battery') or {})
        if 'a_max' in battery:
            battery['a_max'] = _number(battery, 'a_max', field='battery.a_max')
        if 'n_random' in battery:
            battery['n_random'] = _integer(battery, 'n_random', field='battery.n_random')
        fit = dict(data.get('fit') or {})
        for key in ('n_eig', 'n_angle'):
            if fit.get(key) is not None:
                fit[key] = _integer(fit, key, field=f'fit.{key}')
        target = data.get('target')
        if target is not None and target.get('path') and source and not os.path.isabs(target['path']):
            target = {**target, 'path': os.path.join(os.path.dirname(os.path.abspath(source)), target['path'])}
        return cls(
            potential=potential,
            b=_number(data, 'b', 1.0),
            x0=data.get('x0', 0.0),
            v0=data.get('v0', 0.0),
            control=control,
            dt_ode=_number(data, 'dt_ode', DT_ODE),
            dt_pde=_number(data, 'dt_pde', DT_PDE),
            horizon=horizon,
            output=str(data.get('output', 'out')),
            seed=_integer(data, 'seed', SEED),
            threads=_integer(data, 'threads', THREADS),
            battery=battery,
            fit=fit,
            grid=grid,
            target=target,
            source=source,
        )

    def to_dict(self) -> Dict:
        """Return the scenario as it would be written to a file."""
        data = {
            'seed': self.seed,
            'threads': self.threads,
            'b': self.b,
            'x0': self.x0.tolist(),
            'v0': self.v0.tolist(),
            'dt_ode': self.dt_ode,
            'dt_pde': self.dt_pde,
            'horizon': self.horizon,
            'output': self.output,
            'potential': self.potential.to_dict(),
            'battery': dict(self.battery),
            'fit': dict(self.fit),
        }
        if self.control is not None:
            data['control'] = self.control.to_dict()
        if self.grid is not None:
            data['grid'] = self.grid.to_dict()
        if self.target is not None:
            data['target'] = dict(self.target)
        return data


def parse_scenario(text: str, source: Optional[str] = None) -> Scenario:
    """
    Parse the YAML text of a scenario.

    :raises ScenarioError: For syntax errors with line and column, and for invalid fields.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, 'problem_mark', None)
        where = f'line {mark.line + 1}, column {mark.column + 1}' if mark is not None else '<file>'
        raise ScenarioError(where, getattr(e, 'problem', None) or str(e))
    return Scenario.from_dict(data if data is not None else {}, source=source)


def load_scenario(file_path: str) -> Scenario:
    """Read and validate a scenario file."""
    if not is_file(file_path, raise_exception=False):
        raise ScenarioError('--config', f'file not found: {file_path}')
    with open(file_path) as f:
        scenario = parse_scenario(f.read(), source=file_path)
    logger.info(f'Loaded {scenario}.')
    return scenario
