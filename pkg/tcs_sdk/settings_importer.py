"""Central place to collect settings and make them available in the tcs_sdk package."""
import logging
import os

from decouple import AutoConfig

BASE_DIR = os.path.dirname(os.path.realpath(__file__))

config = AutoConfig(search_path=os.getcwd())

# time steps of the ODE integrators and of the split-step solver
DT_ODE = config('TCS_DT_ODE', default=1e-3, cast=float)
DT_PDE = config('TCS_DT_PDE', default=1e-3, cast=float)

# numerical guards
BLOW_UP_GUARD = config('TCS_BLOW_UP_GUARD', default=1e6, cast=float)
TAIL_BUDGET = config('TCS_TAIL_BUDGET', default=1e-10, cast=float)
TAIL_CELLS = config('TCS_TAIL_CELLS', default=8, cast=int)
T_CAP = config('TCS_T_CAP', default=10.0, cast=float)

# certification tolerances, chosen for DT_ODE = 1e-3
DET_TOLERANCE = config('TCS_DET_TOLERANCE', default=1e-8, cast=float)
BAND_SLACK = config('TCS_BAND_SLACK', default=1e-9, cast=float)
SOLVER_TOLERANCE = config('TCS_SOLVER_TOLERANCE', default=1e-5, cast=float)

# obstruction experiment
A_MAX = config('TCS_A_MAX', default=100.0, cast=float)
N_RANDOM_CONTROLS = config('TCS_N_RANDOM_CONTROLS', default=32, cast=int)
DEGENERATE_THRESHOLD = config('TCS_DEGENERATE_THRESHOLD', default=1e-6, cast=float)

THREADS = config('TCS_THREADS', default=1, cast=int)
SEED = config('TCS_SEED', default=0, cast=int)

LOG_FILE_PATH = os.path.join(os.getcwd(), 'tcs_sdk.log')
LOG_FORMAT = (
    "%(asctime)s [%(name)-20.20s] [%(threadName)-10.10s] [%(levelname)-8.8s] "
    "[%(funcName)-20.20s][%(lineno)-4.4d] %(message)-10s"
)

handlers = [logging.StreamHandler()]

if config('LOG_TO_FILE', default=False, cast=bool):
    with open(LOG_FILE_PATH, "a") as f:
        if f.writable():
            handlers.append(logging.FileHandler(LOG_FILE_PATH))


logging.basicConfig(level=config('LOGGING_LEVEL', default=logging.INFO, cast=int), format=LOG_FORMAT, handlers=handlers)
