"""Normal-map federated learning for composite objectives ``f + phi``."""

from .algorithms import FedConfig, FedNMap, Scaffold, Zhang
from .config import ConfigError, load_config
from .estimators import FederatedClassifier
from .maps import lyapunov, natural_map, normal_map, reference_solve
from .problems import AdditiveGaussian, Minibatch, make_composite_quadratic
from .regularizers import INFINITY, Regularizer
from .schedules import theorem1_params, theorem2_params
from .simulator import ProblemSpec, RunSpec, replay, run, sweep
from .verify import run_checks

__version__ = "0.1.0"

__all__ = [
    "INFINITY",
    "AdditiveGaussian",
    "ConfigError",
    "FedConfig",
    "FedNMap",
    "FederatedClassifier",
    "Minibatch",
    "ProblemSpec",
    "Regularizer",
    "RunSpec",
    "Scaffold",
    "Zhang",
    "load_config",
    "lyapunov",
    "make_composite_quadratic",
    "natural_map",
    "normal_map",
    "reference_solve",
    "replay",
    "run",
    "run_checks",
    "sweep",
    "theorem1_params",
    "theorem2_params",
]
