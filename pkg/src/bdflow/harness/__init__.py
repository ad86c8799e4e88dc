from .config import ExperimentConfig, load_config, parse_config
from .runner import run_experiment, run_sweep
from .verify import run_verify

__all__ = [
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "run_experiment",
    "run_sweep",
    "run_verify",
]
