"""Environment launcher: configuration, party processes, memory sampling, log collection."""

from .config import (
    COMPATIBILITY, Deployment, ExperimentConfig, check_compatibility, config_from_dict, parse_config,
    register_engine,
)
from .launcher import RunHandle, collect, launch, run_experiment, teardown, wait
from .memory import MemorySample, MemorySampler, peak_memory, read_memory_csv

__all__ = [
    "COMPATIBILITY", "Deployment", "ExperimentConfig", "MemorySample", "MemorySampler", "RunHandle",
    "check_compatibility", "collect", "config_from_dict", "launch", "parse_config", "peak_memory",
    "read_memory_csv", "register_engine", "run_experiment", "teardown", "wait",
]
