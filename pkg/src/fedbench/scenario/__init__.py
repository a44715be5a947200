"""Evaluation scenarios: fixed client partitions, test views and metrics."""

from .catalog import catalog, default_cache_dir, get_manifest, load_scenario
from .metrics import auc_score, evaluate
from .synthetic import SyntheticSpec, generate_synthetic
from .types import ClientPartition, DatasetTable, Scenario, VerticalLayout
from .views import align_vertical, global_test_view, global_train_view

__all__ = [
    "ClientPartition", "DatasetTable", "Scenario", "SyntheticSpec", "VerticalLayout",
    "align_vertical", "auc_score", "catalog", "default_cache_dir", "evaluate",
    "generate_synthetic", "get_manifest", "global_test_view", "global_train_view",
    "load_scenario",
]
