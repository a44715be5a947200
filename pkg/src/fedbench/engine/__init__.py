"""Reference FL engine: FedAvg over dense models, histogram GBDT, vertical protocols."""

from .checkpoint import load_model, save_model
from .fedavg import aggregate_fedavg, client_seed, fedavg_train, sample_clients
from .gbdt import (
    Histogram, Split, Tree, TreeEnsemble, build_histogram, compute_bin_edges,
    find_best_split, gbdt_fit, merge_histograms,
)
from .models import (
    DenseParams, GBDTParams, ModelSpec, init_model, loss_and_grad, parse_model_name, predict,
)
from .sgd import ClientUpdate, TrainConfig, local_train
from .vertical import VerticalParty, make_parties, vertical_predict, vertical_regression_step

__all__ = [
    "ClientUpdate", "DenseParams", "GBDTParams", "Histogram", "ModelSpec", "Split",
    "TrainConfig", "Tree", "TreeEnsemble", "VerticalParty", "aggregate_fedavg",
    "build_histogram", "client_seed", "fedavg_train", "compute_bin_edges", "find_best_split", "gbdt_fit", "init_model",
    "load_model", "local_train", "loss_and_grad", "make_parties", "merge_histograms",
    "parse_model_name", "predict", "sample_clients", "save_model", "vertical_predict",
    "vertical_regression_step",
]
