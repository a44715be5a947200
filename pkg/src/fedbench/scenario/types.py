from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

SETTINGS = ("horizontal_cross_silo", "horizontal_cross_device", "vertical")
TASKS = ("binary_classification", "multiclass_classification", "regression")
METRICS = ("accuracy", "auc", "mse")


@dataclass
class DatasetTable:
    ids: list[str]
    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if len(self.ids) != self.features.shape[0]:
            raise ValueError("ids length must equal feature row count")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape[0] != len(self.ids):
                raise ValueError("labels length must equal row count")

    @property
    def num_rows(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def take(self, index) -> "DatasetTable":
        index = np.asarray(index, dtype=np.int64)
        return DatasetTable(
            [self.ids[i] for i in index],
            self.features[index],
            None if self.labels is None else self.labels[index],
        )


@dataclass
class ClientPartition:
    client_id: int
    train: DatasetTable
    test: DatasetTable

    def __post_init__(self):
        if self.train.num_features != self.test.num_features:
            raise ValueError("train and test feature counts differ")
        if set(self.train.ids) & set(self.test.ids):
            raise ValueError(f"client {self.client_id}: train and test rows overlap")


@dataclass
class VerticalLayout:
    label_party: int
    features_per_party: dict[int, int]


@dataclass
class Scenario:
    name: str
    setting: str
    task: str
    metric: str
    clients: list[ClientPartition]
    vertical_split: VerticalLayout | None = None
    num_classes: int = 2
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        ids = [c.client_id for c in self.clients]
        if len(set(ids)) != len(ids):
            raise ValueError("client ids must be unique")

    @property
    def is_vertical(self) -> bool:
        return self.setting == "vertical"

    def client(self, client_id: int) -> ClientPartition:
        for c in self.clients:
            if c.client_id == client_id:
                return c
        raise KeyError(client_id)

    @property
    def num_features(self) -> int:
        if self.is_vertical:
            return sum(c.train.num_features for c in self.clients)
        return self.clients[0].train.num_features

    @property
    def total_rows(self) -> int:
        if self.is_vertical:
            c = self.clients[0]
            return c.train.num_rows + c.test.num_rows
        return sum(c.train.num_rows + c.test.num_rows for c in self.clients)

    def digest(self) -> str:
        """SHA-256 over the canonical CSV rendering of every partition."""
        from .catalog import table_to_csv

        h = hashlib.sha256()
        for c in sorted(self.clients, key=lambda c: c.client_id):
            for split in (c.train, c.test):
                h.update(table_to_csv(split).encode())
        return h.hexdigest()
