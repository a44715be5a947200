"""Vertical alignment and the global test view."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..errors import NoCommonIds
from .types import ClientPartition, DatasetTable, Scenario


def _align_tables(tables: list[DatasetTable]) -> list[DatasetTable]:
    common = set(tables[0].ids)
    for t in tables[1:]:
        common &= set(t.ids)
    # order follows the first party's ids
    order = [i for i in tables[0].ids if i in common]
    out = []
    for t in tables:
        pos = {rid: k for k, rid in enumerate(t.ids)}
        out.append(t.take([pos[rid] for rid in order]))
    return out


def align_vertical(scenario: Scenario) -> Scenario:
    """Reorder every party's rows so ids match positionally, dropping ids not held by all."""
    if not scenario.is_vertical:
        raise ValueError("align_vertical needs a vertical scenario")
    parties = sorted(scenario.clients, key=lambda c: c.client_id)
    trains = _align_tables([p.train for p in parties])
    tests = _align_tables([p.test for p in parties])
    if trains[0].num_rows == 0 and tests[0].num_rows == 0:
        raise NoCommonIds(f"{scenario.name}: parties share no row ids")
    clients = [ClientPartition(p.client_id, tr, te) for p, tr, te in zip(parties, trains, tests)]
    return replace(scenario, clients=clients)


def global_test_view(scenario: Scenario) -> DatasetTable:
    parties = sorted(scenario.clients, key=lambda c: c.client_id)
    if not scenario.is_vertical:
        ids: list[str] = []
        for p in parties:
            ids.extend(p.test.ids)
        feats = np.vstack([p.test.features for p in parties])
        labels = np.concatenate([p.test.labels for p in parties])
        return DatasetTable(ids, feats, labels)
    aligned = align_vertical(scenario)
    parties = sorted(aligned.clients, key=lambda c: c.client_id)
    label_party = aligned.vertical_split.label_party if aligned.vertical_split else 0
    labels = next(p.test.labels for p in parties if p.client_id == label_party)
    feats = np.hstack([p.test.features for p in parties])
    return DatasetTable(list(parties[0].test.ids), feats, labels)


def global_train_view(scenario: Scenario) -> DatasetTable:
    """Pooled training rows; the centralized baseline trains on this."""
    parties = sorted(scenario.clients, key=lambda c: c.client_id)
    if not scenario.is_vertical:
        ids: list[str] = []
        for p in parties:
            ids.extend(p.train.ids)
        return DatasetTable(ids, np.vstack([p.train.features for p in parties]),
                            np.concatenate([p.train.labels for p in parties]))
    aligned = align_vertical(scenario)
    parties = sorted(aligned.clients, key=lambda c: c.client_id)
    label_party = aligned.vertical_split.label_party if aligned.vertical_split else 0
    labels = next(p.train.labels for p in parties if p.client_id == label_party)
    return DatasetTable(list(parties[0].train.ids),
                        np.hstack([p.train.features for p in parties]), labels)
