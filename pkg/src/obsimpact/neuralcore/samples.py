"""Turn a :class:`~obsimpact.synthdata.Dataset` into batches of context subgraphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..geograph import (
    DEFAULT_K,
    DEFAULT_RADIUS_KM,
    VARIABLES,
    NodeKind,
    build_graph,
    khop_subgraph,
    normalized_adjacency,
)
from .model import KIND_CODE, KIND_COLUMNS, Batch

LABEL_COLUMNS = np.array([VARIABLES.index(v) for v in ("U", "V", "T", "Q")])


@dataclass(frozen=True)
class Standardizer:
    """Per-variable z-score over ``VARIABLES`` using train-split statistics."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, dataset) -> "Standardizer":
        sums = np.zeros(len(VARIABLES))
        sq = np.zeros(len(VARIABLES))
        n = np.zeros(len(VARIABLES))
        for node in dataset.nodes():
            cols = KIND_COLUMNS[node.kind]
            sums[cols] += node.attributes
            n[cols] += 1
        mean = np.divide(sums, n, out=np.zeros_like(sums), where=n > 0)
        for node in dataset.nodes():
            cols = KIND_COLUMNS[node.kind]
            sq[cols] += (node.attributes - mean[cols]) ** 2
        std = np.sqrt(np.divide(sq, n, out=np.zeros_like(sq), where=n > 0))
        std[std == 0] = 1.0
        return cls(mean, std)

    def transform(self, values, columns) -> np.ndarray:
        return (np.asarray(values) - self.mean[columns]) / self.std[columns]

    def inverse(self, values, columns) -> np.ndarray:
        return np.asarray(values) * self.std[columns] + self.mean[columns]

    def transform_labels(self, z):
        return self.transform(z, LABEL_COLUMNS)

    def inverse_labels(self, z):
        return self.inverse(z, LABEL_COLUMNS)


class NodeTable:
    """Standardised, padded attribute rows for every node of a dataset."""

    def __init__(self, dataset, standardizer: Standardizer):
        nodes = list(dataset.nodes())
        self.ids = np.array([n.id for n in nodes], dtype=np.int64)
        self.kind_code = np.array([KIND_CODE[n.kind] for n in nodes], dtype=np.int64)
        self.kinds = [n.kind for n in nodes]
        self.times = np.array([n.time_index for n in nodes], dtype=np.int64)
        self.x = np.zeros((len(nodes), len(VARIABLES)))
        for i, n in enumerate(nodes):
            cols = KIND_COLUMNS[n.kind]
            self.x[i, cols] = standardizer.transform(n.attributes, cols)
        if len(nodes) and np.array_equal(self.ids, np.arange(len(nodes))):
            self._row = None
        else:
            self._row = {int(i): r for r, i in enumerate(self.ids)}

    def rows(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if self._row is None:
            return ids
        return np.array([self._row[int(i)] for i in ids], dtype=np.int64)


def _ragged(ptr, flat, idx):
    """Concatenate segments ``flat[ptr[i]:ptr[i+1]]`` for ``i`` in ``idx``."""
    starts, ends = ptr[idx], ptr[idx + 1]
    lengths = ends - starts
    total = int(lengths.sum())
    if total == 0:
        return flat[:0], lengths
    first = np.repeat(starts - np.concatenate([[0], np.cumsum(lengths)[:-1]]), lengths)
    return flat[np.arange(total) + first], lengths


class SampleSet:
    """All context subgraphs centred on the NWP nodes of a dataset.

    Subgraphs are kept both as :class:`ContextSubgraph` objects and as flat
    ragged arrays so that arbitrary subsets can be batched quickly.
    """

    def __init__(self, dataset, standardizer: Standardizer, k: int = DEFAULT_K, radius_km: float = DEFAULT_RADIUS_KM):
        self.dataset = dataset
        self.standardizer = standardizer
        self.k = k
        self.table = NodeTable(dataset, standardizer)
        self.subgraphs = []
        self.graphs = []
        targets, times = [], []
        for step in dataset.steps:
            g = build_graph(step.nodes, radius_km)
            self.graphs.append(g)
            for node in step.nodes:
                if node.kind is NodeKind.NWP:
                    self.subgraphs.append(khop_subgraph(g, node.id, k))
                    targets.append(step.labels[node.id])
                    times.append(step.time)
        self.labels = np.array(targets, dtype=float).reshape(-1, 4)
        self.targets = standardizer.transform_labels(self.labels) if len(targets) else self.labels
        self.times = np.array(times, dtype=np.int64)

        counts = np.array([len(s) for s in self.subgraphs], dtype=np.int64)
        self.node_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.node_rows = (
            self.table.rows(np.concatenate([s.node_ids for s in self.subgraphs]))
            if self.subgraphs
            else np.zeros(0, dtype=np.int64)
        )
        nz_i, nz_j, nz_v, nz_counts = [], [], [], []
        for s in self.subgraphs:
            a = normalized_adjacency(s)
            i, j = np.nonzero(a)
            nz_i.append(i)
            nz_j.append(j)
            nz_v.append(a[i, j])
            nz_counts.append(len(i))
        self.nz_ptr = np.concatenate([[0], np.cumsum(nz_counts)]).astype(np.int64)
        self.nz_i = np.concatenate(nz_i).astype(np.int64) if nz_i else np.zeros(0, np.int64)
        self.nz_j = np.concatenate(nz_j).astype(np.int64) if nz_j else np.zeros(0, np.int64)
        self.nz_v = np.concatenate(nz_v) if nz_v else np.zeros(0)

    def __len__(self):
        return len(self.subgraphs)

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.node_ptr)

    def batch(self, idx=None) -> Batch:
        idx = np.arange(len(self)) if idx is None else np.asarray(idx, dtype=np.int64)
        rows, counts = _ragged(self.node_ptr, self.node_rows, idx)
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
        nz_i, nz_counts = _ragged(self.nz_ptr, self.nz_i, idx)
        nz_j, _ = _ragged(self.nz_ptr, self.nz_j, idx)
        nz_v, _ = _ragged(self.nz_ptr, self.nz_v, idx)
        shift = np.repeat(offsets, nz_counts)
        n = int(counts.sum())
        adj = sp.csr_matrix((nz_v, (nz_i + shift, nz_j + shift)), shape=(n, n))
        seg = np.repeat(np.arange(len(idx)), counts)
        return Batch(self.table.x[rows], self.table.kind_code[rows], adj, seg, counts, self.targets[idx])

    def chunks(self, size: int):
        for start in range(0, len(self), size):
            yield np.arange(start, min(start + size, len(self)))
