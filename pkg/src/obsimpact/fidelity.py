"""Fidelity+ / Fidelity- of node explanations by occlusion.

Occluding a node replaces its attributes with the train-split mean, which
is zero after standardisation. The centre NWP node is never occluded.
Accuracy is the mean R^2 over U, V, T, Q on the evaluated split.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .explain import ExplanationMethod, explain_samples, max_workers
from .neuralcore.metrics import mean_r2
from .neuralcore.model import Batch, ModelWeights, forward

DEFAULT_FRACTIONS = (0.1, 0.2)
RANDOM = "random"


@dataclass(frozen=True)
class FidelityResult:
    method: str
    fraction: float
    fidelity_plus: float
    fidelity_minus: float
    metric: str = "mean_r2"

    def __post_init__(self):
        if not 0 < self.fraction < 1:
            raise ValueError("fraction must lie in (0, 1)")
        if not (math.isfinite(self.fidelity_plus) and math.isfinite(self.fidelity_minus)):
            raise ValueError("fidelity values must be finite")


def occlude(batch: Batch, rows, baseline=None) -> Batch:
    """Copy of ``batch`` with the attribute rows ``rows`` set to ``baseline``.

    ``baseline`` is in standardised units and defaults to zero (the train
    mean). Raises if a subgraph centre (its first row) is selected.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size and np.isin(rows, batch.offsets).any():
        raise ValueError("the centre NWP node cannot be occluded")
    x = batch.x.copy()
    if rows.size:
        x[rows] = 0.0 if baseline is None else np.asarray(baseline, dtype=float)
    return batch.with_x(x)


def n_occluded(sizes, fraction: float) -> np.ndarray:
    """``ceil(fraction * (|V| - 1))`` non-centre nodes per subgraph."""
    others = np.asarray(sizes) - 1
    return np.ceil(fraction * others - 1e-9).astype(np.int64).clip(0, others)


def select_nodes(scores, node_ptr, node_ids, fraction: float, top: bool = True) -> np.ndarray:
    """Boolean mask over flat node occurrences picking each subgraph's top
    (``top=True``) or bottom ranked non-centre nodes; ties go to the lower id."""
    scores = np.asarray(scores, dtype=float)
    sizes = np.diff(node_ptr)
    seg = np.repeat(np.arange(len(sizes)), sizes)
    is_center = np.zeros(len(scores), dtype=bool)
    is_center[node_ptr[:-1][sizes > 0]] = True
    key = -scores if top else scores
    order = np.lexsort((node_ids, key, is_center, seg))
    rank = np.empty(len(scores), dtype=np.int64)
    rank[order] = np.arange(len(scores)) - node_ptr[seg[order]]
    return (~is_center) & (rank < n_occluded(sizes, fraction)[seg])


def _predict_masked(weights: ModelWeights, samples, mask, chunk: int = 4096) -> np.ndarray:
    parts = list(samples.chunks(chunk))

    def work(idx):
        batch = samples.batch(idx)
        lo, hi = samples.node_ptr[idx[0]], samples.node_ptr[idx[-1] + 1]
        if mask is not None:
            batch = occlude(batch, np.flatnonzero(mask[lo:hi]))
        return forward(batch, weights).z

    workers = min(max_workers(), len(parts)) or 1
    if workers == 1:
        results = [work(p) for p in parts]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, parts))
    return np.concatenate(results) if results else np.zeros((0, 4))


def method_scores(method, weights: ModelWeights, samples, seed: int = 0) -> np.ndarray:
    if method == RANDOM:
        return np.random.default_rng((seed, 5)).random(len(samples.node_rows))
    return explain_samples(method, weights, samples)


class FidelityEvaluator:
    """Caches base accuracy and per-method scores for one (weights, samples)."""

    def __init__(self, weights: ModelWeights, samples, seed: int = 0):
        self.weights = weights
        self.samples = samples
        self.seed = seed
        self.node_ids = samples.table.ids[samples.node_rows]
        self.base_accuracy = mean_r2(_predict_masked(weights, samples, None), samples.targets)
        self._scores = {}

    def scores(self, method):
        key = method if method == RANDOM else ExplanationMethod.parse(method)
        if key not in self._scores:
            self._scores[key] = method_scores(key, self.weights, self.samples, self.seed)
        return self._scores[key]

    def accuracy_with(self, mask) -> float:
        return mean_r2(_predict_masked(self.weights, self.samples, mask), self.samples.targets)

    def fidelity(self, method, fraction: float, top: bool) -> float:
        mask = select_nodes(self.scores(method), self.samples.node_ptr, self.node_ids, fraction, top)
        if not mask.any():
            return 0.0
        return self.base_accuracy - self.accuracy_with(mask)

    def result(self, method, fraction: float) -> FidelityResult:
        name = method if method == RANDOM else ExplanationMethod.parse(method).value
        return FidelityResult(name, fraction, self.fidelity(method, fraction, True), self.fidelity(method, fraction, False))


def fidelity_plus(weights, samples, method, fraction: float, seed: int = 0) -> float:
    """Accuracy lost when each subgraph's most important nodes are occluded."""
    return FidelityEvaluator(weights, samples, seed).fidelity(method, fraction, top=True)


def fidelity_minus(weights, samples, method, fraction: float, seed: int = 0) -> float:
    """Accuracy lost when each subgraph's least important nodes are occluded."""
    return FidelityEvaluator(weights, samples, seed).fidelity(method, fraction, top=False)


def fidelity_table(weights, samples, methods=tuple(ExplanationMethod), fractions=DEFAULT_FRACTIONS, seed=0, evaluator=None):
    ev = FidelityEvaluator(weights, samples, seed) if evaluator is None else evaluator
    return [ev.result(m, f) for m in methods for f in fractions]
