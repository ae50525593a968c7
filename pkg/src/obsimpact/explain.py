"""Node-level observation impact from a trained estimator.

Three explainers are provided, all returning one non-negative score per
node of each context subgraph:

* ``SA``: rectified gradient of each output with respect to the projected
  node inputs ``H^(0)``.
* ``GRADCAM``: final-layer feature maps weighted by node-averaged gradients.
* ``LRP``: epsilon-rule relevance propagated from the outputs to ``H^(0)``.

Reduction convention shared by every method: a node's score for one output
variable is the mean (SA) or sum (LRP, Grad-CAM's weighted sum) over
feature channels, and the four output variables (U, V, T, Q) are summed.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geograph import OBSERVATION_KINDS, NodeKind, normalized_adjacency
from .neuralcore.model import N_OUTPUTS, Batch, ForwardTrace, ModelWeights, backward, forward, single_batch

DEFAULT_EPS = 1e-9


class ExplanationMethod(enum.Enum):
    SA = "sa"
    GRADCAM = "gradcam"
    LRP = "lrp"

    @classmethod
    def parse(cls, value) -> "ExplanationMethod":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown explanation method {value!r}")


def subgraph_batch(s, table) -> Batch:
    """Batch holding the single subgraph ``s`` with features from ``table``."""
    rows = table.rows(s.node_ids)
    return single_batch(normalized_adjacency(s), table.x[rows], table.kind_code[rows])


def _segment_mean(values, seg, counts):
    sums = np.zeros((len(counts), values.shape[1]))
    np.add.at(sums, seg, values)
    return sums / counts[:, None]


def output_gradients(weights: ModelWeights, batch: Batch, layer: int = -1, trace: ForwardTrace = None) -> np.ndarray:
    """``d z_v / d H^(layer)`` for every output ``v``; shape ``(4, N, d)``.

    Subgraphs in a batch are independent, so seeding all rows at once gives
    each subgraph its own gradient.
    """
    trace = forward(batch, weights) if trace is None else trace
    out = []
    for v in range(N_OUTPUTS):
        seed = np.zeros_like(trace.z)
        seed[:, v] = 1.0
        _, grad_h = backward(trace, weights, grad_z=seed)
        out.append(grad_h[layer])
    return np.stack(out)


def saliency_sa(weights: ModelWeights, batch: Batch, layer: int = 0) -> np.ndarray:
    grads = output_gradients(weights, batch, layer)
    return np.maximum(grads, 0.0).mean(axis=2).sum(axis=0)


def gradcam(weights: ModelWeights, batch: Batch) -> np.ndarray:
    trace = forward(batch, weights)
    grads = output_gradients(weights, batch, -1, trace)
    hn = trace.h[-1]
    scores = np.zeros(len(batch.seg))
    for v in range(N_OUTPUTS):
        alpha = _segment_mean(grads[v], batch.seg, batch.counts)
        scores += np.maximum((alpha[batch.seg] * hn).sum(axis=1), 0.0)
    return scores


def _stabilize(denom, eps):
    return denom + eps * np.where(denom >= 0, 1.0, -1.0)


def lrp_relevance(weights: ModelWeights, batch: Batch, eps: float = DEFAULT_EPS, trace: ForwardTrace = None) -> np.ndarray:
    """Signed relevance of every node for every output; shape ``(4, N)``.

    Each output ``z_v`` starts as the relevance of its own unit. Linear maps
    use ``R_a = sum_b a_a w_ab / (sum_k a_k w_kb + eps) R_b`` (biases are left
    out of the denominator so relevance is conserved), rectifiers pass
    relevance only where the unit is active, and mean pooling splits a
    channel's relevance equally between the pooled nodes.
    """
    trace = forward(batch, weights) if trace is None else trace
    n_head = len(trace.mlp_pre)
    out = np.zeros((N_OUTPUTS, len(batch.seg)))
    for v in range(N_OUTPUTS):
        r = np.zeros_like(trace.z)
        r[:, v] = trace.z[:, v]
        for i in reversed(range(n_head)):
            if i < n_head - 1:
                r = r * (trace.mlp_pre[i] > 0)
            a, w = trace.mlp_in[i], weights[f"head.{i}.W"]
            r = a * ((r / _stabilize(a @ w, eps)) @ w.T)
        r = r[batch.seg] / batch.counts[batch.seg, None]
        for layer in reversed(range(len(trace.zpre))):
            zl = trace.zpre[layer]
            r = r * (zl > 0)
            w = weights[f"gcn.{layer}.W"]
            # adjacency is symmetric, so A^T S = A S
            r = trace.h[layer] * (batch.adj @ ((r / _stabilize(zl, eps)) @ w.T))
        out[v] = r.sum(axis=1)
    return out


def lrp(weights: ModelWeights, batch: Batch, eps: float = DEFAULT_EPS) -> np.ndarray:
    # standardised outputs have arbitrary sign, so the magnitude is the importance
    return np.abs(lrp_relevance(weights, batch, eps)).sum(axis=0)


_DISPATCH = {
    ExplanationMethod.SA: saliency_sa,
    ExplanationMethod.GRADCAM: gradcam,
    ExplanationMethod.LRP: lrp,
}


@dataclass(frozen=True)
class NodeSensitivity:
    subgraph: int
    node_ids: np.ndarray
    scores: np.ndarray
    method: ExplanationMethod


def node_scores(method, weights: ModelWeights, batch: Batch) -> np.ndarray:
    """Flat per-row scores for every subgraph in ``batch``."""
    return _DISPATCH[ExplanationMethod.parse(method)](weights, batch)


def node_sensitivity(method, weights: ModelWeights, batch: Batch, node_ids=None, subgraph: int = 0) -> NodeSensitivity:
    method = ExplanationMethod.parse(method)
    scores = node_scores(method, weights, batch)
    ids = np.arange(len(scores)) if node_ids is None else np.asarray(node_ids)
    return NodeSensitivity(subgraph, ids, scores, method)


def max_workers() -> int:
    try:
        return max(1, int(os.environ.get("OBS_IMPACT_THREADS", "1")))
    except ValueError:
        return 1


def explain_samples(method, weights: ModelWeights, samples, chunk: int = 2048) -> np.ndarray:
    """Scores for every subgraph of a :class:`SampleSet`, aligned with ``samples.node_rows``."""
    method = ExplanationMethod.parse(method)
    parts = list(samples.chunks(chunk))

    def work(idx):
        return node_scores(method, weights, samples.batch(idx))

    workers = min(max_workers(), len(parts)) or 1
    if workers == 1:
        results = [work(p) for p in parts]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, parts))
    return np.concatenate(results) if results else np.zeros(0)


def aggregate_impact(node_ids, scores, all_ids=None) -> dict:
    """Mean score of each node over the subgraphs that contain it.

    ``node_ids``/``scores`` are flat arrays of (node, score) pairs, one pair
    per node occurrence. Ids listed in ``all_ids`` but never scored get 0.
    """
    node_ids = np.asarray(node_ids, dtype=np.int64)
    scores = np.asarray(scores, dtype=float)
    uniq, inv = np.unique(node_ids, return_inverse=True)
    sums = np.bincount(inv, weights=scores, minlength=len(uniq))
    counts = np.bincount(inv, minlength=len(uniq))
    out = {int(i): float(s / c) for i, s, c in zip(uniq, sums, counts)}
    if all_ids is not None:
        for i in all_ids:
            out.setdefault(int(i), 0.0)
    return out


def impact_by_type(impact: dict, kinds: dict) -> dict:
    """Mean impact per observation kind; NWP nodes excluded, absent kinds 0."""
    sums = {k: 0.0 for k in OBSERVATION_KINDS}
    counts = {k: 0 for k in OBSERVATION_KINDS}
    for node_id, value in impact.items():
        kind = kinds[node_id]
        if kind is NodeKind.NWP:
            continue
        sums[kind] += value
        counts[kind] += 1
    return {k: (sums[k] / counts[k] if counts[k] else 0.0) for k in OBSERVATION_KINDS}


def impact_timeseries(impact: dict, kinds: dict, times: dict) -> dict:
    """``{time: {kind: mean impact}}`` using the nodes of each time step."""
    by_time = {}
    for node_id, value in impact.items():
        by_time.setdefault(times[node_id], {})[node_id] = value
    return {t: impact_by_type(by_time[t], kinds) for t in sorted(by_time)}


@dataclass
class ImpactReport:
    method: ExplanationMethod
    node_impact: dict
    by_kind: dict
    timeseries: dict
    note: str = "scores: mean over feature channels (SA) or channel sum (Grad-CAM, LRP), summed over U, V, T, Q"

    @staticmethod
    def normalized(values: dict) -> dict:
        top = max(values.values(), default=0.0)
        return {k: (v / top if top > 0 else 0.0) for k, v in values.items()}


def impact_report(method, weights: ModelWeights, samples, scores=None) -> ImpactReport:
    method = ExplanationMethod.parse(method)
    if scores is None:
        scores = explain_samples(method, weights, samples)
    table = samples.table
    ids = table.ids[samples.node_rows]
    impact = aggregate_impact(ids, scores, all_ids=table.ids)
    kinds = dict(zip(table.ids.tolist(), table.kinds))
    times = dict(zip(table.ids.tolist(), table.times.tolist()))
    return ImpactReport(method, impact, impact_by_type(impact, kinds), impact_timeseries(impact, kinds, times))


def split_scores(scores, samples):
    """Per-subgraph views of flat scores."""
    return [scores[samples.node_ptr[i] : samples.node_ptr[i + 1]] for i in range(len(samples))]


__all__ = [
    "DEFAULT_EPS",
    "ExplanationMethod",
    "ImpactReport",
    "NodeSensitivity",
    "aggregate_impact",
    "explain_samples",
    "gradcam",
    "impact_by_type",
    "impact_report",
    "impact_timeseries",
    "lrp",
    "lrp_relevance",
    "node_scores",
    "node_sensitivity",
    "output_gradients",
    "saliency_sa",
    "split_scores",
    "subgraph_batch",
]
