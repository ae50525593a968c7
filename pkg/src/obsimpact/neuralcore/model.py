"""Projection -> GCN encoder -> mean pool -> MLP head, with exact reverse mode.

Everything works on a :class:`Batch`: several context subgraphs stacked
into one block-diagonal normalised adjacency, so one subgraph is simply a
batch of size one. Row-vector convention throughout (``H @ W``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.sparse as sp

from ..geograph import KIND_VARIABLES, VARIABLES, NodeKind

KINDS = tuple(NodeKind)
KIND_CODE = {k: i for i, k in enumerate(KINDS)}
KIND_COLUMNS = {k: np.array([VARIABLES.index(v) for v in KIND_VARIABLES[k]]) for k in KINDS}
N_OUTPUTS = 4


@dataclass(frozen=True)
class ModelConfig:
    d: int = 32
    n_gcn_layers: int = 2
    mlp_hidden: tuple = (32,)
    k: int = 2
    psi: float = 1e-4
    lr: float = 1e-3
    epochs_pretrain: int = 4
    epochs_finetune: int = 4
    batch_size: int = 64
    mask_rate: float = 0.0
    seed: int = 0
    activation: str = "relu"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.n_gcn_layers < 1:
            raise ValueError("n_gcn_layers must be >= 1")
        if self.psi < 0:
            raise ValueError("psi must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.activation != "relu":
            raise ValueError("only the rectifier activation is supported")
        object.__setattr__(self, "mlp_hidden", tuple(int(w) for w in self.mlp_hidden))

    def replace(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class ModelWeights:
    """Named parameter arrays.

    ``proj.<KIND>.W/b``   per-kind linear projection to ``d``
    ``gcn.<l>.W``         GCN layer weights (no bias)
    ``head.<i>.W/b``      MLP regression head, last layer emits U, V, T, Q
    ``recon.<KIND>.W/b``  reconstruction decoders, pretraining only
    """

    def __init__(self, params: dict, config: ModelConfig):
        self.params = dict(params)
        self.config = config

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self, prefix: str = ""):
        return [n for n in self.params if n.startswith(prefix)]

    def copy(self) -> "ModelWeights":
        return ModelWeights({k: v.copy() for k, v in self.params.items()}, self.config)

    def without(self, prefix: str) -> "ModelWeights":
        return ModelWeights({k: v for k, v in self.params.items() if not k.startswith(prefix)}, self.config)

    def merged(self, other: "ModelWeights") -> "ModelWeights":
        return ModelWeights({**self.params, **other.params}, self.config)

    @property
    def n_head_layers(self) -> int:
        return len(self.names("head.")) // 2

    def equals(self, other: "ModelWeights") -> bool:
        return self.params.keys() == other.params.keys() and all(
            np.array_equal(v, other.params[k]) for k, v in self.params.items()
        )


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_encoder(config: ModelConfig, rng=None, reconstruction: bool = False) -> ModelWeights:
    rng = np.random.default_rng(config.seed) if rng is None else rng
    d = config.d
    params = {}
    for kind in KINDS:
        nv = len(KIND_VARIABLES[kind])
        params[f"proj.{kind.value}.W"] = _glorot(rng, nv, d)
        params[f"proj.{kind.value}.b"] = np.zeros(d)
    for layer in range(config.n_gcn_layers):
        # He-style scale keeps rectified activations alive at init
        params[f"gcn.{layer}.W"] = rng.normal(0.0, np.sqrt(2.0 / d), size=(d, d))
    if reconstruction:
        for kind in KINDS:
            nv = len(KIND_VARIABLES[kind])
            params[f"recon.{kind.value}.W"] = _glorot(rng, d, nv)
            params[f"recon.{kind.value}.b"] = np.zeros(nv)
    return ModelWeights(params, config)


def init_head(config: ModelConfig, rng=None) -> ModelWeights:
    rng = np.random.default_rng((config.seed, 1)) if rng is None else rng
    widths = (config.d, *config.mlp_hidden, N_OUTPUTS)
    params = {}
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        params[f"head.{i}.W"] = _glorot(rng, a, b)
        params[f"head.{i}.b"] = np.zeros(b)
    return ModelWeights(params, config)


def init_weights(config: ModelConfig, reconstruction: bool = False) -> ModelWeights:
    return init_encoder(config, reconstruction=reconstruction).merged(init_head(config))


@dataclass
class Batch:
    """Stacked subgraphs.

    ``x`` holds standardised attributes padded to the six variables (unused
    columns are zero), ``adj`` the block-diagonal normalised adjacency and
    ``seg`` the subgraph index of every row.
    """

    x: np.ndarray
    kind_code: np.ndarray
    adj: sp.csr_matrix
    seg: np.ndarray
    counts: np.ndarray
    targets: np.ndarray = None
    _pool: sp.csr_matrix = field(default=None, repr=False)
    _kind_rows: dict = field(default=None, repr=False)

    @property
    def n_sub(self) -> int:
        return len(self.counts)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts)[:-1]]).astype(np.int64)

    @property
    def pool(self) -> sp.csr_matrix:
        if self._pool is None:
            n = len(self.seg)
            w = 1.0 / self.counts[self.seg]
            self._pool = sp.csr_matrix((w, (self.seg, np.arange(n))), shape=(self.n_sub, n))
        return self._pool

    def kind_rows(self) -> dict:
        if self._kind_rows is None:
            order = np.argsort(self.kind_code, kind="stable")
            codes = self.kind_code[order]
            bounds = np.searchsorted(codes, np.arange(len(KINDS) + 1))
            self._kind_rows = {
                KINDS[c]: order[bounds[c] : bounds[c + 1]] for c in range(len(KINDS)) if bounds[c + 1] > bounds[c]
            }
        return self._kind_rows

    def with_x(self, x) -> "Batch":
        return Batch(x, self.kind_code, self.adj, self.seg, self.counts, self.targets, self._pool, self._kind_rows)


def single_batch(norm_adj, x, kind_code, target=None) -> Batch:
    """Batch of one subgraph from dense pieces (useful for tests and probes)."""
    n = len(kind_code)
    return Batch(
        np.asarray(x, dtype=float),
        np.asarray(kind_code, dtype=np.int64),
        sp.csr_matrix(np.asarray(norm_adj, dtype=float)),
        np.zeros(n, dtype=np.int64),
        np.array([n], dtype=np.int64),
        None if target is None else np.asarray(target, dtype=float).reshape(1, -1),
    )


@dataclass
class ForwardTrace:
    batch: Batch
    h: list  # H^(0) .. H^(n), each (N, d)
    m: list  # A_hat @ H^(l), the GCN layer inputs
    zpre: list  # GCN pre-activations
    pooled: np.ndarray  # (B, d)
    mlp_in: list  # input to each head layer
    mlp_pre: list  # pre-activation of each head layer
    z: np.ndarray  # (B, 4) predictions
    recon: dict = None  # kind -> (rows, reconstructed attributes)


def project(node_attrs, kind, weights: ModelWeights) -> np.ndarray:
    """Linear projection of raw (standardised) attributes of one kind to ``d``."""
    w = weights[f"proj.{kind.value}.W"]
    a = np.asarray(node_attrs, dtype=float)
    if a.shape[-1] != w.shape[0]:
        raise ValueError(f"{kind.value} projection expects {w.shape[0]} attributes, got {a.shape[-1]}")
    return a @ w + weights[f"proj.{kind.value}.b"]


def project_batch(batch: Batch, weights: ModelWeights) -> np.ndarray:
    h0 = np.zeros((len(batch.kind_code), weights.config.d))
    for kind, rows in batch.kind_rows().items():
        h0[rows] = project(batch.x[np.ix_(rows, KIND_COLUMNS[kind])], kind, weights)
    return h0


def gcn_forward(batch: Batch, weights: ModelWeights, h0=None) -> ForwardTrace:
    """Projection and the rectified GCN stack; head fields are left empty."""
    h = [project_batch(batch, weights) if h0 is None else h0]
    m, zpre = [], []
    for layer in range(weights.config.n_gcn_layers):
        ml = batch.adj @ h[-1]
        zl = ml @ weights[f"gcn.{layer}.W"]
        m.append(ml)
        zpre.append(zl)
        h.append(np.maximum(zl, 0.0))
    return ForwardTrace(batch, h, m, zpre, None, [], [], None)


def pool_and_head(trace: ForwardTrace, weights: ModelWeights) -> np.ndarray:
    pooled = trace.batch.pool @ trace.h[-1]
    trace.pooled = pooled
    a = pooled
    n_layers = weights.n_head_layers
    trace.mlp_in, trace.mlp_pre = [], []
    for i in range(n_layers):
        trace.mlp_in.append(a)
        u = a @ weights[f"head.{i}.W"] + weights[f"head.{i}.b"]
        trace.mlp_pre.append(u)
        a = np.maximum(u, 0.0) if i < n_layers - 1 else u
    trace.z = a
    return a


def reconstruct(trace: ForwardTrace, weights: ModelWeights) -> dict:
    hn = trace.h[-1]
    out = {}
    for kind, rows in trace.batch.kind_rows().items():
        out[kind] = (rows, hn[rows] @ weights[f"recon.{kind.value}.W"] + weights[f"recon.{kind.value}.b"])
    trace.recon = out
    return out


def forward(batch: Batch, weights: ModelWeights, head: bool = True, recon: bool = False) -> ForwardTrace:
    trace = gcn_forward(batch, weights)
    if head:
        pool_and_head(trace, weights)
    if recon:
        reconstruct(trace, weights)
    return trace


def predict(weights: ModelWeights, batch: Batch) -> np.ndarray:
    return forward(batch, weights).z


def backward(trace: ForwardTrace, weights: ModelWeights, grad_z=None, grad_recon=None):
    """Reverse-mode pass.

    Parameters
    ----------
    grad_z : (B, 4) array, optional
        Upstream gradient on the predictions.
    grad_recon : dict kind -> (n_kind, n_vars) array, optional
        Upstream gradient on the reconstructed attributes.

    Returns
    -------
    grads : dict
        Gradient for every parameter reached by the pass.
    grad_h : list
        Gradients with respect to ``H^(0) .. H^(n)`` (post-activation).
    """
    if trace is None or not trace.h:
        raise ValueError("backward needs a complete forward trace")
    batch = trace.batch
    grads = {}
    d_hn = np.zeros_like(trace.h[-1])

    if grad_z is not None:
        if trace.z is None:
            raise ValueError("trace has no head outputs")
        g = np.asarray(grad_z, dtype=float)
        n_layers = len(trace.mlp_pre)
        for i in reversed(range(n_layers)):
            if i < n_layers - 1:
                g = g * (trace.mlp_pre[i] > 0)
            grads[f"head.{i}.W"] = trace.mlp_in[i].T @ g
            grads[f"head.{i}.b"] = g.sum(axis=0)
            g = g @ weights[f"head.{i}.W"].T
        d_hn += batch.pool.T @ g

    if grad_recon is not None:
        if trace.recon is None:
            raise ValueError("trace has no reconstruction outputs")
        hn = trace.h[-1]
        for kind, (rows, _) in trace.recon.items():
            gk = grad_recon.get(kind)
            if gk is None:
                continue
            grads[f"recon.{kind.value}.W"] = hn[rows].T @ gk
            grads[f"recon.{kind.value}.b"] = gk.sum(axis=0)
            d_hn[rows] += gk @ weights[f"recon.{kind.value}.W"].T

    grad_h = [None] * len(trace.h)
    grad_h[-1] = d_hn
    dh = d_hn
    for layer in reversed(range(len(trace.zpre))):
        dz = dh * (trace.zpre[layer] > 0)
        grads[f"gcn.{layer}.W"] = trace.m[layer].T @ dz
        # A_hat is symmetric
        dh = batch.adj @ (dz @ weights[f"gcn.{layer}.W"].T)
        grad_h[layer] = dh

    for kind, rows in batch.kind_rows().items():
        xk = batch.x[np.ix_(rows, KIND_COLUMNS[kind])]
        grads[f"proj.{kind.value}.W"] = xk.T @ dh[rows]
        grads[f"proj.{kind.value}.b"] = dh[rows].sum(axis=0)
    return grads, grad_h


def _regularized(weights: ModelWeights, groups) -> list:
    return [n for n in weights.params if n.endswith(".W") and n.split(".")[0] in groups]


def weight_penalty(weights: ModelWeights, groups) -> float:
    return float(sum(np.sum(weights[n] ** 2) for n in _regularized(weights, groups)))


def loss_reg(z_true, z_pred, weights: ModelWeights, psi: float):
    """Mean squared error over all subgraphs and variables plus ``psi * ||W||^2``.

    Returns ``(loss, grad_wrt_z_pred)``.
    """
    z_true = np.asarray(z_true, dtype=float)
    z_pred = np.asarray(z_pred, dtype=float)
    resid = z_pred - z_true
    loss = float(np.mean(resid**2)) + psi * weight_penalty(weights, ("proj", "gcn", "head"))
    return loss, 2.0 * resid / resid.size


def loss_ssl(trace: ForwardTrace, weights: ModelWeights, psi: float, target=None):
    """Mean squared reconstruction error over every attribute in the batch plus ``psi * ||W||^2``.

    ``target`` defaults to the batch inputs; pass the clean attributes when
    the inputs were masked. Returns ``(loss, grad_recon)``.
    """
    recon = trace.recon if trace.recon is not None else reconstruct(trace, weights)
    x = trace.batch.x if target is None else target
    resid = {kind: pred - x[np.ix_(rows, KIND_COLUMNS[kind])] for kind, (rows, pred) in recon.items()}
    count = sum(r.size for r in resid.values())
    sse = sum(float(np.sum(r**2)) for r in resid.values())
    loss = sse / count + psi * weight_penalty(weights, ("proj", "gcn", "recon"))
    return loss, {kind: 2.0 * r / count for kind, r in resid.items()}


def add_penalty_grads(grads: dict, weights: ModelWeights, psi: float, groups) -> dict:
    for n in _regularized(weights, groups):
        grads[n] = grads.get(n, 0.0) + 2.0 * psi * weights[n]
    return grads


def reg_loss_and_grads(batch: Batch, weights: ModelWeights, psi: float):
    trace = forward(batch, weights)
    loss, gz = loss_reg(batch.targets, trace.z, weights, psi)
    grads, _ = backward(trace, weights, grad_z=gz)
    return loss, add_penalty_grads(grads, weights, psi, ("proj", "gcn", "head"))


def mask_nodes(batch: Batch, rate: float, rng) -> Batch:
    """Copy of ``batch`` with a random ``rate`` of node rows set to the train mean (zero)."""
    hide = rng.random(len(batch.seg)) < rate
    x = batch.x.copy()
    x[hide] = 0.0
    return batch.with_x(x)


def ssl_loss_and_grads(batch: Batch, weights: ModelWeights, psi: float, mask_rate: float = 0.0, rng=None):
    inputs = batch if mask_rate <= 0 else mask_nodes(batch, mask_rate, rng)
    trace = forward(inputs, weights, head=False, recon=True)
    loss, gr = loss_ssl(trace, weights, psi, target=batch.x)
    grads, _ = backward(trace, weights, grad_recon=gr)
    return loss, add_penalty_grads(grads, weights, psi, ("proj", "gcn", "recon"))
