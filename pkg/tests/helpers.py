"""Random small models and batches shared by several test modules."""

import numpy as np
import scipy.sparse as sp

from obsimpact.geograph import normalized_adjacency
from obsimpact.neuralcore.model import KIND_COLUMNS, KINDS, Batch, ModelConfig, init_weights


def random_adjacency(rng, n, p=0.5):
    a = np.triu((rng.random((n, n)) < p).astype(int), 1)
    return a + a.T


def random_batch(rng, n_sub=2, max_nodes=6, targets=True):
    """Stack ``n_sub`` random subgraphs; centres are NWP (kind code 0)."""
    xs, kinds, blocks, counts = [], [], [], []
    for _ in range(n_sub):
        n = int(rng.integers(1, max_nodes + 1))
        codes = rng.integers(0, len(KINDS), size=n)
        codes[0] = 0
        x = np.zeros((n, 6))
        for r, c in enumerate(codes):
            cols = KIND_COLUMNS[KINDS[c]]
            x[r, cols] = rng.normal(size=len(cols))
        xs.append(x)
        kinds.append(codes)
        blocks.append(normalized_adjacency(random_adjacency(rng, n)))
        counts.append(n)
    counts = np.array(counts)
    seg = np.repeat(np.arange(n_sub), counts)
    tgt = rng.normal(size=(n_sub, 4)) if targets else None
    return Batch(np.vstack(xs), np.concatenate(kinds), sp.block_diag(blocks, format="csr"), seg, counts, tgt)


def random_model(rng, d=None, layers=None, hidden=None, reconstruction=False, psi=0.0):
    d = int(rng.integers(2, 9)) if d is None else d
    layers = int(rng.integers(1, 3)) if layers is None else layers
    hidden = (int(rng.integers(2, 7)),) if hidden is None else hidden
    cfg = ModelConfig(d=d, n_gcn_layers=layers, mlp_hidden=hidden, psi=psi, seed=int(rng.integers(1 << 30)))
    w = init_weights(cfg, reconstruction=reconstruction)
    # non-zero biases so every parameter carries signal
    for name in w.names():
        if name.endswith(".b"):
            w.params[name] = rng.normal(scale=0.1, size=w[name].shape)
    return w
