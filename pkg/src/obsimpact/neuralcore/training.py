from __future__ import annotations

import logging

import numpy as np

from .model import (
    ModelConfig,
    ModelWeights,
    forward,
    init_encoder,
    init_head,
    reg_loss_and_grads,
    ssl_loss_and_grads,
)

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m, self.v = {}, {}
        self.t = 0

    def step(self, weights: ModelWeights, grads: dict):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            weights.params[name] = weights.params[name] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _run_epochs(samples, weights, config, epochs, loss_fn, rng, label, history):
    opt = Adam(config.lr)
    for epoch in range(epochs):
        order = rng.permutation(len(samples))
        total, n = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_fn(samples.batch(idx), weights, config.psi)
            if not np.isfinite(loss):
                raise TrainingError(f"{label}: non-finite loss at epoch {epoch}, batch starting {start} (loss={loss})")
            opt.step(weights, grads)
            total += loss * len(idx)
            n += len(idx)
        history.append((epoch, total / max(n, 1)))
        log.info("%s epoch %d loss %.6f", label, epoch, total / max(n, 1))
    return weights


def pretrain(samples, config: ModelConfig, history=None) -> ModelWeights:
    """Reconstruction pretraining of projection + GCN; returns the encoder only."""
    if len(samples) == 0:
        raise ValueError("empty training split")
    history = [] if history is None else history
    weights = init_encoder(config, reconstruction=True)
    rng = np.random.default_rng((config.seed, 2))
    mask_rng = np.random.default_rng((config.seed, 4))

    def loss_fn(batch, w, psi):
        return ssl_loss_and_grads(batch, w, psi, config.mask_rate, mask_rng)

    _run_epochs(samples, weights, config, config.epochs_pretrain, loss_fn, rng, "pretrain", history)
    return weights.without("recon.")


def finetune(samples, config: ModelConfig, encoder: ModelWeights = None, history=None) -> ModelWeights:
    """Train encoder + fresh MLP head on the regression loss.

    ``encoder=None`` starts from a random encoder (the vanilla-GCN ablation).
    """
    if len(samples) == 0:
        raise ValueError("empty training split")
    history = [] if history is None else history
    if encoder is None:
        encoder = init_encoder(config)
    else:
        encoder = encoder.without("recon.").without("head.").copy()
        expected = init_encoder(config)
        for name, arr in expected.params.items():
            if name not in encoder or encoder[name].shape != arr.shape:
                raise ValueError(f"encoder parameter {name} does not match config")
    weights = ModelWeights(encoder.merged(init_head(config)).params, config)
    rng = np.random.default_rng((config.seed, 3))
    return _run_epochs(samples, weights, config, config.epochs_finetune, reg_loss_and_grads, rng, "finetune", history)


def predict_samples(weights: ModelWeights, samples, idx=None, chunk: int = 4096) -> np.ndarray:
    """Standardised predictions for (a subset of) a sample set."""
    idx = np.arange(len(samples)) if idx is None else np.asarray(idx)
    out = np.zeros((len(idx), 4))
    for start in range(0, len(idx), chunk):
        part = idx[start : start + chunk]
        out[start : start + len(part)] = forward(samples.batch(part), weights).z
    return out
