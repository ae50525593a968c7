"""End-to-end stages: generate, pretrain, train, evaluate, explain, fidelity.

Every stage reads its inputs from and writes its outputs to the directories
named by a :class:`RunConfig`, so stages can run as separate processes.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from . import report
from .config import RunConfig
from .explain import ExplanationMethod, explain_samples, impact_report
from .fidelity import RANDOM, FidelityEvaluator
from .neuralcore import (
    SampleSet,
    Standardizer,
    compute_metrics,
    finetune,
    load_checkpoint,
    predict_samples,
    pretrain,
    save_checkpoint,
)
from .synthdata import load_dataset, make_dataset, save_dataset

log = logging.getLogger(__name__)

TRAIN_FILE = "train.csv"
TEST_FILE = "test.csv"
PRETRAIN_CKPT = "pretrain.ckpt"
MODEL_CKPT = "model.ckpt"


class PipelineError(RuntimeError):
    pass


def _mkdir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def generate(cfg: RunConfig):
    spec = cfg.field_spec()
    train = make_dataset(spec, cfg.train_times, "train", cfg.counts())
    test = make_dataset(spec, cfg.test_times, "test", cfg.counts())
    out = _mkdir(cfg.data_dir)
    save_dataset(train, out / TRAIN_FILE)
    save_dataset(test, out / TEST_FILE)
    return train, test


def load_data(cfg: RunConfig):
    paths = [cfg.data_dir / TRAIN_FILE, cfg.data_dir / TEST_FILE]
    for p in paths:
        if not p.exists():
            raise PipelineError(f"missing dataset {p}; run the gen stage first")
    return tuple(load_dataset(p) for p in paths)


class Run:
    """Lazily built datasets and sample sets for one configuration."""

    def __init__(self, cfg: RunConfig, datasets=None):
        self.cfg = cfg
        self._datasets = datasets
        self._samples = {}
        self._standardizer = None

    @property
    def datasets(self):
        if self._datasets is None:
            self._datasets = load_data(self.cfg)
        return self._datasets

    @property
    def standardizer(self) -> Standardizer:
        if self._standardizer is None:
            self._standardizer = Standardizer.fit(self.datasets[0])
        return self._standardizer

    def samples(self, split: str) -> SampleSet:
        if split not in self._samples:
            ds = self.datasets[0 if split == "train" else 1]
            self._samples[split] = SampleSet(ds, self.standardizer, self.cfg.k, self.cfg.radius_km)
        return self._samples[split]

    def _path(self, name) -> Path:
        return _mkdir(self.cfg.out_dir) / name

    # stages

    def pretrain(self):
        history = []
        enc = pretrain(self.samples("train"), self.cfg.model_config(), history)
        save_checkpoint(self._path(PRETRAIN_CKPT), enc)
        report.write_loss_csv(self._path("pretrain_loss.csv"), history, self.cfg.seed)
        return enc

    def train(self, use_pretrained: bool = True):
        encoder = None
        if use_pretrained:
            path = self.cfg.out_dir / PRETRAIN_CKPT
            if not path.exists():
                raise PipelineError(f"missing {path}; run pretrain first or pass --no-pretrain")
            encoder, _ = load_checkpoint(path)
        history = []
        weights = finetune(self.samples("train"), self.cfg.model_config(), encoder, history)
        st = self.standardizer
        save_checkpoint(self._path(MODEL_CKPT), weights, {"std_mean": st.mean, "std_std": st.std})
        report.write_loss_csv(self._path("finetune_loss.csv"), history, self.cfg.seed)
        return weights

    def load_model(self):
        path = self.cfg.out_dir / MODEL_CKPT
        if not path.exists():
            raise PipelineError(f"missing {path}; run train first")
        weights, extra = load_checkpoint(path)
        if "std_mean" in extra:
            st = Standardizer(extra["std_mean"], extra["std_std"])
            if self._standardizer is not None and not (
                np.array_equal(st.mean, self._standardizer.mean) and np.array_equal(st.std, self._standardizer.std)
            ):
                raise PipelineError("checkpoint standardizer does not match the loaded training split")
            self._standardizer = st
        return weights

    def evaluate(self, weights=None):
        weights = self.load_model() if weights is None else weights
        test = self.samples("test")
        metrics = compute_metrics(predict_samples(weights, test), test.targets)
        report.write_metrics_csv(_mkdir(self.cfg.reports) / "metrics.csv", metrics, self.cfg.seed)
        return metrics

    def explain(self, method=None, weights=None):
        method = ExplanationMethod.parse(method or self.cfg.method)
        weights = self.load_model() if weights is None else weights
        scores = explain_samples(method, weights, self.samples("test"))
        rep = impact_report(method, weights, self.samples("test"), scores)
        out = _mkdir(self.cfg.reports)
        report.write_impact_csv(out / f"impact_{method.value}.csv", rep, self.cfg.seed)
        report.write_timeseries_csv(out / f"impact_timeseries_{method.value}.csv", rep, self.cfg.seed)
        report.plot_impact_svg(out / f"impact_{method.value}.svg", rep)
        report.plot_timeseries_svg(out / f"impact_timeseries_{method.value}.svg", rep)
        return rep

    def fidelity(self, fractions=None, weights=None):
        fractions = tuple(self.cfg.fractions if fractions is None else fractions)
        weights = self.load_model() if weights is None else weights
        ev = FidelityEvaluator(weights, self.samples("test"), self.cfg.seed)
        results = [ev.result(m, f) for m in ExplanationMethod for f in fractions]
        baseline = [ev.result(RANDOM, f) for f in fractions]
        out = _mkdir(self.cfg.reports)
        report.write_fidelity_csv(out / "fidelity.csv", results, self.cfg.seed)
        report.write_fidelity_csv(out / "fidelity_random.csv", baseline, self.cfg.seed)
        return results, baseline


def run_all(cfg: RunConfig, use_pretrained: bool = True, methods=tuple(ExplanationMethod), fidelity: bool = False):
    """Every stage in order; returns the fine-tuned weights and test metrics."""
    run = Run(cfg, generate(cfg))
    if use_pretrained:
        run.pretrain()
    weights = run.train(use_pretrained)
    metrics = run.evaluate(weights)
    for m in methods:
        run.explain(m, weights)
    if fidelity:
        run.fidelity(weights=weights)
    return weights, metrics
