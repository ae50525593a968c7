from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OUTPUT_NAMES = ("U", "V", "T", "Q")


@dataclass(frozen=True)
class VariableMetrics:
    name: str
    rmse: float
    mae: float
    r2: float | None  # None when the labels have zero variance
    explained_variance: float | None


@dataclass(frozen=True)
class Metrics:
    variables: tuple

    def __getitem__(self, name) -> VariableMetrics:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def mean_r2(self) -> float:
        vals = [v.r2 for v in self.variables]
        if any(v is None for v in vals):
            raise ValueError("R^2 undefined for a zero-variance variable")
        return float(np.mean(vals))

    def rows(self):
        for v in self.variables:
            yield v.name, v.rmse, v.mae, v.r2, v.explained_variance


def compute_metrics(preds, labels, names=OUTPUT_NAMES) -> Metrics:
    """RMSE, MAE, R^2 and explained variance per output column.

    R^2 uses the total sum of squares, explained variance the variance of the
    residual, so the two agree exactly when the residuals have zero mean.
    """
    preds = np.asarray(preds, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if preds.ndim == 1:
        preds, labels = preds[:, None], labels[:, None]
    if preds.shape != labels.shape:
        raise ValueError(f"shape mismatch {preds.shape} vs {labels.shape}")
    if preds.shape[0] < 2:
        raise ValueError("need at least two samples")
    out = []
    for c in range(preds.shape[1]):
        y, p = labels[:, c], preds[:, c]
        resid = y - p
        var_y = np.var(y)
        if var_y == 0:
            r2 = ev = None
        else:
            r2 = float(1.0 - np.sum(resid**2) / np.sum((y - y.mean()) ** 2))
            ev = float(1.0 - np.var(resid) / var_y)
        out.append(
            VariableMetrics(
                names[c] if c < len(names) else str(c),
                float(np.sqrt(np.mean(resid**2))),
                float(np.mean(np.abs(resid))),
                r2,
                ev,
            )
        )
    return Metrics(tuple(out))


def mean_r2(preds, labels) -> float:
    return compute_metrics(preds, labels).mean_r2
