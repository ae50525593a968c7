"""CSV tables and SVG charts for metrics, impacts and fidelity."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .explain import ImpactReport  # noqa: E402

plt.rcParams["svg.hashsalt"] = "obs-impact"


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def _write(path, header, rows, seed=None):
    lines = [] if seed is None else [f"# seed={seed}"]
    lines.append(header)
    lines.extend(",".join(r) for r in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_metrics_csv(path, metrics, seed=None):
    rows = [(name, _num(a), _num(b), _num(c), _num(d)) for name, a, b, c, d in metrics.rows()]
    _write(path, "variable,rmse,mae,r2,explained_variance", rows, seed)


def write_impact_csv(path, report: ImpactReport, seed=None):
    norm = ImpactReport.normalized(report.by_kind)
    rows = [(k.value, _num(v), _num(norm[k])) for k, v in report.by_kind.items()]
    _write(path, "kind,mean_impact,normalized_impact", rows, seed)


def write_timeseries_csv(path, report: ImpactReport, seed=None):
    rows = []
    for t, by_kind in report.timeseries.items():
        norm = ImpactReport.normalized(by_kind)
        rows.extend((str(t), k.value, _num(v), _num(norm[k])) for k, v in by_kind.items())
    _write(path, "time,kind,mean_impact,normalized_impact", rows, seed)


def write_fidelity_csv(path, results, seed=None):
    rows = [(r.method, _num(r.fraction), _num(r.fidelity_plus), _num(r.fidelity_minus)) for r in results]
    _write(path, "method,fraction,fidelity_plus,fidelity_minus", rows, seed)


def write_loss_csv(path, history, seed=None):
    _write(path, "epoch,loss", [(str(e), _num(v)) for e, v in history], seed)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_impact_svg(path, report: ImpactReport):
    kinds = list(report.by_kind)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar([k.value for k in kinds], [report.by_kind[k] for k in kinds], color="tab:blue")
    ax.set_ylabel("mean impact")
    ax.set_title(f"Averaged impact per observation type ({report.method.value})")
    ax.tick_params(axis="x", rotation=45)
    _save(fig, path)


def plot_timeseries_svg(path, report: ImpactReport):
    times = list(report.timeseries)
    fig, ax = plt.subplots(figsize=(8, 4))
    for k in report.by_kind:
        ax.plot(times, [report.timeseries[t][k] for t in times], label=k.value, lw=1)
    ax.set_xlabel("time step")
    ax.set_ylabel("mean impact")
    ax.set_title(f"Observation impact over time ({report.method.value})")
    ax.legend(ncol=4, fontsize=7)
    _save(fig, path)
