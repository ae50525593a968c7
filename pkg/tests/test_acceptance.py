"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run it alone with ``pytest tests/test_acceptance.py -s`` (or
``python tests/test_acceptance.py``) to see the summary lines.
"""

import filecmp
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import make_node  # noqa: E402
from helpers import random_adjacency, random_batch, random_model  # noqa: E402
from oracles import bfs_ball, brute_force_edges, central_difference, rel_error  # noqa: E402
from obsimpact.config import RunConfig  # noqa: E402
from obsimpact.explain import ExplanationMethod, lrp_relevance  # noqa: E402
from obsimpact.fidelity import RANDOM, FidelityEvaluator  # noqa: E402
from obsimpact.geograph import NodeKind, build_graph, khop_subgraph, normalized_adjacency  # noqa: E402
from obsimpact.neuralcore import ModelConfig, ModelWeights, compute_metrics, forward, init_weights, single_batch  # noqa: E402
from obsimpact.neuralcore.model import KIND_COLUMNS, KINDS, reg_loss_and_grads, ssl_loss_and_grads  # noqa: E402
from obsimpact.pipeline import Run, generate, run_all  # noqa: E402

pytestmark = pytest.mark.acceptance


def emit(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    capman = getattr(emit, "capsys", None)
    if capman is not None:
        with capman.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


@pytest.fixture(autouse=True)
def _uncaptured(capsys):
    emit.capsys = capsys
    yield
    emit.capsys = None


# 1. gradient oracle


def criterion_1(n_models=24):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(n_models):
        rng = np.random.default_rng(1000 + seed)
        w = random_model(rng, d=int(rng.integers(2, 9)), reconstruction=True, psi=0.01)
        b = random_batch(rng, int(rng.integers(1, 3)), max_nodes=6)
        reg = ModelWeights(w.without("recon.").params, w.config)
        ssl = ModelWeights(w.without("head.").params, w.config)
        for fn, weights in ((reg_loss_and_grads, reg), (ssl_loss_and_grads, ssl)):
            _, grads = fn(b, weights, 0.01)
            for name, arr in weights.params.items():
                fd = central_difference(lambda: fn(b, weights, 0.01)[0], arr)
                worst = max(worst, rel_error(grads.get(name, np.zeros_like(arr)), fd, floor=1e-6))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 60
    return emit(1, ok, f"{n_models} models, worst relative error {worst:.2e} (< 1e-4), {elapsed:.1f}s (< 60s)")


def test_criterion_1_gradient_oracle():
    assert criterion_1()


# 2. graph oracles


def criterion_2(n_instances=50):
    t0 = time.perf_counter()
    bad = 0
    for seed in range(n_instances):
        rng = np.random.default_rng(2000 + seed)
        n = int(rng.integers(2, 301))
        span = rng.uniform(0.5, 5.0)
        lat = rng.uniform(35.0, 35.0 + span, n)
        lon = rng.uniform(125.0, 125.0 + span, n)
        ids = rng.permutation(5 * n)[:n].tolist()
        kinds = [NodeKind.NWP if rng.random() < 0.6 else NodeKind.SONDE for _ in range(n)]
        kinds[0] = NodeKind.NWP
        radius = float(rng.uniform(20.0, 80.0))
        g = build_graph([make_node(i, a, b, k) for i, a, b, k in zip(ids, lat, lon, kinds)], radius)
        edges = brute_force_edges(list(zip(lat, lon)), ids, radius)
        if set(g.edges) != edges or len(g.edges) != len(edges):
            bad += 1
            continue
        edge_set = set(g.edges)
        centres = [i for i, k in zip(ids, kinds) if k is NodeKind.NWP]
        for c in rng.choice(centres, min(5, len(centres)), replace=False).tolist():
            k = int(rng.integers(1, 4))
            s = khop_subgraph(g, c, k)
            ball = bfs_ball(edges, c, k)
            order = sorted(ball, key=lambda v: (ball[v], v))
            sub = s.node_ids.tolist()
            expect = np.array([[int((min(a, b), max(a, b)) in edge_set) for b in sub] for a in sub])
            if sub != order or not np.array_equal(s.adjacency, expect):
                bad += 1
                break
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 60
    return emit(2, ok, f"{n_instances} instances (<= 300 nodes), {bad} mismatches, {elapsed:.1f}s (< 60s)")


def test_criterion_2_graph_oracles():
    assert criterion_2()


# 3. LRP conservation


def _positive_case(rng):
    d = int(rng.integers(2, 9))
    w = init_weights(ModelConfig(d=d, n_gcn_layers=int(rng.integers(1, 4)), mlp_hidden=(int(rng.integers(2, 7)),)))
    for name in w.names():
        w.params[name] = rng.uniform(0.1, 1.0, w[name].shape) if name.endswith(".W") else np.zeros(w[name].shape)
    b = random_batch(rng, int(rng.integers(1, 4)))
    b.x = np.abs(b.x) + 0.1 * (b.x != 0)
    return w, b


def criterion_3(n_models=30):
    worst = {0.0: 0.0, 1e-9: 0.0}
    for seed in range(n_models):
        rng = np.random.default_rng(3000 + seed)
        w, b = _positive_case(rng)
        z = forward(b, w).z
        for eps in worst:
            rel = lrp_relevance(w, b, eps=eps)
            for s in range(b.n_sub):
                total_in = rel[:, b.seg == s].sum()
                total_out = z[s].sum()
                worst[eps] = max(worst[eps], abs(total_in - total_out) / abs(total_out))
    ok = worst[0.0] <= 1e-6 and worst[1e-9] <= 1e-4
    return emit(3, ok, f"{n_models} positive models, eps=0 rel {worst[0.0]:.1e} (<= 1e-6), eps=1e-9 rel {worst[1e-9]:.1e} (<= 1e-4)")


def test_criterion_3_lrp_conservation():
    assert criterion_3()


# 4 + 5. ablation and fidelity on the default seeded dataset


class Ablation:
    def __init__(self, out_dir):
        self.cfg = RunConfig(out=str(out_dir))
        t0 = time.perf_counter()
        self.run = Run(self.cfg, generate(self.cfg))
        self.run.pretrain()
        self.pretrained = self.run.train(use_pretrained=True)
        self.vanilla = self.run.train(use_pretrained=False)
        self.metrics = {name: self.run.evaluate(w) for name, w in (("vanilla", self.vanilla), ("pretrained", self.pretrained))}
        self.elapsed = time.perf_counter() - t0


@pytest.fixture(scope="module")
def ablation(tmp_path_factory):
    return Ablation(tmp_path_factory.mktemp("ablation"))


def criterion_4(ab):
    pre = ab.metrics["pretrained"].mean_r2
    van = ab.metrics["vanilla"].mean_r2
    n_nwp = len(ab.run.samples("test")) // ab.cfg.test_steps
    gap = pre - van
    ok = gap >= 0.02
    return emit(
        4,
        ok,
        f"seed {ab.cfg.seed}, {n_nwp} NWP nodes/step: pretrained mean R2 {pre:.4f}, vanilla {van:.4f}, "
        f"gap {gap:+.4f} (>= 0.02), {ab.elapsed:.0f}s",
    )


@pytest.mark.slow
def test_criterion_4_ablation(ablation):
    assert criterion_4(ablation)


def criterion_5(ab):
    ev = FidelityEvaluator(ab.pretrained, ab.run.samples("test"), ab.cfg.seed)
    rand = ev.fidelity(RANDOM, 0.2, top=True)
    ok, parts = True, []
    for m in ExplanationMethod:
        f10, f20 = ev.fidelity(m, 0.1, True), ev.fidelity(m, 0.2, True)
        ok &= f20 >= f10 and f20 > rand
        parts.append(f"{m.value} {f10:.4f}->{f20:.4f}")
    return emit(5, ok, f"Fidelity+ 10%->20%: {', '.join(parts)}; random 20% {rand:.4f}")


@pytest.mark.slow
def test_criterion_5_fidelity(ablation):
    assert criterion_5(ablation)


# 6. permutation equivariance


def criterion_6(n_subgraphs=100):
    worst = 0.0
    for seed in range(n_subgraphs):
        rng = np.random.default_rng(6000 + seed)
        w = random_model(rng)
        n = int(rng.integers(1, 13))
        codes = rng.integers(0, len(KINDS), n)
        codes[0] = 0
        x = np.zeros((n, 6))
        for r, c in enumerate(codes):
            x[r, KIND_COLUMNS[KINDS[c]]] = rng.normal(size=len(KIND_COLUMNS[KINDS[c]]))
        a = random_adjacency(rng, n, p=rng.uniform(0.1, 0.9))
        perm = rng.permutation(n)
        z = forward(single_batch(normalized_adjacency(a), x, codes), w).z
        zp = forward(single_batch(normalized_adjacency(a[np.ix_(perm, perm)]), x[perm], codes[perm]), w).z
        worst = max(worst, float(np.max(np.abs(z - zp))))
    ok = worst < 1e-10
    return emit(6, ok, f"{n_subgraphs} subgraphs, max |dZ| {worst:.1e} (< 1e-10)")


def test_criterion_6_permutation_equivariance():
    assert criterion_6()


# 7. metric unbiasedness


def criterion_7(n_cases=200):
    worst = 0.0
    for seed in range(n_cases):
        rng = np.random.default_rng(7000 + seed)
        n = int(rng.integers(2, 500))
        y = rng.normal(size=(n, 4)) * rng.uniform(0.01, 100, 4) + rng.normal(size=4)
        r = rng.normal(size=(n, 4)) * rng.uniform(0.01, 2, 4)
        r -= r.mean(axis=0)
        for v in compute_metrics(y + r, y).variables:
            worst = max(worst, abs(v.r2 - v.explained_variance))
    ok = worst <= 1e-9
    return emit(7, ok, f"{n_cases} zero-mean-residual cases, max |R2 - EV| {worst:.1e} (<= 1e-9)")


def test_criterion_7_unbiased_metrics():
    assert criterion_7()


# 8. reproducibility


REPRO_CFG = dict(lat_min=30.0, lat_max=36.0, lon_min=120.0, lon_max=128.0, train_steps=6, test_steps=4)


def criterion_8(tmp):
    dirs = []
    for name in ("run_a", "run_b"):
        cfg = RunConfig(out=str(tmp / name), **REPRO_CFG)
        run_all(cfg)
        dirs.append(Path(cfg.out))
    names = ["metrics.csv"] + [f"impact{s}_{m.value}.csv" for m in ExplanationMethod for s in ("", "_timeseries")]
    same = [filecmp.cmp(dirs[0] / f, dirs[1] / f, shallow=False) for f in names]
    ok = all(same)
    return emit(8, ok, f"two full pipeline runs, {sum(same)}/{len(names)} metric and impact CSVs byte-identical")


@pytest.mark.slow
def test_criterion_8_reproducibility(tmp_path):
    assert criterion_8(tmp_path)


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        results = [criterion_1(), criterion_2(), criterion_3()]
        ab = Ablation(d / "ablation")
        results += [criterion_4(ab), criterion_5(ab), criterion_6(), criterion_7(), criterion_8(d)]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
