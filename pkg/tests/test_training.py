import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_model
from obsimpact.neuralcore import (
    CheckpointError,
    ModelConfig,
    TrainingError,
    compute_metrics,
    finetune,
    init_encoder,
    init_weights,
    load_checkpoint,
    pretrain,
    save_checkpoint,
)
from obsimpact.neuralcore.model import reg_loss_and_grads

CFG = ModelConfig(d=8, mlp_hidden=(8,), lr=3e-3, batch_size=16, seed=5)


class TestTraining:
    def test_zero_epochs_returns_initialisation(self, tiny_samples):
        cfg = CFG.replace(epochs_finetune=0)
        w = finetune(tiny_samples[0], cfg)
        assert w.equals(init_weights(cfg))

    def test_zero_pretrain_epochs(self, tiny_samples):
        cfg = CFG.replace(epochs_pretrain=0)
        assert pretrain(tiny_samples[0], cfg).equals(init_encoder(cfg))

    def test_loss_decreases(self, tiny_samples):
        cfg = CFG.replace(epochs_finetune=6)
        history = []
        finetune(tiny_samples[0], cfg, history=history)
        assert history[-1][1] < history[0][1]

    def test_pretrain_loss_decreases(self, tiny_samples):
        history = []
        enc = pretrain(tiny_samples[0], CFG.replace(epochs_pretrain=4), history)
        assert history[-1][1] < history[0][1]
        assert not enc.names("recon.") and not enc.names("head.")

    def test_same_seed_bit_identical(self, tiny_samples):
        cfg = CFG.replace(epochs_pretrain=1, epochs_finetune=2)
        runs = [finetune(tiny_samples[0], cfg, pretrain(tiny_samples[0], cfg)) for _ in range(2)]
        assert runs[0].equals(runs[1])

    def test_different_seed_differs(self, tiny_samples):
        a = finetune(tiny_samples[0], CFG.replace(epochs_finetune=1))
        b = finetune(tiny_samples[0], CFG.replace(epochs_finetune=1, seed=6))
        assert not a.equals(b)

    def test_nan_input_raises(self, tiny_data):
        from obsimpact.neuralcore import SampleSet, Standardizer

        s = SampleSet(tiny_data[0], Standardizer.fit(tiny_data[0]))
        s.table.x[3, 0] = np.nan
        with pytest.raises(TrainingError, match="non-finite"):
            finetune(s, CFG.replace(epochs_finetune=1, batch_size=10_000))

    def test_encoder_shape_mismatch(self, tiny_samples):
        enc = init_encoder(CFG.replace(d=4))
        with pytest.raises(ValueError):
            finetune(tiny_samples[0], CFG, enc)

    def test_penalty_gradient_shrinks_weights(self, rng):
        w = random_model(rng, psi=0.0)
        from helpers import random_batch

        b = random_batch(rng, 2)
        _, g0 = reg_loss_and_grads(b, w, 0.0)
        _, g1 = reg_loss_and_grads(b, w, 0.5)
        for name in w.names("gcn."):
            np.testing.assert_allclose(g1[name] - g0[name], 2 * 0.5 * w[name], atol=1e-12)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        w = random_model(rng, reconstruction=True)
        extra = {"std_mean": rng.normal(size=6), "std_std": rng.random(6)}
        save_checkpoint(tmp_path / "m.ckpt", w, extra)
        w2, extra2 = load_checkpoint(tmp_path / "m.ckpt")
        assert w2.equals(w) and w2.config == w.config
        for k in extra:
            np.testing.assert_array_equal(extra2[k], extra[k])

    def test_bytes_deterministic(self, tmp_path, rng):
        w = random_model(rng)
        save_checkpoint(tmp_path / "a", w)
        save_checkpoint(tmp_path / "b", w)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_little_endian_header(self, tmp_path, rng):
        w = random_model(rng)
        save_checkpoint(tmp_path / "m", w)
        raw = (tmp_path / "m").read_bytes()
        assert raw[:5] == b"OBSW1"
        (n,) = struct.unpack("<I", raw[5:9])
        assert raw[9 : 9 + n].decode().startswith("d=")

    def test_bad_magic(self, tmp_path, rng):
        save_checkpoint(tmp_path / "m", random_model(rng))
        raw = bytearray((tmp_path / "m").read_bytes())
        raw[0] = ord("X")
        (tmp_path / "m").write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="not an OBSW1"):
            load_checkpoint(tmp_path / "m")

    def test_truncated(self, tmp_path, rng):
        save_checkpoint(tmp_path / "m", random_model(rng))
        raw = (tmp_path / "m").read_bytes()
        (tmp_path / "m").write_bytes(raw[:-3])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(tmp_path / "m")

    def test_trailing_bytes(self, tmp_path, rng):
        save_checkpoint(tmp_path / "m", random_model(rng))
        with open(tmp_path / "m", "ab") as fh:
            fh.write(b"\0")
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(tmp_path / "m")

    def test_shape_mismatch(self, tmp_path):
        w = init_weights(ModelConfig(d=4))
        w.params["gcn.0.W"] = np.zeros((3, 3))
        save_checkpoint(tmp_path / "m", w)
        with pytest.raises(CheckpointError, match="shape"):
            load_checkpoint(tmp_path / "m")


class TestMetrics:
    def test_identical(self, rng):
        y = rng.normal(size=(50, 4))
        m = compute_metrics(y, y)
        for v in m.variables:
            assert (v.rmse, v.mae, v.r2, v.explained_variance) == (0.0, 0.0, 1.0, 1.0)

    def test_constant_offset_oracle(self, rng):
        y = rng.normal(size=(40, 4))
        c = np.array([0.5, -1.0, 2.0, 0.1])
        m = compute_metrics(y + c, y)
        for j, v in enumerate(m.variables):
            ss_tot = sum((a - y[:, j].mean()) ** 2 for a in y[:, j])
            assert v.rmse == pytest.approx(abs(c[j]))
            assert v.mae == pytest.approx(abs(c[j]))
            assert v.r2 == pytest.approx(1 - 40 * c[j] ** 2 / ss_tot)
            assert v.explained_variance == pytest.approx(1.0)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(2, 200))
    def test_zero_mean_residual_r2_equals_ev(self, seed, n):
        rng = np.random.default_rng(seed)
        y = rng.normal(size=(n, 4)) * rng.uniform(0.1, 10, 4)
        r = rng.normal(size=(n, 4))
        r -= r.mean(axis=0)
        m = compute_metrics(y + r, y)
        for v in m.variables:
            assert abs(v.r2 - v.explained_variance) <= 1e-9

    def test_zero_variance_is_none(self):
        y = np.ones((5, 1))
        m = compute_metrics(y + 0.1, y, names=("U",))
        assert m["U"].r2 is None and m["U"].explained_variance is None
        assert m["U"].rmse == pytest.approx(0.1)
        with pytest.raises(ValueError):
            m.mean_r2

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            compute_metrics(np.zeros((1, 4)), np.zeros((1, 4)))
        with pytest.raises(ValueError):
            compute_metrics(np.zeros((3, 4)), np.zeros((3, 3)))
