from collections import namedtuple

import numpy as np
import pytest

from aadlab.correlation import EnvelopeSet, correlate_all
from aadlab.dataset import WindowSpec, normalize, segment
from aadlab.decoder import DecoderConfig, forward_batch
from aadlab.errors import (
    ConfigError,
    DataQualityError,
    InsufficientTrialsError,
    NonFiniteGradientError,
)
from aadlab.synth import SynthConfig, synth_bundle
from aadlab.train import (
    EarlyStopping,
    OptimizerState,
    TrainConfig,
    TrainHistory,
    adamw_step,
    loto_folds,
    train_model,
)

from .oracles import adam_reference

Seg = namedtuple("Seg", "eeg env")


class TestAdamW:
    def test_zero_grad_zero_decay(self):
        cfg = TrainConfig(weight_decay=0.0)
        theta = np.array([1.0, -2.0, 3.0])
        new, st = adamw_step(theta, np.zeros(3), OptimizerState.zeros(3), cfg)
        assert np.array_equal(new, theta) and st.step_count == 1

    def test_zero_grad_shrinks_by_decay(self):
        cfg = TrainConfig(learning_rate=1e-2, weight_decay=0.5)
        theta = np.array([1.0, -2.0, 3.0])
        new, _ = adamw_step(theta, np.zeros(3), OptimizerState.zeros(3), cfg)
        assert np.array_equal(new, theta * (1 - 1e-2 * 0.5))

    def test_first_step_hand_trace(self):
        # from zero moments, m_hat = g and v_hat = g^2, so the step is -lr * g / (|g| + eps)
        cfg = TrainConfig(learning_rate=1e-3, weight_decay=0.0)
        g = np.array([0.5, -4.0, 1e-3])
        new, st = adamw_step(np.zeros(3), g, OptimizerState.zeros(3), cfg)
        assert np.allclose(new, -1e-3 * g / (np.abs(g) + 1e-8), rtol=0, atol=1e-12)
        assert np.allclose(st.first_moment, 0.1 * g, atol=1e-15)
        assert np.allclose(st.second_moment, 0.001 * g * g, atol=1e-15)

    @pytest.mark.parametrize("wd", [0.0, 5e-4])
    def test_straight_line_reference(self, wd):
        rng = np.random.default_rng(0)
        cfg = TrainConfig(weight_decay=wd)
        theta = rng.standard_normal(20)
        state = OptimizerState.zeros(20)
        ref_t, ref_m, ref_v = theta.copy(), np.zeros(20), np.zeros(20)
        for step in range(1, 8):
            g = rng.standard_normal(20)
            theta, state = adamw_step(theta, g, state, cfg)
            ref_t, ref_m, ref_v = adam_reference(ref_t, g, ref_m, ref_v, step, cfg.learning_rate,
                                                 cfg.beta1, cfg.beta2, cfg.epsilon, wd)
            assert np.array_equal(theta, ref_t)
        assert np.all(state.second_moment >= 0) and state.step_count == 7

    def test_nonfinite(self):
        with pytest.raises(NonFiniteGradientError):
            adamw_step(np.zeros(2), np.array([0.0, np.nan]), OptimizerState.zeros(2), TrainConfig())

    def test_config_checks(self):
        with pytest.raises(ConfigError):
            TrainConfig(patience=200, max_epochs=100)
        with pytest.raises(ValueError):
            TrainConfig(loss="neg_sum")
        assert TrainConfig(loss="neg_sum", experimental=True).loss == "neg_sum"


class TestEarlyStopping:
    def run(self, losses, patience=10):
        es = EarlyStopping(patience)
        for epoch, v in enumerate(losses, start=1):
            if es.update(epoch, v):
                return epoch, es.best_epoch
        return len(losses), es.best_epoch

    def test_strictly_decreasing_runs_all(self):
        assert self.run([1.0 / e for e in range(1, 101)]) == (100, 100)

    def test_constant_stops_at_eleven(self):
        assert self.run([0.5] * 100) == (11, 1)

    def test_improvement_resets(self):
        losses = [1.0] * 5 + [0.9] + [1.0] * 100
        assert self.run(losses) == (16, 6)


def toy_segments(rng, n, t=64, c=4, constant_env=False):
    out = []
    for _ in range(n):
        s = rng.standard_normal((t, 2))
        if constant_env:
            s[:, 0] = 1.0
        x = np.stack([s[:, 0] + 0.5 * rng.standard_normal(t) for _ in range(c)], axis=1)
        out.append(Seg(x, EnvelopeSet(s, 0)))
    return out


class TestTrainModel:
    cfg = DecoderConfig("linear_lagged", channels=4, lag_samples=4)

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        tr, va = toy_segments(rng, 20), toy_segments(rng, 5)
        tcfg = TrainConfig(max_epochs=15, patience=5, batch_size=6, learning_rate=1e-2)
        p1, h1 = train_model(self.cfg, tcfg, tr, va)
        p2, h2 = train_model(self.cfg, tcfg, tr, va)
        assert p1.values.tobytes() == p2.values.tobytes()
        assert h1.to_text() == h2.to_text()

    def test_best_checkpoint(self):
        rng = np.random.default_rng(1)
        tr, va = toy_segments(rng, 20), toy_segments(rng, 5)
        tcfg = TrainConfig(max_epochs=30, patience=5, batch_size=4, learning_rate=5e-2)
        p, h = train_model(self.cfg, tcfg, tr, va)
        vals = [r.val_loss for r in h.records]
        assert h.best_epoch == int(np.argmin(vals)) + 1
        assert h.best_epoch <= h.stopped_epoch <= 30
        # the returned parameters reproduce the best validation loss
        from aadlab.correlation import loss_pcc
        from aadlab.train import mean_loss
        x = np.stack([s.eeg for s in va])
        assert mean_loss(p, self.cfg, x, [s.env for s in va], loss_pcc) == min(vals)

    def test_learns_toy_problem(self):
        rng = np.random.default_rng(2)
        tr, va = toy_segments(rng, 40), toy_segments(rng, 5)
        p, _ = train_model(self.cfg, TrainConfig(max_epochs=20, batch_size=8, learning_rate=1e-2), tr, va)
        te = toy_segments(rng, 10)
        y = forward_batch(p, self.cfg, np.stack([s.eeg for s in te]))
        assert np.mean([correlate_all(r, s.env).rho_a for r, s in zip(y, te)]) > 0.8

    def test_data_quality_abort(self):
        rng = np.random.default_rng(3)
        tr = toy_segments(rng, 6, constant_env=True) + toy_segments(rng, 4)
        with pytest.raises(DataQualityError):
            train_model(self.cfg, TrainConfig(max_epochs=2, patience=1), tr, toy_segments(rng, 2))

    def test_minority_degenerate_excluded(self):
        rng = np.random.default_rng(4)
        tr = toy_segments(rng, 2, constant_env=True) + toy_segments(rng, 8)
        _, h = train_model(self.cfg, TrainConfig(max_epochs=2, patience=1), tr, toy_segments(rng, 2))
        assert h.n_excluded == 2

    def test_history_text_round_trip(self):
        rng = np.random.default_rng(5)
        _, h = train_model(self.cfg, TrainConfig(max_epochs=3, patience=2), toy_segments(rng, 5), toy_segments(rng, 2))
        back = TrainHistory.from_text(h.to_text())
        assert back == h


def test_noiseless_linear_reaches_095():
    b = synth_bundle(SynthConfig(n_trials=3, trial_seconds=60, snr_db=None))
    segs = normalize(segment(b, WindowSpec(2.0)))
    tr, va, te = (list(segs.select([f"synth-00{i}"])) for i in range(3))
    cfg = DecoderConfig("linear_lagged", channels=16)
    p, h = train_model(cfg, TrainConfig(), tr, va)
    assert h.stopped_epoch <= 100
    y = forward_batch(p, cfg, np.stack([s.eeg for s in te]))
    assert np.mean([correlate_all(r, s.env).rho_a for r, s in zip(y, te)]) > 0.95


class TestFolds:
    def test_eight_trials(self):
        ids = [f"t{i}" for i in range(8)]
        folds = loto_folds(ids, 4, seed=0)
        assert len(folds) == 4
        for f in folds:
            assert (len(f.test), len(f.val), len(f.train)) == (2, 1, 5)
            assert not (set(f.test) & set(f.val) or set(f.test) & set(f.train) or set(f.val) & set(f.train))
        tests = [t for f in folds for t in f.test]
        assert sorted(tests) == sorted(ids)

    def test_four_trials(self):
        folds = loto_folds(list("abcd"), 4, seed=3)
        for f in folds:
            assert (len(f.test), len(f.val), len(f.train)) == (1, 1, 2)
            assert f.val[0] not in f.test
        assert sorted(t for f in folds for t in f.test) == list("abcd")

    def test_seeded(self):
        ids = list(range(10))
        assert loto_folds(ids, 4, 1) == loto_folds(ids, 4, 1)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_too_few(self, n):
        with pytest.raises(InsufficientTrialsError):
            loto_folds(list(range(n)), 4)

    def test_partition_many_sizes(self):
        for n in range(4, 30):
            folds = loto_folds(list(range(n)), 4, seed=n)
            tests = sorted(t for f in folds for t in f.test)
            assert tests == list(range(n))
            for f in folds:
                assert sorted(f.train + f.val + f.test) == list(range(n))
