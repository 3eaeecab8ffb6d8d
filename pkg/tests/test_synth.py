import numpy as np
import pytest

from aadlab.correlation import pearson
from aadlab.errors import ConfigError
from aadlab.synth import (
    SynthConfig,
    forward_model,
    gen_dataset,
    gen_envelope,
    gen_trf,
    gen_trial,
    neural_response,
    scalp_noise,
    synth_bundle,
)
from aadlab.train import TrainConfig

from .pipeline import held_out_records, summary

SMALL = dict(n_trials=4, trial_seconds=20)


class TestEnvelope:
    def test_independent_streams_weakly_correlated(self):
        rs = [pearson(gen_envelope(60, 128, (1, 9), seed=[s, 0]).samples,
                      gen_envelope(60, 128, (1, 9), seed=[s, 1]).samples) for s in range(20)]
        assert max(abs(r) for r in rs) < 0.2

    def test_fully_shared_identical(self):
        shared = gen_envelope(10, 128, (1, 9), seed=99)
        a = gen_envelope(10, 128, (1, 9), shared, 1.0, seed=1)
        b = gen_envelope(10, 128, (1, 9), shared, 1.0, seed=2)
        assert np.array_equal(a.samples, b.samples)
        assert pearson(a.samples, b.samples) == 1.0

    def test_nonnegative_unit_variance(self):
        e = gen_envelope(10, 128, (1, 9), seed=3).samples
        assert e.min() >= 0 and np.ptp(e) > 0
        assert e.std() == pytest.approx(1.0, abs=1e-12)

    def test_shared_fraction_monotone(self):
        means = []
        for f in (0.0, 0.3, 0.6, 0.9):
            rs = []
            for s in range(20):
                shared = gen_envelope(30, 128, (1, 9), seed=[s, 9])
                a = gen_envelope(30, 128, (1, 9), shared, f, seed=[s, 0])
                b = gen_envelope(30, 128, (1, 9), shared, f, seed=[s, 1])
                rs.append(pearson(a.samples, b.samples))
            means.append(np.mean(rs))
        assert all(np.diff(means) > 0)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            gen_envelope(10, 128, (9, 1))
        with pytest.raises(ConfigError):
            gen_envelope(1, 128, (1, 9))


class TestTrf:
    def test_support(self):
        k = gen_trf(16, 128, seed=0)
        assert k.shape == (16, int(0.4 * 128) + 1)
        assert np.all(k[:, 0] == 0) and np.all(k[:, -1] == 0)
        assert np.allclose(np.abs(k).max(axis=1), 1.0)

    def test_deterministic(self):
        assert np.array_equal(gen_trf(8, 128, seed=5), gen_trf(8, 128, seed=5))

    def test_channels_differ(self):
        k = gen_trf(16, 128, seed=1)
        diffs = [np.abs(k[i] - k[j]).max() > 0.01 for i in range(16) for j in range(i + 1, 16)]
        assert np.mean(diffs) >= 0.9

    def test_latency_peaks(self):
        # energy concentrated between 50 and 300 ms
        k = gen_trf(32, 128, seed=2)
        t = np.arange(k.shape[1]) / 128
        inside = (t >= 0.05) & (t <= 0.3)
        assert np.sum(k[:, inside] ** 2) > 0.8 * np.sum(k ** 2)


class TestTrial:
    def test_alternating_attention_and_balance(self):
        trials = gen_dataset(SynthConfig(n_trials=8, trial_seconds=5))
        assert [t.envelopes.attended_index for t in trials] == [0, 1] * 4
        assert [t.trial_id for t in trials] == [f"synth-{i:03d}" for i in range(8)]

    def test_deterministic(self):
        cfg = SynthConfig(**SMALL)
        a, b = synth_bundle(cfg), synth_bundle(cfg)
        for ta, tb in zip(a.trials, b.trials):
            assert ta.eeg.tobytes() == tb.eeg.tobytes()
            assert ta.envelopes.tobytes() == tb.envelopes.tobytes()

    def test_shapes(self):
        t = gen_trial(SynthConfig(**SMALL, n_channels=5, n_speakers=3), 0)
        assert t.eeg.data.shape == (20 * 128, 5)
        assert t.envelopes.streams.shape == (20 * 128, 3)

    @pytest.mark.parametrize("snr", [-10.0, 0.0, 7.5])
    def test_snr_definition(self, snr):
        noisy = SynthConfig(**SMALL, snr_db=snr)
        clean = SynthConfig(**SMALL, snr_db=None)
        t_noisy, t_clean = gen_trial(noisy, 1), gen_trial(clean, 1)
        noise = t_noisy.eeg.data - t_clean.eeg.data
        trf_a = t_clean.truth["trf_attended"]
        att = neural_response(t_clean.envelopes.attended, trf_a)
        measured = 10 * np.log10(np.mean(att ** 2) / np.mean(noise ** 2))
        assert measured == pytest.approx(snr, abs=1e-9)

    def test_noise_unit_power(self):
        cfg = SynthConfig(**SMALL)
        n = scalp_noise(cfg, 0, gen_trf(cfg.n_channels, 128, seed=0))
        assert np.mean(n ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_forward_linearity(self):
        rng = np.random.default_rng(0)
        trf_a, trf_u = gen_trf(6, 128, seed=0), gen_trf(6, 128, seed=1)
        e1, e2 = rng.random((2, 500, 2))
        y12, _ = forward_model(e1 + e2, 0, trf_a, trf_u, 0.7)
        y1, _ = forward_model(e1, 0, trf_a, trf_u, 0.7)
        y2, _ = forward_model(e2, 0, trf_a, trf_u, 0.7)
        assert np.max(np.abs(y12 - (y1 + y2))) < 1e-9

    def test_unattended_gain_zero_removes_stream(self):
        cfg = SynthConfig(**SMALL, snr_db=None, unattended_gain=0.0)
        t = gen_trial(cfg, 0)
        att = neural_response(t.envelopes.attended, t.truth["trf_attended"])
        assert np.max(np.abs(t.eeg.data - att)) < 1e-12

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            SynthConfig(shared_fraction=1.5)
        with pytest.raises(ConfigError):
            SynthConfig(n_speakers=1)
        with pytest.raises(ConfigError):
            SynthConfig(envelope_band_hz=(1, 80))


def test_high_snr_sanity_run():
    cfg = SynthConfig(n_trials=4, trial_seconds=60, snr_db=60, unattended_gain=0.0)
    recs = held_out_records(cfg, TrainConfig(max_epochs=50), fold_limit=1)
    assert summary(recs[0])["rho_a"] > 0.9


def test_delta_increases_with_snr():
    means = {}
    for snr in (-10.0, 10.0):
        deltas = []
        for seed in range(5):
            cfg = SynthConfig(n_trials=4, trial_seconds=60, snr_db=snr, seed=seed)
            recs = held_out_records(cfg, TrainConfig(seed=seed), fold_limit=2)
            deltas.append(summary(sum(recs, []))["delta"])
        means[snr] = np.mean(deltas)
    assert means[10.0] > means[-10.0]
