"""Synthetic multi-speaker EEG generator.

Each speaker's envelope is rectified band-limited noise, optionally mixed
with a component common to all speakers. EEG channel c is

    trf_att[c] * env_att + gain * trf_unatt[c] * mean(env_unatt) + noise

with ``*`` a causal convolution. The noise has two parts: a share
``source_noise_fraction`` of its power is band-limited noise added to the
attended stream's cortical representation (so it reaches the scalp through
the attended kernels and cannot be filtered away spatially), the rest is
independent 1-32 Hz sensor noise. Total noise power is set by ``snr_db``
relative to the attended-response power.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .correlation import EnvelopeSet
from .decoder import EegSegment
from .errors import ConfigError
from .signal import EEG_BAND_HZ, FilterSpec, Waveform, bandpass

TRF_SUPPORT_S = 0.4
_TAG_TRF, _TAG_TRIAL, _TAG_NOISE = 1, 2, 3


@dataclass(frozen=True)
class SynthConfig:
    n_trials: int = 8
    trial_seconds: float = 120.0
    rate_hz: float = 128.0
    n_channels: int = 16
    n_speakers: int = 2
    # None means noiseless
    snr_db: float | None = 0.0
    unattended_gain: float = 0.7
    shared_fraction: float = 0.3
    envelope_band_hz: tuple[float, float] = (1.0, 9.0)
    seed: int = 0
    source_noise_fraction: float = 0.9

    def __post_init__(self) -> None:
        object.__setattr__(self, "envelope_band_hz", tuple(float(b) for b in self.envelope_band_hz))
        if min(self.n_trials, self.n_channels) < 1 or self.n_speakers < 2:
            raise ConfigError("need n_trials >= 1, n_channels >= 1, n_speakers >= 2")
        if self.trial_seconds * self.rate_hz < 256:
            raise ConfigError("trials must span at least 256 samples")
        for name in ("unattended_gain", "shared_fraction", "source_noise_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        lo, hi = self.envelope_band_hz
        if not 0 < lo < hi < self.rate_hz / 2:
            raise ConfigError(f"envelope band {self.envelope_band_hz} invalid at {self.rate_hz} Hz")

    @property
    def n_samples(self) -> int:
        return int(round(self.trial_seconds * self.rate_hz))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["envelope_band_hz"] = list(self.envelope_band_hz)
        return d


@dataclass(frozen=True)
class SynthTrial:
    trial_id: str
    eeg: EegSegment
    envelopes: EnvelopeSet
    truth: dict = field(compare=False)


def _rng(*entropy) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


def _seed_entropy(seed) -> list[int]:
    if isinstance(seed, (list, tuple)):
        return [int(s) for s in seed]
    return [int(seed)]


def gen_envelope(
    seconds: float,
    rate_hz: float,
    band: tuple[float, float],
    shared: Waveform | None = None,
    shared_fraction: float = 0.0,
    seed=0,
) -> Waveform:
    """Rectified band-limited noise scaled to unit variance (no mean removal, so >= 0)."""
    n = int(round(seconds * rate_hz))
    if n < 256:
        raise ConfigError(f"{n} samples requested, need at least 256")
    lo, hi = band
    if not 0 < lo < hi < rate_hz / 2:
        raise ConfigError(f"band {band} invalid at {rate_hz} Hz")
    noise = _rng(*_seed_entropy(seed)).standard_normal(n)
    own = np.maximum(bandpass(Waveform(noise, rate_hz), FilterSpec(lo, hi)).samples, 0.0)
    own /= own.std()
    if shared is not None:
        if len(shared) != n:
            raise ConfigError("shared component length differs from the requested envelope")
        own = (1.0 - shared_fraction) * own + shared_fraction * shared.samples
        own = own / own.std()
    return Waveform(own, rate_hz)


def gen_trf(n_channels: int, rate_hz: float, seed=0) -> np.ndarray:
    """Per-channel response kernels on [0, 400] ms, shape (n_channels, K).

    Each is a random mix of two Gabor bumps near 100 and 200 ms latency,
    tapered to exactly zero at both ends and scaled to unit peak.
    """
    if n_channels < 1:
        raise ConfigError("n_channels must be >= 1")
    k = int(np.floor(TRF_SUPPORT_S * rate_hz)) + 1
    t = np.arange(k) / rate_hz
    taper = np.sin(np.pi * t / TRF_SUPPORT_S) ** 2
    taper[0] = taper[-1] = 0.0
    rng = _rng(*_seed_entropy(seed))
    out = np.empty((n_channels, k))
    for c in range(n_channels):
        h = np.zeros(k)
        for latency, jitter in ((0.1, 0.02), (0.2, 0.03)):
            mu = latency + rng.uniform(-jitter, jitter)
            sigma = rng.uniform(0.02, 0.04)
            freq = rng.uniform(3.0, 6.0)
            phase = rng.uniform(0, 2 * np.pi)
            gabor = np.exp(-0.5 * ((t - mu) / sigma) ** 2) * np.cos(2 * np.pi * freq * (t - mu) + phase)
            h += rng.standard_normal() * gabor
        h *= taper
        out[c] = h / np.abs(h).max()
    return out


def neural_response(env: np.ndarray, trfs: np.ndarray) -> np.ndarray:
    """Causal convolution of a zero-meaned envelope with each channel kernel -> (T, C)."""
    e = np.asarray(env, dtype=np.float64)
    e = e - e.mean()
    n = e.size
    return np.stack([np.convolve(e, h)[:n] for h in trfs], axis=1)


def forward_model(envs: np.ndarray, attended: int, trf_att: np.ndarray, trf_unatt: np.ndarray, gain: float):
    """Noise-free EEG and the attended-only response, both (T, C)."""
    att = neural_response(envs[:, attended], trf_att)
    others = [j for j in range(envs.shape[1]) if j != attended]
    unatt = neural_response(envs[:, others].mean(axis=1), trf_unatt)
    return att + gain * unatt, att


def scalp_noise(cfg: SynthConfig, trial_index: int, trf_att: np.ndarray) -> np.ndarray:
    """Unit-power (T, C) noise: source-level share through ``trf_att`` plus sensor noise."""
    n = cfg.n_samples
    rng = _rng(cfg.seed, _TAG_NOISE, trial_index)
    source = rng.standard_normal(n)
    white = rng.standard_normal((n, cfg.n_channels))
    src = neural_response(bandpass(Waveform(source, cfg.rate_hz), FilterSpec(*cfg.envelope_band_hz)).samples, trf_att)
    spec = FilterSpec(*EEG_BAND_HZ)
    sens = np.stack([bandpass(Waveform(white[:, c], cfg.rate_hz), spec).samples
                     for c in range(cfg.n_channels)], axis=1)
    f = cfg.source_noise_fraction
    noise = np.sqrt(f / np.mean(src ** 2)) * src + np.sqrt((1 - f) / np.mean(sens ** 2)) * sens
    return noise / np.sqrt(np.mean(noise ** 2))


def dataset_trfs(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    # one listener: response kernels are shared by every trial
    return (gen_trf(cfg.n_channels, cfg.rate_hz, seed=[cfg.seed, _TAG_TRF, 0]),
            gen_trf(cfg.n_channels, cfg.rate_hz, seed=[cfg.seed, _TAG_TRF, 1]))


def gen_trial(cfg: SynthConfig, trial_index: int, trfs=None) -> SynthTrial:
    trf_a, trf_u = dataset_trfs(cfg) if trfs is None else trfs
    band = cfg.envelope_band_hz
    base = [cfg.seed, _TAG_TRIAL, trial_index]
    shared = None
    if cfg.shared_fraction > 0:
        shared = gen_envelope(cfg.trial_seconds, cfg.rate_hz, band, seed=base + [cfg.n_speakers])
    envs = np.stack([
        gen_envelope(cfg.trial_seconds, cfg.rate_hz, band, shared, cfg.shared_fraction, seed=base + [k]).samples
        for k in range(cfg.n_speakers)
    ], axis=1)
    attended = trial_index % cfg.n_speakers

    clean, att_resp = forward_model(envs, attended, trf_a, trf_u, cfg.unattended_gain)
    noise_power = 0.0
    if cfg.snr_db is not None:
        noise = scalp_noise(cfg, trial_index, trf_a)
        noise_power = float(np.mean(att_resp ** 2) / 10 ** (cfg.snr_db / 10))
        clean = clean + np.sqrt(noise_power) * noise
    tid = f"synth-{trial_index:03d}"
    return SynthTrial(
        trial_id=tid,
        eeg=EegSegment(clean, cfg.rate_hz, tid),
        envelopes=EnvelopeSet(envs, attended),
        truth={"trf_attended": trf_a, "trf_unattended": trf_u, "noise_power": noise_power,
               "seed": base},
    )


def gen_dataset(cfg: SynthConfig) -> list[SynthTrial]:
    trfs = dataset_trfs(cfg)
    return [gen_trial(cfg, i, trfs) for i in range(cfg.n_trials)]


def to_bundle(trials: Sequence[SynthTrial], cfg: SynthConfig):
    from .dataset import Bundle, Trial

    return Bundle(
        rate_hz=cfg.rate_hz,
        n_channels=cfg.n_channels,
        n_speakers=cfg.n_speakers,
        trials=[Trial(t.trial_id, t.eeg.data.astype(np.float32), t.envelopes.streams.astype(np.float32),
                      t.envelopes.attended_index) for t in trials],
        meta={"generator": "aadlab.synth", "synth_config": cfg.to_dict()},
    )


def synth_bundle(cfg: SynthConfig):
    return to_bundle(gen_dataset(cfg), cfg)
