"""Signal-processing primitives for EEG and audio.

Band-pass filtering, rational-ratio resampling, an ERB-spaced gammatone
filterbank and power-law envelope extraction. Everything here is a pure
function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal as sps

from .errors import (
    EmptyInputError,
    InsufficientLengthError,
    InvalidCountError,
    InvalidSpecError,
    RateMismatchError,
    ShapeError,
    UnsupportedDirectionError,
)

EEG_RATE_HZ = 128.0
EEG_BAND_HZ = (1.0, 32.0)
N_SUBBANDS = 17
SUBBAND_RANGE_HZ = (50.0, 5000.0)
POWER_LAW_EXPONENT = 0.6

# Glasberg & Moore gammatone bandwidth factor
_GT_BANDWIDTH = 1.019
_GT_TRUNCATE = 1e-4


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    rate_hz: float

    def __post_init__(self) -> None:
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ShapeError(f"samples must be 1-D, got shape {x.shape}")
        if x.size == 0:
            raise EmptyInputError("waveform has no samples")
        if not np.all(np.isfinite(x)):
            raise ValueError("waveform contains non-finite samples")
        if not self.rate_hz > 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "rate_hz", float(self.rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate_hz


@dataclass(frozen=True)
class FilterSpec:
    low_hz: float
    high_hz: float
    order: int = 4
    kind: str = "band_pass"

    def check(self, rate_hz: float) -> None:
        if self.kind != "band_pass":
            raise InvalidSpecError(f"unsupported filter kind {self.kind!r}")
        if self.order < 1:
            raise InvalidSpecError("filter order must be positive")
        if not 0 < self.low_hz < self.high_hz < rate_hz / 2:
            raise InvalidSpecError(
                f"need 0 < low ({self.low_hz}) < high ({self.high_hz}) "
                f"< Nyquist ({rate_hz / 2})"
            )


@dataclass(frozen=True)
class GammatoneBank:
    center_hz: tuple[float, ...]
    rate_hz: float
    order: int = 4
    kernels: tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        centers = tuple(float(c) for c in self.center_hz)
        if len(centers) == 0:
            raise EmptyInputError("gammatone bank needs at least one center")
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise ValueError("center frequencies must be strictly increasing")
        if centers[0] <= 0 or centers[-1] >= self.rate_hz / 2:
            raise InvalidSpecError("center frequencies must lie in (0, Nyquist)")
        object.__setattr__(self, "center_hz", centers)
        kernels = tuple(
            gammatone_kernel(c, self.rate_hz, self.order) for c in centers
        )
        object.__setattr__(self, "kernels", kernels)

    @classmethod
    def erb_spaced(
        cls,
        rate_hz: float,
        n: int = N_SUBBANDS,
        fmin_hz: float = SUBBAND_RANGE_HZ[0],
        fmax_hz: float = SUBBAND_RANGE_HZ[1],
        order: int = 4,
    ) -> GammatoneBank:
        return cls(tuple(erb_centers(n, fmin_hz, fmax_hz)), rate_hz, order)

    @property
    def max_kernel_length(self) -> int:
        return max(k.size for k in self.kernels)


def bandpass(signal: Waveform, spec: FilterSpec) -> Waveform:
    """Zero-phase Butterworth band-pass (forward-backward, so effective order doubles).

    Raises InvalidSpecError if a cutoff is at or above Nyquist, and
    InsufficientLengthError if the signal is not longer than the
    reflection padding the forward-backward pass needs.
    """
    spec.check(signal.rate_hz)
    sos = sps.butter(
        spec.order, [spec.low_hz, spec.high_hz], btype="bandpass",
        fs=signal.rate_hz, output="sos",
    )
    padlen = _sosfiltfilt_padlen(sos)
    if len(signal) <= max(padlen, 3 * spec.order):
        raise InsufficientLengthError(
            f"signal of {len(signal)} samples too short for order-{spec.order} "
            f"zero-phase filtering (need > {max(padlen, 3 * spec.order)})"
        )
    y = sps.sosfiltfilt(sos, signal.samples)
    return Waveform(y, signal.rate_hz)


def _sosfiltfilt_padlen(sos: np.ndarray) -> int:
    # mirrors scipy's default padlen for sosfiltfilt
    n_zeros = min(int((sos[:, 2] == 0).sum()), int((sos[:, 5] == 0).sum()))
    return 3 * (2 * len(sos) + 1 - n_zeros)


def _rational(x: float) -> Fraction:
    return Fraction(x).limit_denominator(1_000_000)


def resample(signal: Waveform, target_hz: float) -> Waveform:
    """Downsample by a rational ratio with polyphase anti-alias filtering.

    The output has ``floor(len * target / rate)`` samples.
    """
    if not target_hz > 0:
        raise ValueError("target_hz must be positive")
    if target_hz > signal.rate_hz:
        raise UnsupportedDirectionError(
            f"upsampling {signal.rate_hz} -> {target_hz} Hz is not supported"
        )
    if target_hz == signal.rate_hz:
        return Waveform(signal.samples.copy(), signal.rate_hz)
    ratio = _rational(target_hz) / _rational(signal.rate_hz)
    up, down = ratio.numerator, ratio.denominator
    n_out = (len(signal) * up) // down
    if n_out < 1:
        raise InsufficientLengthError("signal too short to resample")
    y = sps.resample_poly(signal.samples, up, down, padtype="line")
    return Waveform(y[:n_out], float(target_hz))


def erb_number(f_hz):
    """ERB-number (Cams) of a frequency, Glasberg & Moore (1990)."""
    return 21.4 * np.log10(4.37 * np.asarray(f_hz, dtype=np.float64) / 1000.0 + 1.0)


def erb_number_inverse(e):
    return (10.0 ** (np.asarray(e, dtype=np.float64) / 21.4) - 1.0) * 1000.0 / 4.37


def erb_bandwidth(f_hz):
    return 24.7 * (4.37 * np.asarray(f_hz, dtype=np.float64) / 1000.0 + 1.0)


def erb_centers(n: int, fmin_hz: float, fmax_hz: float) -> list[float]:
    """``n`` center frequencies equally spaced on the ERB-number scale, endpoints included."""
    if n < 2:
        raise InvalidCountError(f"need at least 2 centers, got {n}")
    if not 0 < fmin_hz < fmax_hz:
        raise InvalidSpecError(f"need 0 < fmin ({fmin_hz}) < fmax ({fmax_hz})")
    e = np.linspace(erb_number(fmin_hz), erb_number(fmax_hz), n)
    f = erb_number_inverse(e)
    # pin the endpoints exactly
    f[0], f[-1] = fmin_hz, fmax_hz
    return [float(v) for v in f]


def gammatone_kernel(center_hz: float, rate_hz: float, order: int = 4) -> np.ndarray:
    """FIR-truncated gammatone impulse response with unit gain at ``center_hz``.

    The response is cut where its envelope ``t**(order-1) * exp(-2*pi*b*ERB*t)``
    has decayed below 1e-4 of its peak.
    """
    decay = 2 * np.pi * _GT_BANDWIDTH * float(erb_bandwidth(center_hz))
    n_max = int(np.ceil(rate_hz * (order + 40) / decay)) + 1
    t = np.arange(n_max) / rate_hz
    env = t ** (order - 1) * np.exp(-decay * t)
    above = np.nonzero(env >= _GT_TRUNCATE * env.max())[0]
    t = t[: above[-1] + 1]
    h = t ** (order - 1) * np.exp(-decay * t) * np.cos(2 * np.pi * center_hz * t)
    w = 2 * np.pi * center_hz / rate_hz
    gain = np.abs(np.sum(h * np.exp(-1j * w * np.arange(h.size))))
    return h / gain


def gammatone_apply(audio: Waveform, bank: GammatoneBank) -> list[Waveform]:
    """Filter ``audio`` through every band; outputs keep the input length."""
    if audio.rate_hz != bank.rate_hz:
        raise RateMismatchError(
            f"audio at {audio.rate_hz} Hz, bank built for {bank.rate_hz} Hz"
        )
    if len(audio) < bank.max_kernel_length:
        raise InsufficientLengthError(
            f"audio has {len(audio)} samples, longest kernel has {bank.max_kernel_length}"
        )
    n = len(audio)
    x = audio.samples
    out = []
    for h in bank.kernels:
        if not x.any():
            y = np.zeros(n)
        else:
            y = sps.fftconvolve(x, h)[:n]
        out.append(Waveform(y, audio.rate_hz))
    return out


def envelope(subbands: list[Waveform], exponent: float = POWER_LAW_EXPONENT) -> Waveform:
    """Sum of power-law compressed subband magnitudes."""
    if len(subbands) == 0:
        raise EmptyInputError("no subbands given")
    if not 0 < exponent <= 1:
        raise ValueError(f"exponent must be in (0, 1], got {exponent}")
    n, rate = len(subbands[0]), subbands[0].rate_hz
    for k, sb in enumerate(subbands):
        if len(sb) != n:
            raise ShapeError(f"subband {k} has {len(sb)} samples, expected {n}")
        if sb.rate_hz != rate:
            raise RateMismatchError(f"subband {k} at {sb.rate_hz} Hz, expected {rate}")
    total = np.zeros(n)
    for sb in subbands:
        total += np.abs(sb.samples) ** exponent
    return Waveform(total, rate)


def speech_envelope(
    audio: Waveform,
    target_hz: float = EEG_RATE_HZ,
    n_bands: int = N_SUBBANDS,
    band_hz: tuple[float, float] = SUBBAND_RANGE_HZ,
    exponent: float = POWER_LAW_EXPONENT,
) -> Waveform:
    """Gammatone subbands -> |.|**exponent -> sum -> resample to ``target_hz``."""
    bank = GammatoneBank.erb_spaced(audio.rate_hz, n_bands, *band_hz)
    env = envelope(gammatone_apply(audio, bank), exponent)
    return resample(env, target_hz)
