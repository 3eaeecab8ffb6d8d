import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from aadlab.errors import (
    EmptyInputError,
    InsufficientLengthError,
    InvalidCountError,
    InvalidSpecError,
    RateMismatchError,
    ShapeError,
    UnsupportedDirectionError,
)
from aadlab.signal import (
    FilterSpec,
    GammatoneBank,
    Waveform,
    bandpass,
    envelope,
    erb_centers,
    gammatone_apply,
    resample,
    speech_envelope,
)


def rms(x):
    return np.sqrt(np.mean(np.square(x)))


def sine(freq, rate, seconds):
    t = np.arange(int(round(rate * seconds))) / rate
    return np.sin(2 * np.pi * freq * t)


class TestBandpass:
    def test_passband_sine_survives(self):
        x = sine(10, 128, 10)
        y = bandpass(Waveform(x, 128), FilterSpec(1, 32)).samples
        edge = slice(128, -128)
        assert 1 - rms(y[edge]) / rms(x[edge]) < 0.05

    def test_stopband_sine_attenuated_20db(self):
        x = sine(60, 256, 10)
        y = bandpass(Waveform(x, 256), FilterSpec(1, 32)).samples
        edge = slice(256, -256)
        assert 20 * np.log10(rms(y[edge]) / rms(x[edge])) < -20

    def test_zero_in_zero_out(self):
        y = bandpass(Waveform(np.zeros(1000), 128), FilterSpec(1, 32))
        assert np.all(y.samples == 0)

    def test_shape_and_rate_kept(self):
        w = Waveform(np.random.default_rng(0).standard_normal(777), 128)
        y = bandpass(w, FilterSpec(1, 32))
        assert len(y) == 777 and y.rate_hz == 128

    def test_cutoff_at_nyquist_rejected(self):
        with pytest.raises(InvalidSpecError):
            bandpass(Waveform(np.ones(1000), 64), FilterSpec(1, 32))

    def test_short_signal_rejected(self):
        with pytest.raises(InsufficientLengthError):
            bandpass(Waveform(np.ones(10), 128), FilterSpec(1, 32))

    def test_linear(self):
        rng = np.random.default_rng(1)
        x, z = rng.standard_normal((2, 2000))
        f = lambda v: bandpass(Waveform(v, 128), FilterSpec(1, 32)).samples
        lhs = f(2.5 * x - 0.7 * z)
        rhs = 2.5 * f(x) - 0.7 * f(z)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * np.max(np.abs(rhs))

    def test_zero_phase(self):
        # band-limited input: filtered output should not be shifted
        rng = np.random.default_rng(2)
        x = bandpass(Waveform(rng.standard_normal(4096), 128), FilterSpec(4, 12)).samples
        y = bandpass(Waveform(x, 128), FilterSpec(1, 32)).samples
        xc = np.correlate(y - y.mean(), x - x.mean(), mode="full")
        assert np.argmax(xc) - (x.size - 1) == 0


class TestResample:
    def test_sine_downsampled(self):
        out = resample(Waveform(sine(8, 512, 1), 512), 128)
        assert len(out) == 128 and out.rate_hz == 128
        ref = sine(8, 128, 1)
        assert np.corrcoef(out.samples, ref)[0, 1] > 0.99

    def test_dc_preserved(self):
        out = resample(Waveform(np.full(1000, 3.0), 512), 128)
        assert np.max(np.abs(out.samples - 3.0)) < 1e-6

    def test_identity(self):
        x = np.random.default_rng(3).standard_normal(300)
        out = resample(Waveform(x, 128), 128)
        assert len(out) == 300 and np.max(np.abs(out.samples - x)) < 1e-6

    @pytest.mark.parametrize("n,rate", [(1000, 512), (16000, 16000), (44100, 44100), (999, 300)])
    def test_length_floor(self, n, rate):
        out = resample(Waveform(np.ones(n), rate), 128)
        assert len(out) == (n * 128) // rate

    def test_upsampling_rejected(self):
        with pytest.raises(UnsupportedDirectionError):
            resample(Waveform(np.ones(100), 128), 256)


def erb(f):
    return 21.4 * np.log10(4.37 * f / 1000 + 1)


class TestErbCenters:
    def test_seventeen_bands(self):
        c = erb_centers(17, 50, 5000)
        assert len(c) == 17
        assert np.all(np.diff(c) > 0)
        assert c[0] == pytest.approx(50, rel=1e-6) and c[-1] == pytest.approx(5000, rel=1e-6)

    def test_two_bands_are_endpoints(self):
        assert erb_centers(2, 100, 200) == pytest.approx([100, 200], rel=1e-12)

    def test_middle_center_by_root_finding(self):
        target = 0.5 * (erb(50.0) + erb(5000.0))
        mid = brentq(lambda f: erb(f) - target, 50, 5000, xtol=1e-12)
        assert erb_centers(3, 50, 5000)[1] == pytest.approx(mid, rel=1e-9)

    def test_equal_erb_spacing(self):
        steps = np.diff(erb(np.array(erb_centers(17, 50, 5000))))
        assert np.allclose(steps, steps[0], rtol=1e-9)

    def test_count_validated(self):
        with pytest.raises(InvalidCountError):
            erb_centers(1, 50, 5000)

    @given(st.integers(2, 64), st.floats(20, 1000), st.floats(1.1, 20))
    def test_strictly_increasing_and_deterministic(self, n, fmin, ratio):
        a = erb_centers(n, fmin, fmin * ratio)
        assert np.all(np.diff(a) > 0)
        assert a == erb_centers(n, fmin, fmin * ratio)


class TestGammatone:
    bank = GammatoneBank.erb_spaced(16000)

    @pytest.mark.parametrize("band", [0, 4, 8, 12, 16])
    def test_center_tone_peaks_in_own_band(self, band):
        f = self.bank.center_hz[band]
        out = gammatone_apply(Waveform(sine(f, 16000, 0.5), 16000), self.bank)
        levels = [rms(sb.samples[4000:]) for sb in out]
        assert int(np.argmax(levels)) == band

    def test_zero_input(self):
        out = gammatone_apply(Waveform(np.zeros(8000), 16000), self.bank)
        assert all(np.all(sb.samples == 0) for sb in out)

    def test_white_noise_shapes(self):
        x = np.random.default_rng(0).standard_normal(8000)
        out = gammatone_apply(Waveform(x, 16000), self.bank)
        assert len(out) == 17 and all(len(sb) == 8000 for sb in out)

    def test_rate_mismatch(self):
        with pytest.raises(RateMismatchError):
            gammatone_apply(Waveform(np.zeros(8000), 8000), self.bank)

    def test_too_short(self):
        with pytest.raises(InsufficientLengthError):
            gammatone_apply(Waveform(np.zeros(100), 16000), self.bank)

    def test_kernels_truncated_at_1e4(self):
        for f, h in zip(self.bank.center_hz, self.bank.kernels):
            decay = 2 * np.pi * 1.019 * 24.7 * (4.37 * f / 1000 + 1)
            t = np.arange(h.size + 1) / 16000
            env = t ** 3 * np.exp(-decay * t)
            peak = (3 / decay) ** 3 * np.exp(-3)
            assert env[h.size - 1] >= 1e-4 * peak > env[h.size]


class TestEnvelope:
    def test_power_law_of_constant(self):
        out = envelope([Waveform(np.full(10, -2.0), 128)], 0.6)
        assert np.allclose(out.samples, 2 ** 0.6)
        assert out.samples[0] == pytest.approx(1.51572, abs=1e-5)

    def test_zeros(self):
        out = envelope([Waveform(np.zeros(10), 128)] * 3, 0.6)
        assert np.all(out.samples == 0)

    def test_two_identical_bands_double(self):
        sb = Waveform(np.random.default_rng(0).standard_normal(50), 128)
        assert np.array_equal(envelope([sb, sb], 0.6).samples, 2 * envelope([sb], 0.6).samples)

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            envelope([], 0.6)

    def test_mismatched_lengths(self):
        with pytest.raises(ShapeError):
            envelope([Waveform(np.ones(5), 128), Waveform(np.ones(6), 128)])

    @settings(max_examples=50)
    @given(st.lists(st.booleans(), min_size=3, max_size=3))
    def test_sign_flip_invariant(self, flips):
        rng = np.random.default_rng(5)
        bands = [rng.standard_normal(40) for _ in range(3)]
        flipped = [(-b if f else b) for b, f in zip(bands, flips)]
        a = envelope([Waveform(b, 128) for b in bands]).samples
        b = envelope([Waveform(b, 128) for b in flipped]).samples
        assert np.array_equal(a, b)


def test_full_pipeline_bit_identical():
    x = np.random.default_rng(9).standard_normal(16000)
    a = speech_envelope(Waveform(x, 16000))
    b = speech_envelope(Waveform(x, 16000))
    assert len(a) == 128 and a.rate_hz == 128
    assert a.samples.tobytes() == b.samples.tobytes()
    assert np.all(a.samples >= -1e-9)
