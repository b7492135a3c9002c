import numpy as np
import pytest
from scipy.io import wavfile

from oracles import band_power_ratio_db
from roomloc.audio import Signal, load_wav, synth_speechband, write_wav
from roomloc.features import FrameSpec, frame_signal


class TestSignal:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Signal(np.array([]), 8000)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            Signal(np.array([0.0, np.nan]), 8000)

    def test_duration(self):
        assert Signal(np.zeros(21600), 8000).duration_s == 2.7


class TestLoadWav:
    def test_pcm16_scaling(self, tmp_path):
        path = tmp_path / "x.wav"
        wavfile.write(path, 8000, np.array([32767, -32768, 0], dtype=np.int16))
        sig = load_wav(path)
        assert sig.sample_rate == 8000
        assert sig.samples[0] == pytest.approx(0.99997, abs=1e-5)
        assert sig.samples[1] == -1.0
        assert sig.samples[2] == 0.0

    def test_duration_arithmetic(self, tmp_path):
        path = tmp_path / "x.wav"
        wavfile.write(path, 8000, np.zeros(21600, dtype=np.int16))
        assert load_wav(path).samples.size == 21600

    def test_float32_accepted(self, tmp_path):
        path = tmp_path / "x.wav"
        wavfile.write(path, 8000, np.array([0.5, -0.5], dtype=np.float32))
        assert np.allclose(load_wav(path).samples, [0.5, -0.5])

    def test_multichannel_rejected(self, tmp_path):
        path = tmp_path / "x.wav"
        wavfile.write(path, 8000, np.zeros((100, 2), dtype=np.int16))
        with pytest.raises(ValueError, match="downmix"):
            load_wav(path)

    def test_unsupported_encoding_named(self, tmp_path):
        path = tmp_path / "x.wav"
        wavfile.write(path, 8000, np.zeros(100, dtype=np.int32))
        with pytest.raises(ValueError, match="int32"):
            load_wav(path)

    def test_rate_mismatch_rejected(self, tmp_path):
        path = tmp_path / "x.wav"
        wavfile.write(path, 16000, np.zeros(100, dtype=np.int16))
        with pytest.raises(ValueError, match="16000"):
            load_wav(path, expect_rate=8000)

    def test_truncated_header_is_parse_error(self, tmp_path):
        path = tmp_path / "x.wav"
        wavfile.write(path, 8000, np.zeros(100, dtype=np.int16))
        path.write_bytes(path.read_bytes()[:20])
        with pytest.raises(ValueError, match="cannot parse"):
            load_wav(path)

    def test_round_trip_pcm16_exact(self, tmp_path):
        path = tmp_path / "x.wav"
        rng = np.random.default_rng(0)
        original = rng.integers(-32768, 32768, size=500, dtype=np.int16)
        wavfile.write(path, 8000, original)
        sig = load_wav(path)
        write_wav(tmp_path / "y.wav", sig)
        again = load_wav(tmp_path / "y.wav")
        assert np.array_equal(sig.samples, again.samples)


class TestSynthSpeechband:
    def test_out_of_band_power_suppressed(self):
        sig = synth_speechband(1.0, seed=4)
        assert band_power_ratio_db(sig.samples, sig.sample_rate, (220.0, 3400.0)) >= 30.0

    def test_deterministic(self):
        a = synth_speechband(0.5, seed=9)
        b = synth_speechband(0.5, seed=9)
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, synth_speechband(0.5, seed=10).samples)

    def test_frame_energy_variation(self):
        sig = synth_speechband(2.7, seed=4)
        energies = np.sum(frame_signal(sig.samples, FrameSpec()) ** 2, axis=1)
        cv = energies.std() / energies.mean()
        assert cv > 0.2

    def test_peak_normalized(self):
        sig = synth_speechband(0.5, seed=4)
        assert np.max(np.abs(sig.samples)) == pytest.approx(0.99, abs=1e-12)

    def test_rejects_nonpositive_duration(self):
        with pytest.raises(ValueError):
            synth_speechband(0.0, seed=1)
