import math
import numpy as np
import pytest
from pydantic import ValidationError

from phunmix.errors import AudioError, InvalidArgumentError
from phunmix.separation.audio import read_spectrogram, read_wav, synthetic_sources, write_spectrogram, write_wav
from phunmix.separation.metrics import sdr
from phunmix.separation.mixing import MixSpec, has_full_rank_everywhere, mix_stft, mixing_matrix, random_mix_spec
from phunmix.separation.stft import StftConfig, istft, stft
from phunmix.separation import settings

SMALL = StftConfig(sample_rate=8000, window_len=64, hop=32)


def test_default_framing():
    cfg = StftConfig()
    assert (cfg.sample_rate, cfg.window_len, cfg.hop, cfg.bins) == (16000, 1024, 512, 512)
    assert stft(np.zeros(16000), cfg).shape == (512, cfg.frame_count(16000))


def test_config_validation():
    with pytest.raises(ValidationError):
        StftConfig(window_len=1024, hop=300)
    with pytest.raises(ValidationError):
        StftConfig(window_len=1024, hop=512, window="blackman")
    assert StftConfig(window_len=1024, hop=256).bins == 512


def test_zero_signal():
    assert np.all(stft(np.zeros(2048)) == 0)


def test_bin_centred_sinusoid():
    cfg = StftConfig()
    k = 100
    times = np.arange(cfg.sample_rate) / cfg.sample_rate
    spectrogram = stft(np.cos(2 * math.pi * k * cfg.sample_rate / cfg.window_len * times), cfg)
    # Frames 1..T-3 lie wholly inside the signal; the others include padding.
    energy = np.abs(spectrogram[:, 1:-2]) ** 2
    np.testing.assert_array_less(0.99 * energy.sum(axis=0), energy[k - 1:k + 2].sum(axis=0))
    assert np.argmax(energy.sum(axis=1)) == k


def test_round_trip_white_noise(rng):
    cfg = StftConfig()
    samples = rng.standard_normal(cfg.sample_rate)
    spectrogram = stft(samples, cfg)
    assert spectrogram.shape[1] == 33
    rebuilt = istft(spectrogram, cfg, length=samples.shape[0])
    assert np.max(np.abs(rebuilt - samples)) < 1e-10


def test_round_trip_covers_edges_for_any_length(rng):
    for length in (64, 100, 257, 1000):
        samples = rng.standard_normal(length)
        rebuilt = istft(stft(samples, SMALL), SMALL, length=length)
        np.testing.assert_allclose(rebuilt, samples, atol=1e-12)


def test_inconsistent_spectrogram_stays_bounded(rng):
    cfg = StftConfig()
    samples = rng.standard_normal(cfg.sample_rate)
    magnitudes = np.abs(stft(samples, cfg))
    scrambled = magnitudes * np.exp(2j * math.pi * rng.uniform(size=magnitudes.shape))
    rebuilt = istft(scrambled, cfg, length=samples.shape[0])
    assert np.max(np.abs(rebuilt)) < 10 * np.max(np.abs(samples))
    assert sdr(rebuilt, samples) >= -10.0


def test_nyquist_is_packed_into_dc(rng):
    samples = np.tile([1.0, -1.0], 256) + 0.5
    spectrogram = stft(samples, SMALL)
    assert np.all(spectrogram[0].imag != 0)
    rebuilt = istft(spectrogram, SMALL, length=samples.shape[0])
    np.testing.assert_allclose(rebuilt, samples, atol=1e-12)


def test_istft_is_linear(rng):
    shape = (SMALL.bins, 10)
    first = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    second = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    np.testing.assert_allclose(istft(first + second, SMALL), istft(first, SMALL) + istft(second, SMALL), atol=1e-12)
    assert np.all(istft(np.zeros(shape), SMALL) == 0)


def test_stft_errors():
    with pytest.raises(InvalidArgumentError):
        stft(np.zeros(100))
    with pytest.raises(InvalidArgumentError):
        stft(np.zeros((2, 4096)))
    with pytest.raises(InvalidArgumentError):
        istft(np.zeros((10, 4)), SMALL)


def test_mixing_matrix_examples():
    zero = MixSpec(gains_db=np.zeros((2, 3)), delays=np.zeros((2, 3)))
    np.testing.assert_allclose(mixing_matrix(zero, 17, 512), np.ones((2, 3)))

    gains = np.array([[3.0, -2.0], [1.0, 4.0]])
    spec = MixSpec(gains_db=gains, delays=[[5, 40], [0, 12]])
    np.testing.assert_allclose(mixing_matrix(spec, 0, 512), 10 ** (gains / 20))

    doubled = MixSpec(gains_db=[[20 * math.log10(2)]], delays=[[512]])
    np.testing.assert_allclose(mixing_matrix(doubled, 1, 512), [[2 * np.exp(1j)]])

    with pytest.raises(InvalidArgumentError):
        mixing_matrix(zero, 512, 512)


def test_mix_spec_validation():
    with pytest.raises(InvalidArgumentError):
        MixSpec(gains_db=np.zeros((2, 2)), delays=np.zeros((2, 3)))
    with pytest.raises(InvalidArgumentError):
        MixSpec(gains_db=np.zeros((1, 1)), delays=[[0.5]])


def test_random_mix_spec_ranges(rng):
    for m, k in ((2, 2), (2, 3), (3, 2)):
        spec = random_mix_spec(m, k, 512, rng)
        assert spec.gains_db.shape == (m, k)
        assert np.all((spec.gains_db >= -5) & (spec.gains_db <= 5))
        assert np.all((spec.delays >= 0) & (spec.delays <= 50))
        assert has_full_rank_everywhere(spec, 512, settings.MIX_RANK_RTOL)


def test_mix_stft_examples(rng):
    sources = rng.standard_normal((1, 8, 5)) + 1j * rng.standard_normal((1, 8, 5))
    identity = MixSpec(gains_db=[[0.0]], delays=[[0]])
    np.testing.assert_allclose(mix_stft(sources, identity), sources)

    two = MixSpec(gains_db=np.zeros((2, 2)), delays=np.zeros((2, 2)))
    assert np.all(mix_stft(np.zeros((2, 8, 5)), two) == 0)
    cancelling = np.concatenate([sources, -sources])
    assert np.max(np.abs(mix_stft(cancelling, two))) < 1e-15

    with pytest.raises(InvalidArgumentError):
        mix_stft(np.zeros((3, 8, 5)), two)


def test_sdr_examples(rng):
    reference = rng.standard_normal(1000)
    assert sdr(reference, reference) == settings.SDR_CAP_DB
    assert sdr(reference / 2, reference) == pytest.approx(10 * math.log10(4))
    assert sdr(np.zeros(1000), reference) == pytest.approx(0.0)
    with pytest.raises(InvalidArgumentError):
        sdr(reference, np.zeros(1000))


def test_wav_round_trip(tmp_path, rng):
    samples = 0.5 * rng.uniform(-1, 1, 4000)
    path = str(tmp_path / "source.wav")
    write_wav(path, samples, 8000, subtype="FLOAT")
    loaded, rate = read_wav(path, expected_rate=8000)
    assert rate == 8000
    np.testing.assert_allclose(loaded, samples, atol=1e-7)

    write_wav(path, samples, 8000, subtype="PCM_16")
    loaded, _ = read_wav(path)
    np.testing.assert_allclose(loaded, samples, atol=1 / 2 ** 15)


def test_wav_rejects_rate_mismatch_and_missing_file(tmp_path):
    path = str(tmp_path / "tone.wav")
    write_wav(path, np.zeros(100), 8000)
    with pytest.raises(AudioError):
        read_wav(path, expected_rate=16000)
    with pytest.raises(AudioError):
        read_wav(str(tmp_path / "missing.wav"))
    with pytest.raises(InvalidArgumentError):
        write_wav(path, np.zeros(100), 8000, subtype="PCM_24")


def test_spectrogram_dump(tmp_path, rng):
    spectrogram = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    path = tmp_path / "spec.bin"
    write_spectrogram(str(path), spectrogram)
    content = path.read_bytes()
    assert content[:8] == b"PHUNSPEC"
    assert len(content) == 16 + 4 * 3 * 16
    np.testing.assert_array_equal(read_spectrogram(str(path)), spectrogram)

    path.write_bytes(b"NOTASPEC" + content[8:])
    with pytest.raises(AudioError):
        read_spectrogram(str(path))


def test_synthetic_sources(rng):
    sources = synthetic_sources(3, SMALL, rng, duration_s=0.25)
    assert sources.shape == (3, 2000)
    np.testing.assert_allclose(np.max(np.abs(sources), axis=1), settings.SYNTHETIC_PEAK)
    with pytest.raises(InvalidArgumentError):
        synthetic_sources(0, SMALL, rng)
