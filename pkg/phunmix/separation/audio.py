"""Audio and spectrogram files, plus the synthetic test sources."""
import os
import math
import struct
import logging
import numpy as np
import soundfile as sf
from scipy import signal as sps
from typing import Dict, List, Optional, Tuple

from phunmix.errors import AudioError, InvalidArgumentError
from . import settings
from .stft import StftConfig

log = logging.getLogger(__name__)

_HEADER = struct.Struct("<8sII")


def read_wav(path: str, expected_rate: Optional[int] = None) -> Tuple[np.ndarray, int]:
    try:
        samples, rate = sf.read(path, dtype="float64", always_2d=True)
    except (RuntimeError, OSError) as e:
        raise AudioError(f"cannot read {path}: {e}")
    if samples.shape[1] != 1:
        raise AudioError(f"{path} has {samples.shape[1]} channels, only mono is supported")
    if expected_rate is not None and rate != expected_rate:
        raise AudioError(f"{path} is sampled at {rate} Hz, expected {expected_rate} Hz")
    return samples[:, 0], rate


def write_wav(path: str, samples, rate: int, subtype: str = "FLOAT"):
    if subtype not in settings.WAV_SUBTYPES:
        raise InvalidArgumentError(f"unsupported WAV subtype '{subtype}', expected one of {settings.WAV_SUBTYPES}")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise InvalidArgumentError(f"expected a mono signal, got shape {samples.shape}")
    if subtype == "PCM_16":
        peak = float(np.max(np.abs(samples))) if samples.size else 0.0
        if peak > 1.0:
            log.warning("AUDIO: %s clips (peak %.3f) in PCM_16", path, peak)
    try:
        sf.write(path, samples, rate, subtype=subtype)
    except (RuntimeError, OSError) as e:
        raise AudioError(f"cannot write {path}: {e}")


def write_spectrogram(path: str, spectrogram):
    """Header (magic, u32 F, u32 T) then little-endian float64 re/im pairs, row-major F x T."""
    spectrogram = np.asarray(spectrogram, dtype=np.complex128)
    if spectrogram.ndim != 2:
        raise InvalidArgumentError(f"expected an (F, T) spectrogram, got shape {spectrogram.shape}")
    n_bins, n_frames = spectrogram.shape
    payload = np.empty((n_bins, n_frames, 2), dtype="<f8")
    payload[..., 0] = spectrogram.real
    payload[..., 1] = spectrogram.imag
    temp_path = f"{path}.tmp"
    try:
        with open(temp_path, "wb") as f:
            f.write(_HEADER.pack(settings.SPEC_MAGIC, n_bins, n_frames))
            f.write(payload.tobytes())
        os.replace(temp_path, path)
    except OSError as e:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise AudioError(f"cannot write spectrogram {path}: {e}")


def read_spectrogram(path: str) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            content = f.read()
    except OSError as e:
        raise AudioError(f"cannot read spectrogram {path}: {e}")
    if len(content) < _HEADER.size:
        raise AudioError(f"{path} is too short for a spectrogram header")
    magic, n_bins, n_frames = _HEADER.unpack_from(content)
    if magic != settings.SPEC_MAGIC:
        raise AudioError(f"{path} is not a spectrogram dump (bad magic)")
    expected = _HEADER.size + n_bins * n_frames * 16
    if len(content) != expected:
        raise AudioError(f"{path} has {len(content)} bytes, expected {expected} for {n_bins}x{n_frames}")
    values = np.frombuffer(content, dtype="<f8", offset=_HEADER.size).reshape(n_bins, n_frames, 2)
    return values[..., 0] + 1j * values[..., 1]


def _file_label(name: str) -> str:
    return name.replace("+", "plus").replace("*", "x")


def dump_spectrograms(directory: str, mixture, sources, estimates: Optional[Dict[str, np.ndarray]] = None) -> List[str]:
    """Writes mixture_<m>.spec, source_<k>.spec and <solver>_<k>.spec ('+' as 'plus', '*' as 'x') into directory."""
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as e:
        raise AudioError(f"cannot create {directory}: {e}")
    groups = [("mixture", mixture), ("source", sources)]
    groups.extend((_file_label(solver), stack) for solver, stack in (estimates or {}).items())
    paths = []
    for label, stack in groups:
        for index, spectrogram in enumerate(stack):
            path = os.path.join(directory, f"{label}_{index}.spec")
            write_spectrogram(path, spectrogram)
            paths.append(path)
    log.info("AUDIO: %d spectrograms written to %s", len(paths), directory)
    return paths


def synthetic_sources(k: int, cfg: StftConfig, rng: np.random.Generator,
                      duration_s: float = settings.SYNTHETIC_DURATION_S) -> np.ndarray:
    """K mono test signals (K, N): a linear chirp over lightly colored noise with a slow envelope.

    The noise floor keeps every bin of the spectrogram well above the skip threshold, so the
    separation error is dominated by the solver rather than by skipped bins.
    """
    if k < 1:
        raise InvalidArgumentError(f"K must be positive, got {k}")
    n_samples = int(round(duration_s * cfg.sample_rate))
    if n_samples < cfg.window_len:
        raise InvalidArgumentError(f"{duration_s} s is shorter than one analysis window")
    times = np.arange(n_samples) / cfg.sample_rate
    chirp_amplitude = math.sqrt(2.0 * 10.0 ** (settings.CHIRP_TO_NOISE_DB / 10.0))
    freq_low, freq_high = settings.CHIRP_FREQ_RANGE_HZ
    freq_high = min(freq_high, 0.45 * cfg.sample_rate)

    sources = np.empty((k, n_samples))
    for i in range(k):
        pole = rng.uniform(*settings.NOISE_POLE_RANGE)
        noise = sps.lfilter([1.0], [1.0, -pole], rng.standard_normal(n_samples))
        noise /= np.sqrt(np.mean(noise ** 2))
        start_hz, stop_hz = rng.uniform(freq_low, freq_high, size=2)
        tone = sps.chirp(times, f0=start_hz, t1=times[-1], f1=stop_hz, method="linear", phi=rng.uniform(0, 360))
        rate = rng.uniform(*settings.ENVELOPE_RATE_HZ)
        envelope = 1.0 - settings.ENVELOPE_DEPTH * (1.0 + np.sin(2 * math.pi * rate * times + rng.uniform(0, 2 * math.pi)))
        source = envelope * (noise + chirp_amplitude * tone)
        sources[i] = settings.SYNTHETIC_PEAK * source / np.max(np.abs(source))
    return sources
