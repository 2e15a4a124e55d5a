"""Short-time Fourier transform with F = W/2 complex bins per frame.

The DC and Nyquist coefficients of a real frame are both real, so the Nyquist value is carried in
the imaginary part of bin 0. The packing is real-linear, which is all the mixing model needs since
the mixing matrix of bin 0 is real. Signals are zero-padded by W - hop at both ends (the end gets
fewer than a hop more) so that every sample is covered by W/hop frames; synthesis is weighted overlap-add.
"""
import logging
import numpy as np
from typing import Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import signal as sps

from phunmix.errors import InvalidArgumentError
from . import settings

log = logging.getLogger(__name__)


class StftConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    sample_rate: int = Field(default=settings.SAMPLE_RATE, gt=0)
    window_len: int = Field(default=settings.WINDOW_LEN, ge=4)
    hop: int = Field(default=settings.HOP, ge=1)
    window: str = settings.WINDOW

    @model_validator(mode="after")
    def _check_overlap(self):
        if self.window_len % 2:
            raise ValueError(f"window_len must be even, got {self.window_len}")
        if self.hop > self.window_len or self.window_len % self.hop:
            raise ValueError(f"hop {self.hop} must divide window_len {self.window_len}")
        if not sps.check_COLA(self.window_values(), self.window_len, self.window_len - self.hop, tol=settings.COLA_TOL):
            raise ValueError(f"window '{self.window}' with hop {self.hop} is not constant overlap-add")
        return self

    @property
    def bins(self) -> int:
        return self.window_len // 2

    def window_values(self) -> np.ndarray:
        # get_window returns the periodic variant, which is the COLA one.
        return sps.get_window(self.window, self.window_len)

    def padding(self, length: int) -> Tuple[int, int]:
        """Zeros added before and after a signal of this length so every sample sits under W/hop frames."""
        edge = self.window_len - self.hop
        return edge, edge + (-length) % self.hop

    def frame_count(self, length: int) -> int:
        if length < self.window_len:
            return 0
        before, after = self.padding(length)
        return 1 + (before + length + after - self.window_len) // self.hop


def stft(samples, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """(F, T) complex spectrogram of a real mono signal, framed over the zero-padded signal."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise InvalidArgumentError(f"expected a mono signal, got shape {samples.shape}")
    if samples.shape[0] < cfg.window_len:
        raise InvalidArgumentError(f"signal of {samples.shape[0]} samples is shorter than one window ({cfg.window_len})")

    padded = np.pad(samples, cfg.padding(samples.shape[0]))
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.window_len)[::cfg.hop]
    spectra = np.fft.rfft(frames * cfg.window_values(), axis=1)
    packed = spectra[:, :cfg.bins].copy()
    packed[:, 0] = spectra[:, 0].real + 1j * spectra[:, cfg.bins].real
    return packed.T


def istft(spectrogram, cfg: StftConfig = StftConfig(), length: Optional[int] = None) -> np.ndarray:
    """Inverse of stft by weighted overlap-add, with the leading padding removed; length pads or trims the output."""
    spectrogram = np.asarray(spectrogram, dtype=np.complex128)
    if spectrogram.ndim != 2 or spectrogram.shape[0] != cfg.bins:
        raise InvalidArgumentError(f"expected a ({cfg.bins}, T) spectrogram, got shape {spectrogram.shape}")
    n_frames = spectrogram.shape[1]
    if n_frames == 0:
        raise InvalidArgumentError("spectrogram has no frames")

    full = np.zeros((n_frames, cfg.bins + 1), dtype=np.complex128)
    full[:, :cfg.bins] = spectrogram.T
    full[:, 0] = spectrogram[0].real
    full[:, cfg.bins] = spectrogram[0].imag
    frames = np.fft.irfft(full, n=cfg.window_len, axis=1)

    window = cfg.window_values()
    total = (n_frames - 1) * cfg.hop + cfg.window_len
    output = np.zeros(total)
    envelope = np.zeros(total)
    for t in range(n_frames):
        start = t * cfg.hop
        output[start:start + cfg.window_len] += frames[t] * window
        envelope[start:start + cfg.window_len] += window ** 2
    # Samples under fewer than W/hop frames only exist in the padding.
    edge = cfg.window_len - cfg.hop
    covered = envelope > settings.ENVELOPE_RTOL * envelope.max()
    output[covered] /= envelope[covered]
    output[~covered] = 0.0
    output = output[edge:max(edge, total - edge)]

    if length is not None:
        if length < 0:
            raise InvalidArgumentError(f"length must be nonnegative, got {length}")
        if length <= output.shape[0]:
            output = output[:length]
        else:
            output = np.concatenate([output, np.zeros(length - output.shape[0])])
    return output
