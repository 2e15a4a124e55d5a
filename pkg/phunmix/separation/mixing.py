import logging
import numpy as np
from dataclasses import dataclass

from phunmix.errors import InvalidArgumentError
from . import settings

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MixSpec:
    """Per (channel, source) gain in dB and integer delay in samples."""
    gains_db: np.ndarray
    delays: np.ndarray

    def __post_init__(self):
        gains = np.array(self.gains_db, dtype=np.float64)
        delays = np.asarray(self.delays)
        if gains.ndim != 2 or gains.shape != delays.shape:
            raise InvalidArgumentError(f"gains {gains.shape} and delays {delays.shape} must be matching M x K matrices")
        if not np.all(np.isfinite(gains)):
            raise InvalidArgumentError("gains must be finite")
        if not np.all(np.equal(np.mod(delays, 1), 0)):
            raise InvalidArgumentError("delays must be whole samples")
        gains.setflags(write=False)
        delays = delays.astype(np.int64)
        delays.setflags(write=False)
        object.__setattr__(self, "gains_db", gains)
        object.__setattr__(self, "delays", delays)

    @property
    def m(self) -> int:
        return self.gains_db.shape[0]

    @property
    def k(self) -> int:
        return self.gains_db.shape[1]


def mixing_matrix(mix: MixSpec, f: int, n_bins: int) -> np.ndarray:
    """A_f(m, k) = 10^(g(m, k) / 20) exp(j tau(m, k) f / F)."""
    if not 0 <= f < n_bins:
        raise InvalidArgumentError(f"bin {f} out of range for F={n_bins}")
    return 10.0 ** (mix.gains_db / 20.0) * np.exp(1j * mix.delays * (f / n_bins))


def mixing_stack(mix: MixSpec, n_bins: int) -> np.ndarray:
    """All F mixing matrices at once, shape (F, M, K)."""
    if n_bins < 1:
        raise InvalidArgumentError(f"F must be positive, got {n_bins}")
    phase = np.arange(n_bins)[:, None, None] / n_bins
    return 10.0 ** (mix.gains_db / 20.0)[None] * np.exp(1j * mix.delays[None] * phase)


def has_full_rank_everywhere(mix: MixSpec, n_bins: int, rtol: float = settings.MIX_RANK_RTOL) -> bool:
    singular_values = np.linalg.svd(mixing_stack(mix, n_bins), compute_uv=False)
    return bool(np.all(singular_values[:, -1] > rtol * singular_values[:, 0]))


def random_mix_spec(m: int, k: int, n_bins: int, rng: np.random.Generator) -> MixSpec:
    """Gains uniform in dB and delays uniform in whole samples, redrawn until every A_f has full rank."""
    if m < 1 or k < 1:
        raise InvalidArgumentError(f"M and K must be positive, got M={m}, K={k}")
    gain_low, gain_high = settings.GAIN_RANGE_DB
    delay_low, delay_high = settings.DELAY_RANGE
    for attempt in range(1, settings.MAX_MIX_REDRAWS + 1):
        mix = MixSpec(
            gains_db=rng.uniform(gain_low, gain_high, size=(m, k)),
            delays=rng.integers(delay_low, delay_high, size=(m, k), endpoint=True),
        )
        if has_full_rank_everywhere(mix, n_bins):
            if attempt > 1:
                log.debug("MIX: spec redrawn %d times for rank", attempt - 1)
            return mix
    raise InvalidArgumentError(f"no full-rank {m}x{k} mix found in {settings.MAX_MIX_REDRAWS} draws")


def mix_stft(sources, mix: MixSpec) -> np.ndarray:
    """Mixes K spectrograms (K, F, T) into M spectrograms (M, F, T), y = A_f s in every bin."""
    sources = np.asarray(sources, dtype=np.complex128)
    if sources.ndim != 3 or sources.shape[0] != mix.k:
        raise InvalidArgumentError(f"expected {mix.k} spectrograms of shape (F, T), got {sources.shape}")
    stack = mixing_stack(mix, sources.shape[1])
    return np.einsum("fmk,kft->mft", stack, sources)
