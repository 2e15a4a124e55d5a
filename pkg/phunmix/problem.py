"""Phase unmixing problem model.

An instance is one noisy observation y = A s0 + n of K complex sources through an M x K mixing
matrix, together with the known source magnitudes b = |s0|. Everything here is pure and works on
numpy arrays; instances are frozen after validation.
"""
import math
import logging
import numpy as np
from dataclasses import dataclass, field
from typing import Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, field_validator

from phunmix import settings
from phunmix.errors import InvalidArgumentError, UnsupportedRegimeError
from phunmix.utils import make_rng

log = logging.getLogger(__name__)


def _as_vector(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.complex128)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise InvalidArgumentError(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


def has_full_rank(mixing: np.ndarray, rtol: float = settings.RANK_RTOL) -> bool:
    singular_values = np.linalg.svd(mixing, compute_uv=False)
    if singular_values.size == 0 or singular_values[0] == 0:
        return False
    return bool(singular_values[-1] > rtol * singular_values[0])


@dataclass(frozen=True)
class Instance:
    mixing: np.ndarray
    observation: np.ndarray
    magnitudes: np.ndarray
    ground_truth: Optional[np.ndarray] = None
    noise: Optional[np.ndarray] = None
    noise_stddev: Optional[float] = None

    def __post_init__(self):
        mixing = _as_matrix(self.mixing, "mixing")
        observation = _as_vector(self.observation, "observation")
        magnitudes = np.asarray(self.magnitudes, dtype=np.float64).reshape(-1)
        m, k = mixing.shape

        if observation.shape != (m,):
            raise InvalidArgumentError(f"observation has length {observation.size}, mixing has {m} rows")
        if magnitudes.shape != (k,):
            raise InvalidArgumentError(f"magnitudes has length {magnitudes.size}, mixing has {k} columns")
        if not np.all(np.isfinite(mixing)) or not np.all(np.isfinite(observation)):
            raise InvalidArgumentError("mixing and observation must be finite")
        if not np.all(magnitudes > 0):
            raise InvalidArgumentError("magnitudes must be strictly positive")
        if not has_full_rank(mixing):
            raise InvalidArgumentError(f"mixing matrix ({m}x{k}) is rank deficient")

        ground_truth = None
        if self.ground_truth is not None:
            ground_truth = _as_vector(self.ground_truth, "ground_truth")
            if ground_truth.shape != (k,):
                raise InvalidArgumentError("ground_truth length does not match mixing columns")
            if np.any(np.abs(np.abs(ground_truth) - magnitudes) > settings.GROUND_TRUTH_RTOL * magnitudes):
                raise InvalidArgumentError("ground_truth magnitudes disagree with magnitudes")

        noise = None
        if self.noise is not None:
            noise = _as_vector(self.noise, "noise")
            if noise.shape != (m,):
                raise InvalidArgumentError("noise length does not match mixing rows")

        if ground_truth is not None and noise is not None:
            mismatch = np.linalg.norm(observation - mixing @ ground_truth - noise)
            if mismatch > settings.MODEL_RTOL * np.linalg.norm(observation):
                raise InvalidArgumentError(f"observation differs from A s0 + n by {mismatch:.3e}")

        if self.noise_stddev is not None and not self.noise_stddev >= 0:
            raise InvalidArgumentError("noise_stddev must be nonnegative")

        object.__setattr__(self, "mixing", _frozen(mixing))
        object.__setattr__(self, "observation", _frozen(observation))
        object.__setattr__(self, "magnitudes", _frozen(magnitudes))
        object.__setattr__(self, "ground_truth", None if ground_truth is None else _frozen(ground_truth))
        object.__setattr__(self, "noise", None if noise is None else _frozen(noise))
        if self.noise_stddev is not None:
            object.__setattr__(self, "noise_stddev", float(self.noise_stddev))

    @property
    def m(self) -> int:
        return self.mixing.shape[0]

    @property
    def k(self) -> int:
        return self.mixing.shape[1]

    @property
    def is_determined(self) -> bool:
        return self.k <= self.m

    def is_feasible(self, estimate: np.ndarray, rtol: float = settings.MAGNITUDE_RTOL) -> bool:
        return bool(np.all(np.abs(np.abs(estimate) - self.magnitudes) <= rtol * self.magnitudes))


class GenerationSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    m: int = Field(ge=1)
    k: int = Field(ge=1)
    snr_db: float = math.inf
    sigma_a: Optional[float] = Field(default=None, gt=0)
    sigma_s: Optional[float] = Field(default=None, gt=0)
    seed: int = Field(default=0, ge=0, le=settings.MAX_SEED)

    @field_validator("snr_db")
    @classmethod
    def _finite_or_noiseless(cls, value):
        if math.isnan(value) or value == -math.inf:
            raise ValueError(f"invalid SNR {value}")
        return value

    @property
    def noiseless(self) -> bool:
        return math.isinf(self.snr_db) and self.snr_db > 0


@dataclass(frozen=True)
class SolverResult:
    estimate: np.ndarray
    residual: float
    residual_history: Tuple[float, ...]
    iterations: int
    converged: bool
    method_name: str
    flags: int = 0
    lower_bound: Optional[float] = None
    extra: dict = field(default_factory=dict)


def _check_system(mixing: np.ndarray, estimate: np.ndarray, observation: np.ndarray):
    if mixing.ndim != 2 or estimate.ndim != 1 or observation.ndim != 1:
        raise InvalidArgumentError("expected a matrix and two vectors")
    m, k = mixing.shape
    if estimate.shape[0] != k or observation.shape[0] != m:
        raise InvalidArgumentError(
            f"dimension mismatch: A is {m}x{k}, s has length {estimate.shape[0]}, y has length {observation.shape[0]}"
        )


def residual(mixing, estimate, observation) -> float:
    """||A s - y||^2 as a plain sum of squared moduli."""
    mixing = np.asarray(mixing, dtype=np.complex128)
    estimate = np.asarray(estimate, dtype=np.complex128)
    observation = np.asarray(observation, dtype=np.complex128)
    _check_system(mixing, estimate, observation)
    diff = mixing @ estimate - observation
    return float(np.sum(diff.real ** 2 + diff.imag ** 2))


def relative_error(estimate, reference) -> float:
    estimate = np.asarray(estimate, dtype=np.complex128)
    reference = np.asarray(reference, dtype=np.complex128)
    if estimate.shape != reference.shape:
        raise InvalidArgumentError(f"length mismatch: {estimate.shape} vs {reference.shape}")
    ref_energy = float(np.sum(np.abs(reference) ** 2))
    if ref_energy == 0:
        raise InvalidArgumentError("reference vector has zero norm")
    return float(np.sum(np.abs(estimate - reference) ** 2)) / ref_energy


def is_exact(estimate, reference) -> bool:
    return relative_error(estimate, reference) < settings.EXACT_THRESHOLD


def sample_complex_gaussian(sigma: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian draws with E|z|^2 = sigma^2 (sigma^2 / 2 per real component)."""
    if not sigma >= 0:
        raise InvalidArgumentError(f"sigma must be nonnegative, got {sigma}")
    if count < 0:
        raise InvalidArgumentError(f"count must be nonnegative, got {count}")
    scale = sigma / math.sqrt(2.0)
    real = rng.standard_normal(count)
    imag = rng.standard_normal(count)
    return scale * (real + 1j * imag)


def noise_stddev_for_snr(clean_energy: float, m: int, snr_db: float) -> float:
    """sigma_n such that ||A s0||^2 / (M sigma_n^2) equals the requested SNR."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return math.sqrt(clean_energy / (m * 10.0 ** (snr_db / 10.0)))


def _draw_sigma(value: Optional[float], rng: np.random.Generator) -> float:
    if value is not None:
        return value
    low, high = settings.SIGMA_RANGE
    sigma = rng.uniform(low, high)
    while sigma <= 0:
        sigma = rng.uniform(low, high)
    return float(sigma)


def generate_instance(spec: GenerationSpec, rng: Optional[np.random.Generator] = None) -> Instance:
    """Draws one instance; without rng the draws come from a PCG64 stream seeded with spec.seed."""
    if rng is None:
        rng = make_rng(spec.seed)
    sigma_a = _draw_sigma(spec.sigma_a, rng)
    sigma_s = _draw_sigma(spec.sigma_s, rng)

    mixing = sample_complex_gaussian(sigma_a, spec.m * spec.k, rng).reshape(spec.m, spec.k)
    redraws = 0
    while not has_full_rank(mixing):
        redraws += 1
        mixing = sample_complex_gaussian(sigma_a, spec.m * spec.k, rng).reshape(spec.m, spec.k)
    if redraws:
        log.debug("GENERATE: mixing matrix redrawn %d times for rank", redraws)

    sources = sample_complex_gaussian(sigma_s, spec.k, rng)
    zero = sources == 0
    while np.any(zero):
        sources[zero] = sample_complex_gaussian(sigma_s, int(zero.sum()), rng)
        zero = sources == 0

    clean = mixing @ sources
    sigma_n = noise_stddev_for_snr(float(np.sum(np.abs(clean) ** 2)), spec.m, spec.snr_db)
    if sigma_n > 0:
        noise = sample_complex_gaussian(sigma_n, spec.m, rng)
    else:
        noise = np.zeros(spec.m, dtype=np.complex128)

    return Instance(
        mixing=mixing,
        observation=clean + noise,
        magnitudes=np.abs(sources),
        ground_truth=sources,
        noise=noise,
        noise_stddev=sigma_n,
    )


def least_squares(mixing, observation) -> np.ndarray:
    mixing = _as_matrix(mixing, "mixing")
    observation = _as_vector(observation, "observation")
    m, k = mixing.shape
    if k > m:
        raise UnsupportedRegimeError(f"least squares has infinitely many solutions when K ({k}) > M ({m})")
    if observation.shape != (m,):
        raise InvalidArgumentError(f"observation has length {observation.size}, mixing has {m} rows")
    solution, *_ = np.linalg.lstsq(mixing, observation, rcond=None)
    return solution


def normalize_magnitudes(estimate, magnitudes) -> Tuple[np.ndarray, int]:
    """Keeps the phases of estimate and sets its moduli to magnitudes; zero entries get phase 0.

    Returns the rescaled vector and the number of zero entries.
    """
    estimate = np.asarray(estimate, dtype=np.complex128)
    magnitudes = np.asarray(magnitudes, dtype=np.float64)
    moduli = np.abs(estimate)
    zero = moduli == 0
    phase = np.ones_like(estimate)
    np.divide(estimate, moduli, out=phase, where=~zero)
    return magnitudes * phase, int(zero.sum())
