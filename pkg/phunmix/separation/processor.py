"""Informed separation: every time-frequency bin is one phase unmixing problem.

All bins are solved together as one stack. Inactive sources of a bin become zero columns of its
mixing matrix, which removes them from the problem without changing the stack shape.
"""
import math
import time
import logging
import numpy as np
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from phunmix import settings as core_settings
from phunmix.errors import InvalidArgumentError, UnsupportedRegimeError
from phunmix.lifting import BcdConfig, bcd_batch, extract_phases, normalized_costs
from phunmix.problem import normalize_magnitudes, sample_complex_gaussian
from phunmix.solvers import (
    AltConfig, CONSTRAINED_SOLVERS, alternate_batch, random_phase_init, validate_solver_names,
    wiener_batch, wiener_sigma_batch,
)
from phunmix.utils import derive_seed, make_rng
from . import settings
from .audio import dump_spectrograms
from .metrics import sdr
from .mixing import MixSpec, mix_stft, mixing_stack, random_mix_spec
from .stft import StftConfig, istft, stft

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeparationRow:
    solver: str
    m: int
    k: int
    mean_sdr: float
    source_sdrs: Tuple[float, ...]
    wall_time_ms: float


def active_mask(magnitudes: np.ndarray, threshold_db: float = settings.THRESHOLD_DB) -> np.ndarray:
    """Bins where a source is within threshold_db of its own spectrogram peak (K, F, T)."""
    peaks = magnitudes.reshape(magnitudes.shape[0], -1).max(axis=1)
    floor = peaks * 10.0 ** (threshold_db / 20.0)
    return (magnitudes > floor[:, None, None]) & (magnitudes > 0)


def _alternate(mixing, observation, magnitudes, init, alt_cfg: AltConfig) -> Tuple[np.ndarray, np.ndarray]:
    state = alternate_batch(mixing, observation, magnitudes, init, alt_cfg)
    final = np.array([history[-1] for history in state.histories])
    if not state.converged.all():
        log.debug("SEPARATE: %d bins hit the phunalt iteration cap", int((~state.converged).sum()))
    return state.estimates, final


def _lift(mixing, observation, magnitudes, bcd_cfg: BcdConfig) -> np.ndarray:
    state = bcd_batch(normalized_costs(mixing, observation, magnitudes), bcd_cfg)
    estimates, degenerate = extract_phases(state.x_mats, magnitudes)
    log.debug("SEPARATE: BCD took up to %d sweeps, %d zero lifted entries", int(state.sweeps.max()), int(degenerate.sum()))
    return estimates


def _solve_bins(solver: str, mixing: np.ndarray, observation: np.ndarray, magnitudes: np.ndarray,
                rng: np.random.Generator, alt_cfg: AltConfig, bcd_cfg: BcdConfig,
                init: Optional[np.ndarray], noise_stddev: Optional[float]) -> np.ndarray:
    if solver == "rand":
        return random_phase_init(magnitudes, rng)
    if solver == "ls":
        return np.einsum("bkm,bm->bk", np.linalg.pinv(mixing), observation)
    if solver in ("mwf", "nmwf", "nmwf+"):
        raw = wiener_batch(mixing, observation, magnitudes, wiener_sigma_batch(observation, noise_stddev))
        if solver == "mwf":
            return raw
        normalized, _ = normalize_magnitudes(raw, magnitudes)
        if solver == "nmwf":
            return normalized
        return _alternate(mixing, observation, magnitudes, normalized, alt_cfg)[0]
    if solver == "phunalt":
        start = init if init is not None else random_phase_init(magnitudes, rng)
        return _alternate(mixing, observation, magnitudes, start, alt_cfg)[0]
    if solver == "phunalt*5":
        best, best_value = None, None
        for _ in range(core_settings.MULTISTART_RUNS):
            estimates, final = _alternate(mixing, observation, magnitudes, random_phase_init(magnitudes, rng), alt_cfg)
            if best is None:
                best, best_value = estimates, final
                continue
            better = final < best_value
            best[better], best_value[better] = estimates[better], final[better]
        return best
    lifted = _lift(mixing, observation, magnitudes, bcd_cfg)
    if solver == "phunlift":
        return lifted
    return _alternate(mixing, observation, magnitudes, lifted, alt_cfg)[0]


def separate(mixture, mix: MixSpec, magnitudes, solver_name: str,
             threshold_db: float = settings.THRESHOLD_DB, seed: int = 0,
             alt_cfg: AltConfig = AltConfig(), bcd_cfg: BcdConfig = BcdConfig(),
             init=None, noise_stddev: Optional[float] = None) -> np.ndarray:
    """Estimates K source spectrograms (K, F, T) from M mixture spectrograms and the source magnitudes.

    Sources below threshold_db in a bin get a random phase and are left out of that bin's problem;
    init, when given, is a (K, F, T) spectrogram whose phases start 'phunalt'. Every solver except
    'mwf' and 'ls' returns the given magnitudes; those two are unconstrained estimates and keep
    their own magnitudes in active bins.
    """
    validate_solver_names([solver_name])
    mixture = np.asarray(mixture, dtype=np.complex128)
    magnitudes = np.asarray(magnitudes, dtype=np.float64)
    if mixture.ndim != 3 or magnitudes.ndim != 3:
        raise InvalidArgumentError("mixture and magnitudes must be stacks of (F, T) spectrograms")
    m, n_bins, n_frames = mixture.shape
    k = magnitudes.shape[0]
    if (mix.m, mix.k) != (m, k) or magnitudes.shape[1:] != (n_bins, n_frames):
        raise InvalidArgumentError(
            f"mix is {mix.m}x{mix.k}, mixture is {mixture.shape}, magnitudes are {magnitudes.shape}"
        )
    if np.any(magnitudes < 0):
        raise InvalidArgumentError("magnitudes must be nonnegative")
    if solver_name == "ls" and k > m:
        raise UnsupportedRegimeError(f"least squares needs K <= M, got M={m}, K={k}")

    # Bins are flattened in (f, t) order; the stack index is f * T + t.
    active = np.moveaxis(active_mask(magnitudes, threshold_db), 0, -1).reshape(-1, k)
    true_magnitudes = np.moveaxis(magnitudes, 0, -1).reshape(-1, k)
    observation = np.moveaxis(mixture, 0, -1).reshape(-1, m)
    stack = np.repeat(mixing_stack(mix, n_bins), n_frames, axis=0) * active[:, None, :]
    solve_magnitudes = np.where(active, true_magnitudes, 1.0)

    rng = make_rng(derive_seed(seed, "separate"))
    skipped_phases = random_phase_init(true_magnitudes, rng)
    start = None
    if init is not None:
        init = np.asarray(init, dtype=np.complex128)
        if init.shape != magnitudes.shape:
            raise InvalidArgumentError(f"init has shape {init.shape}, expected {magnitudes.shape}")
        start, _ = normalize_magnitudes(np.moveaxis(init, 0, -1).reshape(-1, k), solve_magnitudes)

    log.debug("SEPARATE: %s on %d bins, %d of %d source coefficients active",
              solver_name, active.shape[0], int(active.sum()), active.size)
    estimates = _solve_bins(solver_name, stack, observation, solve_magnitudes, rng, alt_cfg, bcd_cfg, start, noise_stddev)
    if solver_name in CONSTRAINED_SOLVERS:
        estimates, _ = normalize_magnitudes(estimates, true_magnitudes)
    output = np.where(active, estimates, skipped_phases)
    return np.moveaxis(output.reshape(n_bins, n_frames, k), -1, 0)


def add_stft_noise(mixture: np.ndarray, snr_db: float, rng: np.random.Generator) -> Tuple[np.ndarray, float]:
    """White complex noise over the whole mixture at ||y||^2 / (M F T sigma_n^2) = SNR."""
    if math.isinf(snr_db) and snr_db > 0:
        return mixture, 0.0
    energy = float(np.sum(np.abs(mixture) ** 2))
    sigma_n = math.sqrt(energy / (mixture.size * 10.0 ** (snr_db / 10.0)))
    noise = sample_complex_gaussian(sigma_n, mixture.size, rng).reshape(mixture.shape)
    return mixture + noise, sigma_n


def run_separation(sources: np.ndarray, m: int, solvers: Sequence[str], seed: int,
                   cfg: StftConfig = StftConfig(), threshold_db: float = settings.THRESHOLD_DB,
                   snr_db: float = math.inf, alt_cfg: AltConfig = AltConfig(),
                   bcd_cfg: BcdConfig = BcdConfig(), dump_dir: Optional[str] = None) -> List[SeparationRow]:
    """Mixes K time signals (K, N) into M channels with a random MixSpec and scores every solver by SDR.

    With dump_dir, the mixture, source and estimated spectrograms are also written there.
    """
    solvers = validate_solver_names(solvers)
    sources = np.asarray(sources, dtype=np.float64)
    if sources.ndim != 2:
        raise InvalidArgumentError(f"expected K signals of equal length, got shape {sources.shape}")
    k, length = sources.shape
    if "ls" in solvers and k > m:
        raise UnsupportedRegimeError(f"least squares needs K <= M, got M={m}, K={k}")

    spectra = np.stack([stft(source, cfg) for source in sources])
    mix = random_mix_spec(m, k, cfg.bins, make_rng(derive_seed(seed, "mix")))
    mixture, sigma_n = add_stft_noise(mix_stft(spectra, mix), snr_db, make_rng(derive_seed(seed, "noise")))
    magnitudes = np.abs(spectra)
    references = [istft(spectrum, cfg, length) for spectrum in spectra]
    log.info("SEPARATE: M=%d, K=%d, %d bins x %d frames, sigma_n=%.3g", m, k, cfg.bins, spectra.shape[2], sigma_n)

    rows = []
    estimated = {}
    for solver in solvers:
        started = time.perf_counter()
        estimates = separate(mixture, mix, magnitudes, solver, threshold_db, seed, alt_cfg, bcd_cfg,
                             noise_stddev=sigma_n or None)
        elapsed_ms = 1000.0 * (time.perf_counter() - started)
        scores = tuple(sdr(istft(estimates[i], cfg, length), references[i]) for i in range(k))
        rows.append(SeparationRow(solver, m, k, float(np.mean(scores)), scores, elapsed_ms))
        if dump_dir:
            estimated[solver] = estimates
        log.info("SEPARATE: %s mean SDR %.2f dB in %.0f ms", solver, rows[-1].mean_sdr, elapsed_ms)
    if dump_dir:
        dump_spectrograms(dump_dir, mixture, spectra, estimated)
    return rows
