"""Wiener and alternated-minimization solvers, plus the label registry used by the bench and CLI."""
import math
import logging
import numpy as np
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field

from phunmix import settings
from phunmix.errors import ConfigError, InvalidArgumentError
from phunmix.lifting import BcdConfig, phunlift
from phunmix.problem import Instance, SolverResult, least_squares, normalize_magnitudes, residual

log = logging.getLogger(__name__)

SOLVERS: Dict[str, str] = {
    "ls": "least squares A^+ y (K <= M only)",
    "mwf": "multichannel Wiener filter",
    "nmwf": "Wiener filter rescaled to the known magnitudes",
    "nmwf+": "phunalt warm-started at nmwf",
    "phunalt": "coordinate descent from random phases",
    "phunalt*5": "best of 5 random-start phunalt runs",
    "phunlift": "SDP relaxation solved by block-coordinate descent",
    "phunlift+": "phunalt warm-started at phunlift",
    "rand": "random phases with the known magnitudes",
}
SOLVER_NAMES = tuple(SOLVERS)
# Labels whose output satisfies |s_k| = b_k.
CONSTRAINED_SOLVERS = frozenset({"nmwf", "nmwf+", "phunalt", "phunalt*5", "phunlift", "phunlift+", "rand"})


class AltConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    tol: float = Field(default=settings.ALT_TOL, gt=0)
    max_iter: int = Field(default=settings.ALT_MAX_ITER, ge=1)


def wiener_batch(mixing: np.ndarray, observation: np.ndarray, magnitudes: np.ndarray,
                 sigma_n: np.ndarray, form: Optional[str] = None) -> np.ndarray:
    """MAP estimates for a stack of problems: mixing (B, M, K), observation (B, M), magnitudes (B, K).

    form="direct" solves (sigma_n^2 D(b)^-2 + A^H A) s = A^H y (K x K system), form="dual" computes
    D(b)^2 A^H (A D(b)^2 A^H + sigma_n^2 I)^-1 y (M x M system). Both are valid for any shape when
    sigma_n > 0; by default the smaller system is used. A zero column of A yields a zero estimate.
    """
    sigma_n = np.broadcast_to(np.asarray(sigma_n, dtype=np.float64), mixing.shape[:1])
    if not np.all(sigma_n > 0):
        raise InvalidArgumentError("sigma_n must be positive")
    _, m, k = mixing.shape
    if form is None:
        form = "direct" if k <= m else "dual"
    variances = magnitudes ** 2
    noise_power = (sigma_n ** 2)[:, None, None]
    mixing_h = np.conj(np.swapaxes(mixing, 1, 2))
    if form == "direct":
        system = noise_power * (np.eye(k) / variances[:, None, :]) + mixing_h @ mixing
        rhs = np.einsum("bkm,bm->bk", mixing_h, observation)
        return np.linalg.solve(system, rhs[..., None])[..., 0]
    if form == "dual":
        covariance = (mixing * variances[:, None, :]) @ mixing_h + noise_power * np.eye(m)
        weights = np.linalg.solve(covariance, observation[..., None])[..., 0]
        return variances * np.einsum("bkm,bm->bk", mixing_h, weights)
    raise InvalidArgumentError(f"unknown Wiener form '{form}'")


def wiener_estimate(mixing: np.ndarray, observation: np.ndarray, magnitudes: np.ndarray,
                    sigma_n: float, form: Optional[str] = None) -> np.ndarray:
    """Single-instance wrapper of wiener_batch."""
    if not sigma_n > 0:
        raise InvalidArgumentError(f"sigma_n must be positive, got {sigma_n}")
    return wiener_batch(np.asarray(mixing, dtype=np.complex128)[None],
                        np.asarray(observation, dtype=np.complex128)[None],
                        np.asarray(magnitudes, dtype=np.float64)[None],
                        np.array([sigma_n], dtype=np.float64), form)[0]


def _closed_form_result(instance: Instance, estimate: np.ndarray, name: str, flags: int = 0) -> SolverResult:
    value = residual(instance.mixing, estimate, instance.observation)
    return SolverResult(
        estimate=estimate,
        residual=value,
        residual_history=(value,),
        iterations=0,
        converged=True,
        method_name=name,
        flags=flags,
    )


def mwf(instance: Instance, sigma_n: float) -> SolverResult:
    estimate = wiener_estimate(instance.mixing, instance.observation, instance.magnitudes, sigma_n)
    return _closed_form_result(instance, estimate, "mwf")


def nmwf(instance: Instance, sigma_n: float) -> SolverResult:
    raw = wiener_estimate(instance.mixing, instance.observation, instance.magnitudes, sigma_n)
    estimate, zeros = normalize_magnitudes(raw, instance.magnitudes)
    return _closed_form_result(instance, estimate, "nmwf", flags=zeros)


def coordinate_update(mixing: np.ndarray, observation: np.ndarray, magnitudes: np.ndarray,
                      estimate: np.ndarray, i: int) -> Tuple[complex, bool]:
    """Exact minimizer of ||A s - y||^2 over s_i with |s_i| = b_i, other coordinates fixed.

    Returns (value, degenerate); when a_i^H (y - A_{:,ic} s_ic) is zero the current s_i is kept.
    """
    column = mixing[:, i]
    deflated = observation - mixing @ estimate + column * estimate[i]
    inner = np.vdot(column, deflated)
    if inner == 0:
        return complex(estimate[i]), True
    return complex(magnitudes[i] * inner / abs(inner)), False


def phunalt_update(instance: Instance, estimate, i: int) -> complex:
    estimate = np.asarray(estimate, dtype=np.complex128)
    if not 0 <= i < instance.k:
        raise InvalidArgumentError(f"coordinate {i} out of range for K={instance.k}")
    value, degenerate = coordinate_update(instance.mixing, instance.observation, instance.magnitudes, estimate, i)
    if degenerate:
        log.debug("PHUNALT: degenerate update at coordinate %d, value kept", i)
    return value


@dataclass
class AltBatchState:
    estimates: np.ndarray
    histories: List[List[float]]
    sweeps: np.ndarray
    converged: np.ndarray
    degenerate: np.ndarray


def alternate_batch(mixing: np.ndarray, observation: np.ndarray, magnitudes: np.ndarray,
                    init: np.ndarray, cfg: AltConfig = AltConfig()) -> AltBatchState:
    """Cyclic coordinate descent over a stack of problems; each one stops on its own criterion.

    mixing is (B, M, K), observation (B, M), magnitudes and init (B, K). A coordinate whose column
    of A is zero is never updated, so a zero column removes that source from the problem.
    """
    batch, _, k = mixing.shape
    estimates = np.array(init, dtype=np.complex128)
    current = observation - np.einsum("bmk,bk->bm", mixing, estimates)
    histories: List[List[float]] = [[] for _ in range(batch)]
    previous = np.full(batch, np.inf)
    running = np.ones(batch, dtype=bool)
    converged = np.zeros(batch, dtype=bool)
    sweeps = np.zeros(batch, dtype=np.int64)
    degenerate = np.zeros(batch, dtype=np.int64)

    for sweep in range(1, cfg.max_iter + 1):
        idx = np.flatnonzero(running)
        if idx.size == 0:
            break
        block, s, r, b = mixing[idx], estimates[idx], current[idx], magnitudes[idx]
        for i in range(k):
            column = block[:, :, i]
            deflated = r + column * s[:, i, None]
            inner = np.sum(column.conj() * deflated, axis=1)
            moduli = np.abs(inner)
            ok = moduli > 0
            degenerate[idx[~ok]] += 1
            s[ok, i] = b[ok, i] * inner[ok] / moduli[ok]
            r = deflated - column * s[:, i, None]

        r = observation[idx] - np.einsum("bmk,bk->bm", block, s)
        values = np.sum(r.real ** 2 + r.imag ** 2, axis=1)
        estimates[idx], current[idx], sweeps[idx] = s, r, sweep
        for j, value in zip(idx, values):
            histories[j].append(float(value))
        with np.errstate(divide="ignore", invalid="ignore"):
            done = (values == 0) | ((previous[idx] - values) / values < cfg.tol)
        converged[idx[done]] = True
        running[idx[done]] = False
        previous[idx] = values

    return AltBatchState(estimates, histories, sweeps, converged, degenerate)


def phunalt(instance: Instance, init, cfg: AltConfig = AltConfig()) -> SolverResult:
    estimate = np.array(init, dtype=np.complex128)
    if estimate.shape != (instance.k,):
        raise InvalidArgumentError(f"init has shape {estimate.shape}, expected ({instance.k},)")
    if not instance.is_feasible(estimate):
        raise InvalidArgumentError("init magnitudes differ from the instance magnitudes")

    state = alternate_batch(instance.mixing[None], instance.observation[None],
                            instance.magnitudes[None], estimate[None], cfg)
    degenerate_updates = int(state.degenerate[0])
    if degenerate_updates:
        log.debug("PHUNALT: %d degenerate coordinate updates", degenerate_updates)
    history = state.histories[0]
    return SolverResult(
        estimate=state.estimates[0],
        residual=history[-1],
        residual_history=tuple(history),
        iterations=int(state.sweeps[0]),
        converged=bool(state.converged[0]),
        method_name="phunalt",
        flags=degenerate_updates,
    )


def random_phase_init(magnitudes, rng: np.random.Generator) -> np.ndarray:
    magnitudes = np.asarray(magnitudes, dtype=np.float64)
    angles = rng.uniform(0.0, 2.0 * math.pi, size=magnitudes.shape)
    return magnitudes * np.exp(1j * angles)


def multistart_phunalt(instance: Instance, n_starts: int = settings.MULTISTART_RUNS,
                       cfg: AltConfig = AltConfig(), rng: Optional[np.random.Generator] = None) -> SolverResult:
    if n_starts < 1:
        raise InvalidArgumentError(f"n_starts must be at least 1, got {n_starts}")
    rng = rng if rng is not None else np.random.default_rng()
    best: Optional[SolverResult] = None
    total_iterations = 0
    for _ in range(n_starts):
        run = phunalt(instance, random_phase_init(instance.magnitudes, rng), cfg)
        total_iterations += run.iterations
        if best is None or run.residual < best.residual:
            best = run
    return SolverResult(
        estimate=best.estimate,
        residual=best.residual,
        residual_history=best.residual_history,
        iterations=best.iterations,
        converged=best.converged,
        method_name=f"phunalt*{n_starts}",
        flags=best.flags,
        extra={"total_iterations": total_iterations},
    )


def chain(first_solver: Callable[[Instance], SolverResult], instance: Instance,
          cfg: AltConfig = AltConfig()) -> SolverResult:
    """Runs phunalt warm-started at the first solver's estimate (magnitudes reset to b first)."""
    first = first_solver(instance)
    init, _ = normalize_magnitudes(first.estimate, instance.magnitudes)
    refined = phunalt(instance, init, cfg)
    return SolverResult(
        estimate=refined.estimate,
        residual=refined.residual,
        residual_history=refined.residual_history,
        iterations=refined.iterations,
        converged=refined.converged,
        method_name=f"{first.method_name}+",
        flags=first.flags + refined.flags,
        lower_bound=first.lower_bound,
        extra={"first_stage_residual": first.residual, "first_stage_iterations": first.iterations},
    )


def wiener_sigma_batch(observation: np.ndarray, noise_stddev: Optional[float] = None) -> np.ndarray:
    """Per-problem noise level for a (B, M) observation stack: the given sigma_n, or a tiny floor."""
    if noise_stddev is not None and noise_stddev > 0:
        return np.full(observation.shape[0], float(noise_stddev))
    rms = np.linalg.norm(observation, axis=1) / math.sqrt(observation.shape[1])
    return np.maximum(settings.NOISELESS_WIENER_SIGMA_RTOL * rms, settings.NOISELESS_WIENER_SIGMA_FLOOR)


def wiener_sigma(instance: Instance) -> float:
    """Noise level handed to the Wiener solvers: the true sigma_n, or a tiny floor for noiseless instances."""
    return float(wiener_sigma_batch(instance.observation[None], instance.noise_stddev)[0])


def validate_solver_names(names) -> Tuple[str, ...]:
    unknown = [name for name in names if name not in SOLVER_NAMES]
    if unknown:
        raise ConfigError(f"unknown solver(s): {', '.join(unknown)}; expected one of {', '.join(SOLVER_NAMES)}")
    return tuple(names)


def run_solver(name: str, instance: Instance, rng: np.random.Generator,
               alt_cfg: AltConfig = AltConfig(), bcd_cfg: BcdConfig = BcdConfig(),
               init: Optional[np.ndarray] = None) -> SolverResult:
    """Dispatches a solver by its report label; init overrides the random start of 'phunalt'."""
    if name == "ls":
        estimate = least_squares(instance.mixing, instance.observation)
        return _closed_form_result(instance, estimate, "ls")
    if name == "mwf":
        return mwf(instance, wiener_sigma(instance))
    if name == "nmwf":
        return nmwf(instance, wiener_sigma(instance))
    if name == "nmwf+":
        return chain(lambda inst: nmwf(inst, wiener_sigma(inst)), instance, alt_cfg)
    if name == "phunalt":
        start = init if init is not None else random_phase_init(instance.magnitudes, rng)
        return phunalt(instance, start, alt_cfg)
    if name == "phunalt*5":
        return multistart_phunalt(instance, settings.MULTISTART_RUNS, alt_cfg, rng)
    if name == "phunlift":
        return phunlift(instance, bcd_cfg)
    if name == "phunlift+":
        return chain(lambda inst: phunlift(inst, bcd_cfg), instance, alt_cfg)
    if name == "rand":
        return _closed_form_result(instance, random_phase_init(instance.magnitudes, rng), "rand")
    raise ConfigError(f"unknown solver '{name}'")

