"""Semidefinite relaxation of phase least-squares and its block-coordinate descent solver.

With x = [s; 1] and C = [A, -y]^H [A, -y] we have ||A s - y||^2 = trace(C x x^H). Dropping the
rank-one constraint on X = x x^H leaves: minimize trace(C X) subject to diag(X) = [b^2, 1] and
X PSD. The solver always works on the normalized problem (unit diagonal target), which keeps the
identity matrix feasible as a starting point and leaves the phases of X[:K, K] unchanged.
"""
import math
import logging
import numpy as np
from dataclasses import dataclass, field
from typing import List, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field

from phunmix import settings
from phunmix.errors import InvalidArgumentError, UnsupportedRegimeError
from phunmix.problem import Instance, SolverResult, residual

log = logging.getLogger(__name__)


class BcdConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    nu: float = Field(default=settings.BCD_NU, ge=0, lt=1)
    tol: float = Field(default=settings.BCD_TOL, gt=0)
    max_iter: int = Field(default=settings.BCD_MAX_ITER, ge=1)
    check_psd: bool = False
    trace_path: Optional[str] = None


@dataclass(frozen=True)
class LiftedProblem:
    cost: np.ndarray
    diag_target: np.ndarray
    k: int

    @property
    def is_normalized(self) -> bool:
        return bool(np.all(self.diag_target == 1.0))


@dataclass
class LiftedIterate:
    x_mat: np.ndarray
    objective_history: List[float] = field(default_factory=list)
    sweeps: int = 0
    converged: bool = False
    min_eigenvalues: List[float] = field(default_factory=list)


def build_lifted(mixing, observation, magnitudes) -> LiftedProblem:
    mixing = np.asarray(mixing, dtype=np.complex128)
    observation = np.asarray(observation, dtype=np.complex128)
    magnitudes = np.asarray(magnitudes, dtype=np.float64)
    if mixing.ndim != 2 or observation.ndim != 1 or magnitudes.ndim != 1:
        raise InvalidArgumentError("expected a matrix, an observation vector and a magnitude vector")
    m, k = mixing.shape
    if observation.shape[0] != m or magnitudes.shape[0] != k:
        raise InvalidArgumentError(
            f"dimension mismatch: A is {m}x{k}, y has length {observation.shape[0]}, b has length {magnitudes.shape[0]}"
        )
    if not np.all(magnitudes > 0):
        raise InvalidArgumentError("magnitudes must be strictly positive")

    augmented = np.column_stack([mixing, -observation])
    gram = augmented.conj().T @ augmented
    cost = 0.5 * (gram + gram.conj().T)
    diag_target = np.concatenate([magnitudes ** 2, [1.0]])
    return LiftedProblem(cost=cost, diag_target=diag_target, k=k)


def lifted_objective(cost: np.ndarray, x_mat: np.ndarray) -> float:
    return float(np.real(np.einsum("ij,ji->", cost, x_mat)))


def normalize(problem: LiftedProblem) -> LiftedProblem:
    scale = np.sqrt(problem.diag_target)
    cost = scale[:, None] * problem.cost * scale[None, :]
    return LiftedProblem(cost=cost, diag_target=np.ones_like(problem.diag_target), k=problem.k)


def normalized_costs(mixing: np.ndarray, observation: np.ndarray, magnitudes: np.ndarray) -> np.ndarray:
    """Normalized lifted costs for a stack: mixing (B, M, K), observation (B, M), magnitudes (B, K)."""
    augmented = np.concatenate([mixing, -observation[:, :, None]], axis=2)
    gram = np.conj(np.swapaxes(augmented, 1, 2)) @ augmented
    cost = 0.5 * (gram + np.conj(np.swapaxes(gram, 1, 2)))
    scale = np.concatenate([magnitudes, np.ones((magnitudes.shape[0], 1))], axis=1)
    return scale[:, :, None] * cost * scale[:, None, :]


def extract_phases(x_mats: np.ndarray, magnitudes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """b times the phases of X[..., :K, K]; zero entries get phase 0 and are flagged in the mask."""
    k = magnitudes.shape[-1]
    last_column = x_mats[..., :k, k]
    moduli = np.abs(last_column)
    degenerate = moduli == 0
    phase = np.ones(last_column.shape, dtype=np.complex128)
    np.divide(last_column, moduli, out=phase, where=~degenerate)
    return magnitudes * phase, degenerate


def _write_trace(path: str, history: List[float]):
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write("sweep,objective\n")
            for sweep, value in enumerate(history, start=1):
                f.write(f"{sweep},{value:.17g}\n")
    except OSError as e:
        log.warning("BCD: could not write objective trace to %s: %s", path, e)


def bcd_should_stop(previous: np.ndarray, objectives: np.ndarray, scale: np.ndarray, tol: float) -> np.ndarray:
    """Per-problem stop test after a sweep; scale is trace(C) of each normalized cost.

    The relative decrease (r_prev - r) / r is compared with tol, or with the tighter
    BCD_EXACT_FIT_TOL once r has fallen below BCD_EXACT_FIT_RTOL * scale. A decrease at rounding
    level or an objective at the floor stops at once.
    """
    decrease = previous - objectives
    near_exact = objectives <= settings.BCD_EXACT_FIT_RTOL * scale
    threshold = np.where(near_exact, min(tol, settings.BCD_EXACT_FIT_TOL), tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        relative = decrease / objectives
    return ((objectives <= settings.BCD_OBJECTIVE_FLOOR * scale)
            | (decrease <= settings.BCD_STALL_RTOL * scale)
            | (relative < threshold))


@dataclass
class BcdBatchState:
    x_mats: np.ndarray
    histories: List[List[float]]
    sweeps: np.ndarray
    converged: np.ndarray
    min_eigenvalues: List[List[float]]


def bcd_batch(costs: np.ndarray, cfg: BcdConfig = BcdConfig()) -> BcdBatchState:
    """Block-coordinate descent on a stack of normalized costs (B, K+1, K+1), all started at I.

    Only the first K rows/columns are updated; the last diagonal entry stays 1. Each problem stops on
    its own criterion, so a stack gives the same iterates as solving its members one by one.
    """
    batch, size, _ = costs.shape
    x_mats = np.tile(np.eye(size, dtype=np.complex128), (batch, 1, 1))
    histories: List[List[float]] = [[] for _ in range(batch)]
    eigenvalues: List[List[float]] = [[] for _ in range(batch)]
    scales = np.real(np.trace(costs, axis1=1, axis2=2))
    previous = np.full(batch, np.inf)
    running = np.ones(batch, dtype=bool)
    converged = np.zeros(batch, dtype=bool)
    sweeps = np.zeros(batch, dtype=np.int64)
    step = math.sqrt(1.0 - cfg.nu)

    for sweep in range(1, cfg.max_iter + 1):
        idx = np.flatnonzero(running)
        if idx.size == 0:
            break
        cost, x = costs[idx], x_mats[idx]
        for i in range(size - 1):
            column = cost[:, :, i].copy()
            column[:, i] = 0.0
            # X[ic, ic] C[ic, i]; zeroing C[i, i] drops the i-th column of X from the product.
            z = np.einsum("bjk,bk->bj", x, column)
            z[:, i] = 0.0
            gamma = np.real(np.sum(z.conj() * column, axis=1))
            scale = np.zeros(idx.size)
            positive = gamma > 0
            scale[positive] = -step / np.sqrt(gamma[positive])
            update = scale[:, None] * z
            update[:, i] = 1.0
            x[:, :, i] = update
            x[:, i, :] = update.conj()

        objectives = np.real(np.einsum("bij,bji->b", cost, x))
        x_mats[idx], sweeps[idx] = x, sweep
        for j, value in zip(idx, objectives):
            histories[j].append(float(value))
        if cfg.check_psd:
            for j, value in zip(idx, np.linalg.eigvalsh(x)[:, 0]):
                eigenvalues[j].append(float(value))
        done = bcd_should_stop(previous[idx], objectives, scales[idx], cfg.tol)
        converged[idx[done]] = True
        running[idx[done]] = False
        previous[idx] = objectives

    return BcdBatchState(x_mats, histories, sweeps, converged, eigenvalues)


def bcd_solve(problem: LiftedProblem, cfg: BcdConfig = BcdConfig()) -> LiftedIterate:
    if not problem.is_normalized:
        raise InvalidArgumentError("bcd_solve needs a normalized problem (unit diagonal target)")

    state = bcd_batch(problem.cost[None], cfg)
    iterate = LiftedIterate(
        x_mat=state.x_mats[0],
        objective_history=state.histories[0],
        sweeps=int(state.sweeps[0]),
        converged=bool(state.converged[0]),
        min_eigenvalues=state.min_eigenvalues[0],
    )
    if not iterate.converged:
        log.debug("BCD: no convergence after %d sweeps, objective %.3e", iterate.sweeps, iterate.objective_history[-1])
    if cfg.trace_path:
        _write_trace(cfg.trace_path, iterate.objective_history)
    return iterate


def dual_lower_bound(problem: LiftedProblem, iterate: LiftedIterate) -> float:
    """Weak-duality bound on the relaxation optimum from the current iterate.

    lambda = Re diag(C X) and mu = lambda_min(C - Diag(lambda)) give a dual-feasible point
    (lambda + mu), so sum(lambda) + (K + 1) mu <= trace(C X') for every feasible X'. The cost is a
    Gram matrix, so 0 is a bound as well.
    """
    if not problem.is_normalized:
        raise InvalidArgumentError("dual_lower_bound needs a normalized problem")
    multipliers = np.real(np.einsum("ij,ji->i", problem.cost, iterate.x_mat))
    slack = problem.cost - np.diag(multipliers)
    mu = float(np.linalg.eigvalsh(0.5 * (slack + slack.conj().T))[0])
    bound = float(np.sum(multipliers)) + (problem.k + 1) * mu
    return max(bound, 0.0)


def extract_solution(iterate: LiftedIterate, magnitudes) -> Tuple[np.ndarray, np.ndarray]:
    """Reads the phases of X[:K, K]; returns the estimate and a mask of zero entries (phase 0 used)."""
    magnitudes = np.asarray(magnitudes, dtype=np.float64)
    k = magnitudes.shape[0]
    if iterate.x_mat.shape != (k + 1, k + 1):
        raise InvalidArgumentError(f"iterate is {iterate.x_mat.shape}, expected {(k + 1, k + 1)}")
    return extract_phases(iterate.x_mat, magnitudes)


def phunlift(instance: Instance, cfg: BcdConfig = BcdConfig()) -> SolverResult:
    lifted = normalize(build_lifted(instance.mixing, instance.observation, instance.magnitudes))
    iterate = bcd_solve(lifted, cfg)
    estimate, degenerate = extract_solution(iterate, instance.magnitudes)
    if degenerate.any():
        log.debug("BCD: %d coordinates had a zero lifted entry, phase 0 used", int(degenerate.sum()))
    return SolverResult(
        estimate=estimate,
        residual=residual(instance.mixing, estimate, instance.observation),
        residual_history=tuple(iterate.objective_history),
        iterations=iterate.sweeps,
        converged=iterate.converged,
        method_name="phunlift",
        flags=int(degenerate.sum()),
        lower_bound=dual_lower_bound(lifted, iterate),
        extra={"sdp_objective": iterate.objective_history[-1]},
    )


def stability_bound(mixing, noise) -> float:
    """Error bound 2 sqrt(2) ||n|| / sigma_min(A) on the lifted estimate, determined case only."""
    mixing = np.asarray(mixing, dtype=np.complex128)
    noise = np.asarray(noise, dtype=np.complex128)
    m, k = mixing.shape
    if k > m:
        raise UnsupportedRegimeError(f"sigma_min(A) is 0 when K ({k}) > M ({m})")
    sigma_min = float(np.linalg.svd(mixing, compute_uv=False)[-1])
    if sigma_min <= 0:
        raise InvalidArgumentError("mixing matrix is rank deficient")
    return 2.0 * math.sqrt(2.0) * float(np.linalg.norm(noise)) / sigma_min


def duality_gap(instance: Instance, result: SolverResult, lift_objective: float) -> float:
    return residual(instance.mixing, result.estimate, instance.observation) - lift_objective
