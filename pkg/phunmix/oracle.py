"""Brute-force optimizer of phase least-squares over a uniform grid on the phase torus.

Only meant for small K: every one of the G^K grid points is evaluated, so the work is guarded by
a budget. The best grid point is optionally polished with phunalt.
"""
import math
import logging
import numpy as np
from concurrent.futures import ThreadPoolExecutor
from typing import Tuple
from pydantic import BaseModel, ConfigDict, Field

from phunmix import settings
from phunmix.errors import BudgetExceededError
from phunmix.problem import Instance, SolverResult, residual
from phunmix.solvers import AltConfig, phunalt

log = logging.getLogger(__name__)


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    points_per_phase: int = Field(default=settings.GRID_POINTS, ge=settings.GRID_MIN_POINTS)
    polish: bool = True
    budget: int = Field(default=settings.GRID_BUDGET, ge=1)
    offset: float = 0.0
    workers: int = Field(default=1, ge=1)
    chunk_size: int = Field(default=settings.GRID_CHUNK, ge=1)

    def required_evaluations(self, k: int) -> int:
        return self.points_per_phase ** k


def _grid_phasors(spec: GridSpec) -> np.ndarray:
    angles = spec.offset + 2.0 * math.pi * np.arange(spec.points_per_phase) / spec.points_per_phase
    return np.exp(1j * angles)


def _best_in_chunk(instance: Instance, phasors: np.ndarray, start: int, stop: int) -> Tuple[float, int]:
    shape = (phasors.shape[0],) * instance.k
    digits = np.unravel_index(np.arange(start, stop), shape)
    # (chunk, K) candidate sources, then all residuals at once.
    candidates = instance.magnitudes[None, :] * np.stack([phasors[d] for d in digits], axis=1)
    diff = candidates @ instance.mixing.T - instance.observation[None, :]
    values = np.sum(diff.real ** 2 + diff.imag ** 2, axis=1)
    best = int(np.argmin(values))
    return float(values[best]), start + best


def grid_search(instance: Instance, spec: GridSpec = GridSpec()) -> SolverResult:
    required = spec.required_evaluations(instance.k)
    if required > spec.budget:
        raise BudgetExceededError(required, spec.budget)

    phasors = _grid_phasors(spec)
    bounds = [(start, min(start + spec.chunk_size, required)) for start in range(0, required, spec.chunk_size)]
    if spec.workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            partial = list(pool.map(lambda b: _best_in_chunk(instance, phasors, *b), bounds))
    else:
        partial = [_best_in_chunk(instance, phasors, *b) for b in bounds]

    # Chunks are in index order and min() keeps the first minimum, so ties resolve to the smallest index.
    grid_value, grid_index = min(partial, key=lambda item: item[0])
    digits = np.unravel_index(grid_index, (spec.points_per_phase,) * instance.k)
    estimate = instance.magnitudes * phasors[np.asarray(digits)]
    grid_residual = residual(instance.mixing, estimate, instance.observation)
    log.debug("ORACLE: %d grid points, best residual %.6e", required, grid_value)

    if not spec.polish:
        return SolverResult(
            estimate=estimate,
            residual=grid_residual,
            residual_history=(grid_residual,),
            iterations=0,
            converged=True,
            method_name="oracle",
            extra={"grid_residual": grid_residual, "grid_index": grid_index},
        )

    polished = phunalt(instance, estimate, AltConfig())
    # Never worse than the grid point.
    if polished.residual > grid_residual:
        polished_estimate, polished_residual = estimate, grid_residual
    else:
        polished_estimate, polished_residual = polished.estimate, polished.residual
    return SolverResult(
        estimate=polished_estimate,
        residual=polished_residual,
        residual_history=(grid_residual,) + polished.residual_history,
        iterations=polished.iterations,
        converged=polished.converged,
        method_name="oracle",
        extra={"grid_residual": grid_residual, "grid_index": grid_index},
    )


def certify_global(instance: Instance, candidate: SolverResult, spec: GridSpec = GridSpec()) -> bool:
    oracle = grid_search(instance, spec.model_copy(update={"polish": True}))
    candidate_residual = residual(instance.mixing, candidate.estimate, instance.observation)
    slack = max(1e-8, 1e-6 * oracle.residual)
    return candidate_residual <= oracle.residual + slack
