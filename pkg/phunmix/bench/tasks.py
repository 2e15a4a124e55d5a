import time
import asyncio
import logging
import numpy as np
from concurrent.futures import ThreadPoolExecutor
from typing import List, Sequence, Tuple

from phunmix.errors import PhunmixError
from phunmix.problem import GenerationSpec, generate_instance, relative_error
from phunmix.settings import EXACT_THRESHOLD
from phunmix.solvers import run_solver
from phunmix.utils import derive_seed, make_rng, sample_process_usage
from . import state
from .config import SweepConfig
from .converter import ReportRow

log = logging.getLogger(__name__)

TrialKey = Tuple[int, int, float, int]


def trial_seed(master_seed: int, m: int, k: int, snr_db: float, trial_index: int) -> int:
    return derive_seed(master_seed, m, k, float(snr_db), trial_index)


def run_trial(cfg: SweepConfig, m: int, k: int, snr_db: float, trial_index: int) -> List[ReportRow]:
    """One generated instance, every configured solver on it, one row per solver."""
    seed = trial_seed(cfg.master_seed, m, k, snr_db, trial_index)
    instance = generate_instance(GenerationSpec(m=m, k=k, snr_db=snr_db, seed=seed))
    rows = []
    for solver in cfg.solvers:
        started = time.perf_counter()
        try:
            result = run_solver(solver, instance, make_rng(derive_seed(seed, solver)), cfg.alt, cfg.bcd)
        except (PhunmixError, np.linalg.LinAlgError) as e:
            asyncio.run(state.dump_failure(instance, seed, solver, e))
            raise
        elapsed_ms = 1000.0 * (time.perf_counter() - started)
        error = relative_error(result.estimate, instance.ground_truth)
        rows.append(ReportRow(
            m=m,
            k=k,
            snr_db=snr_db,
            solver=solver,
            trial_index=trial_index,
            relative_error=error,
            residual=result.residual,
            exact=error < EXACT_THRESHOLD,
            iterations=result.iterations,
            wall_time_ms=elapsed_ms if cfg.timing else None,
            seed=seed,
            abs_error=float(np.linalg.norm(result.estimate - instance.ground_truth)),
            noise_stddev=instance.noise_stddev,
        ))
    return rows


def run_trials(cfg: SweepConfig, keys: Sequence[TrialKey], workers: int = 1) -> List[ReportRow]:
    """Fans trials out to a thread pool; the result order follows keys whatever the schedule."""
    if workers <= 1 or len(keys) <= 1:
        batches = [run_trial(cfg, *key) for key in keys]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(lambda key: run_trial(cfg, *key), keys))
    return [row for batch in batches for row in batch]


def log_resource_usage(prefix: str = "SWEEP"):
    usage = sample_process_usage()
    if usage:
        log.info("%s: cpu %.1f%%, rss %.1f MB, %d threads", prefix, usage["cpu_percent"],
                 usage["mem_rss_bytes"] / (1024 * 1024), usage["threads"])
