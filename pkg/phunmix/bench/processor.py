import math
import asyncio
import logging
import numpy as np
from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple

from phunmix.errors import InvalidArgumentError
from phunmix.utils import get_worker_count, snr_label
from . import tasks, writer
from .config import SweepConfig
from .converter import ReportRow, SummaryRow, summary_to_dict

log = logging.getLogger(__name__)


def run_sweep(cfg: SweepConfig, workers: Optional[int] = None) -> List[ReportRow]:
    """All (cell, SNR, trial) combinations; rows come back sorted by (M, K, snr, solver, trial)."""
    workers = get_worker_count(workers if workers is not None else cfg.threads)
    log.info("SWEEP: %d cells x %d SNRs x %d trials x %d solvers on %d workers",
             len(cfg.grid), len(cfg.snr_db_list), cfg.trials, len(cfg.solvers), workers)
    rows: List[ReportRow] = []
    for m, k in cfg.grid:
        for snr_db in cfg.snr_db_list:
            keys = [(m, k, snr_db, trial) for trial in range(cfg.trials)]
            cell_rows = tasks.run_trials(cfg, keys, workers)
            rows.extend(cell_rows)
            exact = sum(row.exact for row in cell_rows)
            log.info("SWEEP: cell %dx%d at %s done, %d/%d rows exact", m, k, snr_label(snr_db), exact, len(cell_rows))
            tasks.log_resource_usage()
    return sorted(rows, key=lambda row: row.sort_key)


def summarize(rows: Sequence[ReportRow]) -> List[SummaryRow]:
    if not rows:
        raise InvalidArgumentError("cannot summarize an empty report")
    groups: Dict[Tuple, List[ReportRow]] = defaultdict(list)
    for row in rows:
        groups[(row.m, row.k, row.snr_db, row.solver)].append(row)

    summary = []
    for (m, k, snr_db, solver), group in sorted(groups.items()):
        errors = np.array([row.relative_error for row in group])
        times = [row.wall_time_ms for row in group]
        summary.append(SummaryRow(
            m=m,
            k=k,
            snr_db=snr_db,
            solver=solver,
            count=len(group),
            mean_relative_error=float(np.mean(errors)),
            median_relative_error=float(np.median(errors)),
            exact_fraction=sum(row.exact for row in group) / len(group),
            mean_iterations=float(np.mean([row.iterations for row in group])),
            mean_wall_time_ms=None if any(t is None for t in times) else float(np.mean(times)),
            median_abs_error=float(np.median([row.abs_error for row in group])),
            mean_noise_stddev=float(np.mean([row.noise_stddev for row in group])),
        ))
    return summary


def noise_slope(summary: Sequence[SummaryRow], solver: str, cell: Optional[Tuple[int, int]] = None) -> float:
    """Least-squares slope of log10(median ||s_hat - s0||) against log10(sigma_n) over the noisy groups."""
    points = [
        (row.mean_noise_stddev, row.median_abs_error) for row in summary
        if row.solver == solver and not math.isinf(row.snr_db) and (cell is None or (row.m, row.k) == cell)
    ]
    points = [(sigma, error) for sigma, error in points if sigma > 0 and error > 0]
    if len(points) < 2:
        raise InvalidArgumentError(f"need at least two noisy SNR levels for '{solver}', got {len(points)}")
    sigmas, errors = zip(*points)
    slope, _ = np.polyfit(np.log10(sigmas), np.log10(errors), 1)
    return float(slope)


async def _write_outputs(cfg: SweepConfig, rows: Sequence[ReportRow], csv_path: Optional[str],
                         json_path: Optional[str]):
    if csv_path:
        await writer.write_report_csv(csv_path, rows)
    if json_path:
        payload = {
            "config": cfg.to_payload(),
            "summary": [summary_to_dict(row) for row in summarize(rows)],
        }
        await writer.write_json_report(json_path, payload)


def run_sweep_to_files(cfg: SweepConfig, csv_path: Optional[str] = None, json_path: Optional[str] = None,
                       workers: Optional[int] = None) -> List[ReportRow]:
    rows = run_sweep(cfg, workers)
    asyncio.run(_write_outputs(cfg, rows, csv_path or cfg.output_path, json_path))
    return rows
