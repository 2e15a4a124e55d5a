from dataclasses import dataclass, fields
from typing import Dict, List, Optional, Tuple

from phunmix.errors import InvalidArgumentError
from phunmix.utils import format_float, parse_snr, snr_label


@dataclass(frozen=True)
class ReportRow:
    m: int
    k: int
    snr_db: float
    solver: str
    trial_index: int
    relative_error: float
    residual: float
    exact: bool
    iterations: int
    wall_time_ms: Optional[float]
    seed: int
    abs_error: float
    noise_stddev: float

    @property
    def sort_key(self) -> Tuple:
        return self.m, self.k, self.snr_db, self.solver, self.trial_index


@dataclass(frozen=True)
class SummaryRow:
    m: int
    k: int
    snr_db: float
    solver: str
    count: int
    mean_relative_error: float
    median_relative_error: float
    exact_fraction: float
    mean_iterations: float
    mean_wall_time_ms: Optional[float]
    median_abs_error: float
    mean_noise_stddev: float


REPORT_FIELDS = tuple(f.name for f in fields(ReportRow))


def _optional_float(value: Optional[float]) -> str:
    return "" if value is None else format_float(value)


def row_to_fields(row: ReportRow) -> List[str]:
    return [
        str(row.m),
        str(row.k),
        snr_label(row.snr_db),
        row.solver,
        str(row.trial_index),
        format_float(row.relative_error),
        format_float(row.residual),
        "true" if row.exact else "false",
        str(row.iterations),
        _optional_float(row.wall_time_ms),
        str(row.seed),
        format_float(row.abs_error),
        format_float(row.noise_stddev),
    ]


def row_from_fields(values: List[str]) -> ReportRow:
    if len(values) != len(REPORT_FIELDS):
        raise InvalidArgumentError(f"report line has {len(values)} fields, expected {len(REPORT_FIELDS)}")
    record = dict(zip(REPORT_FIELDS, values))
    try:
        return ReportRow(
            m=int(record["m"]),
            k=int(record["k"]),
            snr_db=parse_snr(record["snr_db"]),
            solver=record["solver"],
            trial_index=int(record["trial_index"]),
            relative_error=float(record["relative_error"]),
            residual=float(record["residual"]),
            exact=record["exact"] == "true",
            iterations=int(record["iterations"]),
            wall_time_ms=float(record["wall_time_ms"]) if record["wall_time_ms"] else None,
            seed=int(record["seed"]),
            abs_error=float(record["abs_error"]),
            noise_stddev=float(record["noise_stddev"]),
        )
    except ValueError as e:
        raise InvalidArgumentError(f"malformed report line: {e}")


def summary_to_dict(row: SummaryRow) -> Dict:
    payload = {f.name: getattr(row, f.name) for f in fields(SummaryRow)}
    payload["snr_db"] = snr_label(row.snr_db)
    return payload


def separation_to_fields(row) -> List[str]:
    return [
        row.solver,
        str(row.m),
        str(row.k),
        format_float(row.mean_sdr),
        ";".join(format_float(value) for value in row.source_sdrs),
        format_float(row.wall_time_ms),
    ]


def header_line(columns) -> bytes:
    return (",".join(columns) + "\n").encode()


def csv_line(values: List[str]) -> bytes:
    return (",".join(values) + "\n").encode()
