import math
import logging
from typing import Any, Dict, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from phunmix import settings as core_settings
from phunmix.errors import ConfigError
from phunmix.lifting import BcdConfig
from phunmix.solvers import AltConfig, SOLVER_NAMES
from phunmix.utils import parse_snr, snr_label
from . import settings

log = logging.getLogger(__name__)


class SweepConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    grid: Tuple[Tuple[int, int], ...] = Field(min_length=1)
    snr_db_list: Tuple[float, ...] = Field(default=(math.inf,), min_length=1)
    trials: int = Field(default=settings.DEFAULT_TRIALS, ge=1)
    solvers: Tuple[str, ...] = Field(default=settings.DEFAULT_SOLVERS, min_length=1)
    master_seed: int = Field(default=0, ge=0, le=core_settings.MAX_SEED)
    output_path: Optional[str] = None
    threads: Optional[int] = Field(default=None, ge=1)
    timing: bool = False
    alt: AltConfig = AltConfig()
    bcd: BcdConfig = BcdConfig()

    @field_validator("grid")
    @classmethod
    def _positive_cells(cls, grid):
        for m, k in grid:
            if m < 1 or k < 1:
                raise ValueError(f"grid cell {m}x{k} must have M >= 1 and K >= 1")
        return grid

    @field_validator("snr_db_list")
    @classmethod
    def _finite_or_noiseless(cls, values):
        for value in values:
            if math.isnan(value) or value == -math.inf:
                raise ValueError(f"invalid SNR {value}")
        return values

    @field_validator("solvers")
    @classmethod
    def _known_solvers(cls, solvers):
        unknown = [name for name in solvers if name not in SOLVER_NAMES]
        if unknown:
            raise ValueError(f"unknown solver(s) {', '.join(unknown)}; expected one of {', '.join(SOLVER_NAMES)}")
        if len(set(solvers)) != len(solvers):
            raise ValueError("solver list has duplicates")
        return solvers

    @model_validator(mode="after")
    def _least_squares_regime(self):
        if "ls" in self.solvers:
            underdetermined = [f"{m}x{k}" for m, k in self.grid if k > m]
            if underdetermined:
                raise ValueError(f"solver 'ls' needs K <= M, grid has {', '.join(underdetermined)}")
        return self

    def to_payload(self) -> Dict[str, Any]:
        payload = self.model_dump(mode="json")
        payload["snr_db_list"] = [snr_label(value) for value in self.snr_db_list]
        payload["grid"] = [f"{m}x{k}" for m, k in self.grid]
        return payload


def build_config(**values) -> SweepConfig:
    try:
        return SweepConfig(**values)
    except ValidationError as e:
        raise ConfigError(str(e))


def _split(value: str):
    return [item.strip() for item in value.split(",") if item.strip()]


def _parse_cell(text: str) -> Tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ConfigError(f"grid cell '{text}' must be written MxK")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError(f"grid cell '{text}' must be written MxK with integer M and K")


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got '{text}'")


_KEYS = {
    "grid": ("grid", lambda v: tuple(_parse_cell(cell) for cell in _split(v))),
    "snr_db": ("snr_db_list", lambda v: tuple(parse_snr(item) for item in _split(v))),
    "trials": ("trials", int),
    "solvers": ("solvers", lambda v: tuple(_split(v))),
    "seed": ("master_seed", int),
    "output": ("output_path", str),
    "threads": ("threads", int),
    "timing": ("timing", _parse_bool),
}
_ALT_KEYS = {"alt_tol": ("tol", float), "alt_max_iter": ("max_iter", int)}
_BCD_KEYS = {"bcd_tol": ("tol", float), "bcd_max_iter": ("max_iter", int), "bcd_nu": ("nu", float)}


def parse_config_text(text: str) -> SweepConfig:
    """Flat 'key = value' lines, '#' comments, comma-separated lists, grid cells written MxK."""
    values: Dict[str, Any] = {}
    alt: Dict[str, Any] = {}
    bcd: Dict[str, Any] = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value', got '{line}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _KEYS:
            (target, convert), bucket = _KEYS[key], values
        elif key in _ALT_KEYS:
            (target, convert), bucket = _ALT_KEYS[key], alt
        elif key in _BCD_KEYS:
            (target, convert), bucket = _BCD_KEYS[key], bcd
        else:
            raise ConfigError(f"line {number}: unknown key '{key}'")
        if target in bucket:
            raise ConfigError(f"line {number}: key '{key}' given twice")
        try:
            bucket[target] = convert(value)
        except ValueError as e:
            raise ConfigError(f"line {number}: bad value for '{key}': {e}")

    try:
        if alt:
            values["alt"] = AltConfig(**alt)
        if bcd:
            values["bcd"] = BcdConfig(**bcd)
    except ValidationError as e:
        raise ConfigError(str(e))
    if "grid" not in values:
        raise ConfigError("config has no 'grid' key")
    return build_config(**values)


def load_config(path: str) -> SweepConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    cfg = parse_config_text(text)
    log.debug("SWEEP: loaded %s (%d cells, %d SNRs, %d trials)", path, len(cfg.grid), len(cfg.snr_db_list), cfg.trials)
    return cfg
