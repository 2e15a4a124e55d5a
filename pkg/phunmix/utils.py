import os
import math
import struct
import psutil
import numpy as np
from typing import Any, Dict, Optional, Union


MASK_64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_MULT_1 = 0xBF58476D1CE4E5B9
MIX_MULT_2 = 0x94D049BB133111EB

SeedKey = Union[int, float, str]


def splitmix64(state: int) -> int:
    """One SplitMix64 output for the given 64-bit state (state is advanced by the golden gamma first)."""
    z = (state + GOLDEN_GAMMA) & MASK_64
    z = ((z ^ (z >> 30)) * MIX_MULT_1) & MASK_64
    z = ((z ^ (z >> 27)) * MIX_MULT_2) & MASK_64
    return z ^ (z >> 31)


def _key_to_int(key: SeedKey) -> int:
    if isinstance(key, bool):
        return int(key)
    if isinstance(key, int):
        return key & MASK_64
    if isinstance(key, float):
        return struct.unpack("<Q", struct.pack("<d", key))[0]
    if isinstance(key, str):
        acc = 0
        for byte in key.encode("utf-8"):
            acc = splitmix64(acc ^ byte)
        return acc
    raise TypeError(f"unsupported seed key type: {type(key).__name__}")


def derive_seed(master_seed: int, *keys: SeedKey) -> int:
    """Folds every key into the master seed: seed = mix(seed ^ key) for each key in order."""
    seed = splitmix64(master_seed & MASK_64)
    for key in keys:
        seed = splitmix64(seed ^ _key_to_int(key))
    return seed


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & MASK_64))


def snr_label(snr_db: float) -> str:
    return "noiseless" if math.isinf(snr_db) else format_float(snr_db)


def parse_snr(value: Union[str, float]) -> float:
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("noiseless", "inf", "+inf"):
            return math.inf
        return float(text)
    return float(value)


def format_float(value: float) -> str:
    return "%.17g" % value


def format_size(size_bytes: int) -> str:
    if size_bytes < 1024:
        return f"{size_bytes}B"
    if size_bytes < 1024 * 1024:
        return f"{round(size_bytes / 1024)}KB"
    if size_bytes < 1024 * 1024 * 1024:
        return f"{round(size_bytes / (1024 * 1024), 1)}MB"
    return f"{round(size_bytes / (1024 * 1024 * 1024), 1)}GB"


def get_worker_count(requested: Optional[int] = None) -> int:
    if requested is not None and requested >= 1:
        return requested
    env_value = os.environ.get("PHUNMIX_THREADS")
    if env_value:
        try:
            return max(1, int(env_value))
        except ValueError:
            pass
    return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1


def sample_process_usage() -> Dict[str, Any]:
    try:
        proc = psutil.Process()
        with proc.oneshot():
            return {
                "cpu_percent": proc.cpu_percent(interval=None),
                "mem_rss_bytes": proc.memory_info().rss,
                "threads": proc.num_threads(),
            }
    except psutil.Error:
        return {}

