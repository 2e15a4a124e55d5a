import math
import numpy as np

from phunmix.errors import InvalidArgumentError
from . import settings


def sdr(estimate, reference) -> float:
    """Plain energy ratio 10 log10(||ref||^2 / ||ref - est||^2) in dB, capped at SDR_CAP_DB."""
    estimate = np.asarray(estimate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if estimate.shape != reference.shape:
        raise InvalidArgumentError(f"length mismatch: {estimate.shape} vs {reference.shape}")
    signal_energy = float(np.sum(reference ** 2))
    if signal_energy == 0:
        raise InvalidArgumentError("reference signal is all zeros")
    error_energy = float(np.sum((reference - estimate) ** 2))
    cap = settings.SDR_CAP_DB
    if error_energy <= signal_energy * 10.0 ** (-cap / 10.0):
        return cap
    return 10.0 * math.log10(signal_energy / error_energy)
