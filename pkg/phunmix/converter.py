import orjson
import numpy as np
from typing import Any, Dict, List, Optional

from phunmix.errors import InvalidArgumentError
from phunmix.problem import Instance, SolverResult, relative_error


def _pairs(values: np.ndarray) -> List[List[float]]:
    flat = np.asarray(values, dtype=np.complex128).reshape(-1)
    return [[float(v.real), float(v.imag)] for v in flat]


def _complex_from_pairs(pairs: Any, name: str) -> np.ndarray:
    try:
        arr = np.asarray(pairs, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise InvalidArgumentError(f"field '{name}' is not a list of [re, im] pairs: {e}")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidArgumentError(f"field '{name}' is not a list of [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def _safe_float(value: Any) -> Optional[float]:
    if value is None:
        return None
    try:
        return float(value)
    except (ValueError, TypeError):
        return None


def instance_to_dict(instance: Instance) -> Dict[str, Any]:
    payload: Dict[str, Any] = {
        "m": instance.m,
        "k": instance.k,
        "a": _pairs(instance.mixing),
        "y": _pairs(instance.observation),
        "b": [float(v) for v in instance.magnitudes],
    }
    if instance.ground_truth is not None:
        payload["s0"] = _pairs(instance.ground_truth)
    if instance.noise is not None:
        payload["n"] = _pairs(instance.noise)
    if instance.noise_stddev is not None:
        payload["sigma_n"] = instance.noise_stddev
    return payload


def instance_from_dict(payload: Dict[str, Any]) -> Instance:
    try:
        m, k = int(payload["m"]), int(payload["k"])
        mixing = _complex_from_pairs(payload["a"], "a")
        if mixing.size != m * k:
            raise InvalidArgumentError(f"field 'a' has {mixing.size} entries, expected {m}x{k}")
        return Instance(
            mixing=mixing.reshape(m, k),
            observation=_complex_from_pairs(payload["y"], "y"),
            magnitudes=np.asarray(payload["b"], dtype=np.float64),
            ground_truth=_complex_from_pairs(payload["s0"], "s0") if payload.get("s0") is not None else None,
            noise=_complex_from_pairs(payload["n"], "n") if payload.get("n") is not None else None,
            noise_stddev=_safe_float(payload.get("sigma_n")),
        )
    except KeyError as e:
        raise InvalidArgumentError(f"instance JSON is missing field {e}")


def dumps_instance(instance: Instance) -> bytes:
    return orjson.dumps(instance_to_dict(instance))


def loads_instance(content: bytes) -> Instance:
    try:
        payload = orjson.loads(content)
    except orjson.JSONDecodeError as e:
        raise InvalidArgumentError(f"instance file is not valid JSON: {e}")
    if not isinstance(payload, dict):
        raise InvalidArgumentError("instance JSON must be an object")
    return instance_from_dict(payload)


def result_to_dict(result: SolverResult, instance: Optional[Instance] = None) -> Dict[str, Any]:
    payload: Dict[str, Any] = {
        "method": result.method_name,
        "estimate": _pairs(result.estimate),
        "residual": result.residual,
        "iterations": result.iterations,
        "converged": result.converged,
        "flags": result.flags,
        "residual_history_length": len(result.residual_history),
    }
    if result.lower_bound is not None:
        payload["lower_bound"] = result.lower_bound
        payload["duality_gap"] = result.residual - result.lower_bound
    if instance is not None and instance.ground_truth is not None:
        payload["relative_error"] = relative_error(result.estimate, instance.ground_truth)
    return payload
