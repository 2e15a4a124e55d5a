import os
import orjson
import aiofiles
import logging
from typing import Optional

from phunmix.converter import instance_to_dict, loads_instance
from phunmix.problem import Instance
from . import settings

log = logging.getLogger(__name__)


async def dump_failure(instance: Instance, seed: int, solver: str, error: BaseException,
                       dump_dir: Optional[str] = None) -> Optional[str]:
    """Writes the failing instance to <dump_dir>/<seed>.json; never raises."""
    dump_dir = dump_dir or settings.DUMP_DIR
    path = os.path.join(dump_dir, f"{seed}.json")
    payload = instance_to_dict(instance)
    payload["failure"] = {"seed": seed, "solver": solver, "error": f"{type(error).__name__}: {error}"}
    try:
        os.makedirs(dump_dir, exist_ok=True)
        async with aiofiles.open(path, mode="wb") as f:
            await f.write(orjson.dumps(payload))
    except OSError as e:
        log.critical("STATE: failed to dump instance for seed %d: %s", seed, e)
        return None
    log.error("STATE: %s failed on seed %d, instance saved to %s", solver, seed, path)
    return path


async def load_instance(path: str) -> Instance:
    async with aiofiles.open(path, mode="rb") as f:
        content = await f.read()
    return loads_instance(content)
