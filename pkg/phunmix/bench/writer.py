import os
import orjson
import aiofiles
import logging
from typing import Any, Dict, Iterable, List, Optional, Sequence

from phunmix.errors import InvalidArgumentError
from phunmix.utils import format_size
from . import converter, settings

log = logging.getLogger(__name__)


class ReportWriter:
    """Streams CSV lines into <path>.<pid>.tmp and renames it over <path> on finalize."""

    def __init__(self, final_path: str, columns: Sequence[str]):
        self.final_path = final_path
        self.columns = tuple(columns)
        self.temp_path: Optional[str] = None
        self._file_handle = None
        self.rows_written = 0

    async def start_writing(self):
        directory = os.path.dirname(self.final_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        self.temp_path = f"{self.final_path}.{os.getpid()}.tmp"
        self._file_handle = await aiofiles.open(self.temp_path, "wb")
        await self._file_handle.write(converter.header_line(self.columns))

    async def write_lines(self, lines: Iterable[List[str]]):
        if not self._file_handle:
            return
        buffer = []
        for values in lines:
            if len(values) != len(self.columns):
                raise InvalidArgumentError(f"row has {len(values)} fields, header has {len(self.columns)}")
            buffer.append(converter.csv_line(values))
            if len(buffer) >= settings.WRITE_BATCH_ROWS:
                await self._file_handle.write(b"".join(buffer))
                self.rows_written += len(buffer)
                buffer = []
        if buffer:
            await self._file_handle.write(b"".join(buffer))
            self.rows_written += len(buffer)

    async def finalize(self):
        if not self._file_handle:
            log.warning("WRITER: finalize called but no file handle exists")
            return
        await self._file_handle.close()
        self._file_handle = None
        try:
            os.replace(self.temp_path, self.final_path)
            log.info("WRITER: %d rows written to %s (%s)", self.rows_written, self.final_path,
                     format_size(os.path.getsize(self.final_path)))
        finally:
            if os.path.exists(self.temp_path):
                os.remove(self.temp_path)
            self.temp_path = None

    async def abort(self):
        if self._file_handle:
            await self._file_handle.close()
            self._file_handle = None
        if self.temp_path and os.path.exists(self.temp_path):
            os.remove(self.temp_path)
        self.temp_path = None


async def write_report_csv(path: str, rows: Sequence[converter.ReportRow]):
    manager = ReportWriter(path, converter.REPORT_FIELDS)
    await manager.start_writing()
    try:
        await manager.write_lines(converter.row_to_fields(row) for row in rows)
    except BaseException:
        await manager.abort()
        raise
    await manager.finalize()


async def write_separation_csv(path: str, rows: Sequence[Any]):
    manager = ReportWriter(path, settings.SEPARATION_COLUMNS)
    await manager.start_writing()
    try:
        await manager.write_lines(converter.separation_to_fields(row) for row in rows)
    except BaseException:
        await manager.abort()
        raise
    await manager.finalize()


async def write_json_report(path: str, payload: Dict[str, Any]):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    temp_path = f"{path}.{os.getpid()}.tmp"
    try:
        async with aiofiles.open(temp_path, "wb") as f:
            await f.write(orjson.dumps(payload, option=orjson.OPT_INDENT_2))
        os.replace(temp_path, path)
    finally:
        if os.path.exists(temp_path):
            os.remove(temp_path)
    log.info("WRITER: JSON report written to %s", path)


def read_report_csv(path: str) -> List[converter.ReportRow]:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or tuple(lines[0].split(",")) != converter.REPORT_FIELDS:
        raise InvalidArgumentError(f"{path} does not start with the report header")
    return [converter.row_from_fields(line.split(",")) for line in lines[1:] if line]
