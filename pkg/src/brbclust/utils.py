import json
from pathlib import Path
from typing import Any, Iterator

from pydantic import BaseModel

from .exceptions import DataIOException
from .models import TIMING_KEYS, BrbEvent, ExperimentLog, LogHeader, MetricRecord, RunSummary


class JsonlWriter:
    """
    Appends one JSON object per line and flushes after every write, so a run that
    aborts leaves every record written so far on disk.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = self.path.open('w', encoding='utf-8')
        except OSError as e:
            raise DataIOException("Cannot open log", detail={'path': str(self.path), 'error': str(e)}) from e

    def write(self, record: BaseModel | dict) -> None:
        line = record.model_dump_json() if isinstance(record, BaseModel) else json.dumps(record, sort_keys=True)
        try:
            self._fh.write(line + '\n')
            self._fh.flush()
        except OSError as e:
            raise DataIOException("Cannot write log", detail={'path': str(self.path), 'error': str(e)}) from e

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> 'JsonlWriter':
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def iter_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    path = Path(path)
    try:
        with path.open(encoding='utf-8') as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as e:
                    raise DataIOException("Malformed log line", detail={'line': line_no, 'error': str(e)}) from e
    except OSError as e:
        raise DataIOException("Cannot read log", detail={'path': str(path), 'error': str(e)}) from e


def read_log(path: str | Path) -> ExperimentLog:
    """Rebuilds an ExperimentLog from its JSONL file."""
    header = None
    log_items: dict[str, Any] = {'records': [], 'events': []}
    for item in iter_jsonl(path):
        kind = item.get('kind')
        if kind == 'header':
            header = LogHeader.model_validate(item)
        elif kind == 'metric':
            log_items['records'].append(MetricRecord.model_validate(item))
        elif kind == 'brb_event':
            log_items['events'].append(BrbEvent.model_validate(item))
        elif kind == 'summary':
            log_items['summary'] = RunSummary.model_validate(item)
        elif kind == 'timing':
            log_items['phase_seconds'] = item.get('phase_seconds', {})
            log_items['epoch_seconds'] = item.get('epoch_seconds', [])
        elif kind == 'pretrain':
            log_items['pretrain_losses'] = item.get('losses', [])
    if header is None:
        raise DataIOException("Log has no header", detail={'path': str(path)})
    return ExperimentLog(header=header, **log_items)


def strip_timings(value: Any) -> Any:
    """Drops wall-clock fields recursively; what remains is reproducible bit for bit."""
    if isinstance(value, dict):
        return {k: strip_timings(v) for k, v in value.items() if k not in TIMING_KEYS}
    if isinstance(value, list):
        return [strip_timings(v) for v in value]
    return value
