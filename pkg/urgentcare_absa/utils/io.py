"""Deterministic artifact I/O, content hashing and the output-directory lock."""

import hashlib
import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List

from . import InputError, LockError

LOCK_NAME = '.urgentcare-absa.lock'

logger = logging.getLogger(__name__)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as fh:
        for block in iter(lambda: fh.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


def json_safe(data: Any) -> Any:
    """Copy of `data` with non-finite floats replaced by None."""
    if isinstance(data, float):
        return data if math.isfinite(data) else None
    if isinstance(data, dict):
        return {key: json_safe(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [json_safe(value) for value in data]
    return data


def dumps_canonical(data: Any) -> str:
    """JSON with sorted keys, two-space indent and a trailing newline; NaN becomes null."""
    return json.dumps(json_safe(data), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + '\n'


def dumps_line(record: Dict[str, Any]) -> str:
    """One JSON-lines record, newline included."""
    return json.dumps(json_safe(record), sort_keys=True, ensure_ascii=False, allow_nan=False) + '\n'


def write_json(path, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, dumps_canonical(data))
    return path


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, text)
    return path


def write_jsonl(path, records: Iterable[Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(path, ''.join(dumps_line(record) for record in records))
    return path


def read_json(path) -> Any:
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read {path}: {e}")


def iter_jsonl(path) -> Iterator[Dict[str, Any]]:
    """Yield records of a JSON-lines file we wrote ourselves; blank lines skipped."""
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read {path}: {e}")


def read_jsonl(path) -> List[Dict[str, Any]]:
    return list(iter_jsonl(path))


def read_appended_jsonl(path) -> List[Dict[str, Any]]:
    """Records of a JSON-lines file that was being appended to when its writer died.

    An unparseable last line is a torn write and is dropped; damage anywhere
    else is an InputError.
    """
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            lines = [(number, line.strip()) for number, line in enumerate(fh, 1) if line.strip()]
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}")
    records = []
    for position, (number, line) in enumerate(lines):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            if position == len(lines) - 1:
                logger.warning(f"Dropping torn last line {number} of {path}")
                break
            raise InputError(f"cannot read {path}: line {number}: {e}")
    return records


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + '.tmp')
    with open(tmp, 'w', encoding='utf-8', newline='\n') as fh:
        fh.write(text)
    os.replace(tmp, path)


class OutputLock:
    """Exclusive lock file held for the duration of one stage."""

    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)
        self.path = self.output_dir / LOCK_NAME
        self._fd = None

    def acquire(self):
        self.output_dir.mkdir(parents=True, exist_ok=True)
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockError(f"output directory {self.output_dir} is locked by another run "
                            f"(remove {self.path} if no run is active)")
        os.write(self._fd, str(os.getpid()).encode('ascii'))

    def release(self):
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
            try:
                self.path.unlink()
            except FileNotFoundError:
                pass

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.release()
