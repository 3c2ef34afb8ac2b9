"""CSV / JSON output helpers.

Floats are written with 17 significant digits so every value round-trips.
Each CSV starts with a '# generated <timestamp>' line; readers skip it and
determinism checks compare everything after it.
"""

import csv
import json
import os
import logging
from datetime import datetime, timezone
from typing import Dict, Iterable, List, Sequence

import numpy as np

from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

HEADER_PREFIX = '# generated '


def format_value(value) -> str:
    """Format one cell ('.' decimal, %.17g for floats)."""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return '%.17g' % float(value)
    return str(value)


def resolve_output_path(path: str) -> str:
    """Relative paths land under DF_LAB_OUTPUT_DIR when it is set."""
    base = os.getenv('DF_LAB_OUTPUT_DIR')
    if base and not os.path.isabs(path):
        path = os.path.join(base, path)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    return path


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    """
    Write a CSV with a timestamp line followed by header and rows.

    Args:
        path: Output file
        columns: Column names
        rows: Row sequences (floats formatted with 17 significant digits)

    Returns:
        Resolved output path
    """
    path = resolve_output_path(path)
    stamp = datetime.now(timezone.utc).isoformat(timespec='seconds')
    with open(path, 'w', newline='', encoding='utf-8') as f:
        f.write(f"{HEADER_PREFIX}{stamp}\n")
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        count = 0
        for row in rows:
            writer.writerow([format_value(v) for v in row])
            count += 1
    logger.info(f"📄 Wrote {count} rows to {path}")
    return path


def read_csv(path: str) -> (List[str], List[List[str]]):
    """
    Read a CSV written by write_csv (or a plain CSV without the timestamp line).

    Returns:
        (columns, rows) with cells as strings
    """
    if not os.path.exists(path):
        raise ConfigError(f"File not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        lines = [line for line in f if not line.startswith('#') and line.strip()]
    reader = csv.reader(lines)
    try:
        columns = next(reader)
    except StopIteration:
        raise ConfigError(f"Empty CSV: {path}") from None
    return columns, [row for row in reader]


def csv_body(path: str) -> str:
    """CSV content without the timestamp line (for determinism comparisons)."""
    with open(path, 'r', encoding='utf-8') as f:
        return ''.join(line for line in f if not line.startswith(HEADER_PREFIX))


def write_json(path: str, payload: Dict) -> str:
    """Write a JSON document with sorted keys."""
    path = resolve_output_path(path)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(_jsonable(payload), f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def read_json(path: str) -> Dict:
    """Read a JSON object; missing files and bad syntax raise ConfigError."""
    if not os.path.exists(path):
        raise ConfigError(f"File not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path}: {e}") from e
    if not isinstance(payload, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    return payload
