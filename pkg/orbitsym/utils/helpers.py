"""
Helper Functions
Small utilities shared by the commands
"""
import json
import os
from datetime import datetime, timezone

import numpy as np

from orbitsym.errors import DataIOError

RULE = "=" * 60


def now_utc():
    """Timezone-aware timestamp for the eval report header"""
    return datetime.now(timezone.utc)


def banner(title):
    print(RULE)
    print(title)
    print(RULE)


def ensure_dir(path):
    """Create path (and parents); unwritable locations raise DataIOError"""
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"cannot create directory {path}: {exc}") from exc
    return path


def format_table(rows, columns):
    """Plain fixed-width table from a list of dicts"""
    widths = {c: max(len(c), *(len(_cell(r[c])) for r in rows)) if rows else len(c) for c in columns}
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    lines.append("  ".join("-" * widths[c] for c in columns))
    for row in rows:
        lines.append("  ".join(_cell(row[c]).ljust(widths[c]) for c in columns))
    return "\n".join(lines)


def write_json(path, payload):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _cell(value):
    if isinstance(value, bool):
        return "PASS" if value else "FAIL"
    if isinstance(value, float):
        return f"{value:.3e}"
    return str(value)
