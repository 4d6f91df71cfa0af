"""Atomic CSV/JSON writers and thread-count resolution."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from typing import Iterable, Optional, Sequence, Union

ESTIMATE_COLUMNS = ("variant", "alpha", "alpha_f", "B", "b_l", "b_r", "metric", "mean", "std_err", "replicates", "seed")
CERTIFICATE_COLUMNS = ("alpha", "alpha_f", "delta", "eps", "lower_bound_gap", "verdict")

THREADS_ENV = "FLEXMATCH_THREADS"


def resolve_threads(threads: Union[int, str, None]) -> int:
    """``None`` reads FLEXMATCH_THREADS (default 1); ``"auto"`` uses the CPU count."""
    if threads is None:
        threads = os.environ.get(THREADS_ENV, "1")
    if isinstance(threads, str):
        if threads.strip().lower() == "auto":
            return os.cpu_count() or 1
        threads = int(threads)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return int(threads)


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    if v is None:
        return ""
    return str(v)


def csv_text(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _finite(o):
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    return o


def json_text(obj, indent: Optional[int] = 2) -> str:
    return json.dumps(_finite(obj), indent=indent, sort_keys=True, default=_json_default) + "\n"


def write_atomic(path: Union[str, os.PathLike], text: str) -> None:
    """Write to a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, columns: Sequence[str], rows: Iterable[dict]) -> None:
    write_atomic(path, csv_text(columns, rows))


def write_json(path, obj) -> None:
    write_atomic(path, json_text(obj))
