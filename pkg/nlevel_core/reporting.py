"""CSV and JSON artifacts. Files are written once, through a temp file and a rename."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import scipy
import sympy

from . import __version__

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def fmt(value: Any) -> str:
    """17 significant digits for floats; other values as text."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "" if value is None else str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def _atomic_write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    log.info("wrote %s", path)
    return path


def write_csv(path: str | Path, fieldnames: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fieldnames), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: fmt(row.get(k)) for k in fieldnames})
    return _atomic_write(Path(path), buf.getvalue())


def write_json(path: str | Path, payload: Mapping[str, Any]) -> Path:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=True) + "\n"
    return _atomic_write(Path(path), text)


def provenance(resolved_config: Mapping[str, Any]) -> dict:
    # no timestamps: reports must be byte-identical across runs
    return {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "sympy_version": sympy.__version__,
        "config": _jsonable(resolved_config),
    }


def write_report(out_dir: str | Path, task: str, resolved_config: Mapping[str, Any],
                 result: Mapping[str, Any], status: str = "ok") -> Path:
    payload = {"task": task, "status": status, "provenance": provenance(resolved_config), "result": result}
    return write_json(Path(out_dir) / "report.json", payload)


__all__ = ["fmt", "write_csv", "write_json", "provenance", "write_report"]
