"""Trace CSV and JSON artifact serialization.

Trace files are plain CSV with the header ``omega,re,im,setting`` and 17
significant digits per float, enough to round-trip IEEE doubles exactly.
All writes go through a write-temp-then-rename path so a crashed run never
leaves a half-written artifact behind.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile

import numpy as np

from .errors import ParameterError
from .forward import ReflectionTrace
from .line_model import BoundarySetting

_FLOAT_FMT = "%.17g"


def _atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_trace(path, trace: ReflectionTrace) -> None:
    """Write one reflection trace as ``omega,re,im,setting`` CSV."""
    lines = ["omega,re,im,setting"]
    setting = trace.setting.value
    for w, r in zip(trace.omegas, trace.values):
        lines.append(
            f"{_FLOAT_FMT % w},{_FLOAT_FMT % r.real},"
            f"{_FLOAT_FMT % r.imag},{setting}"
        )
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_trace(path) -> ReflectionTrace:
    """Read a trace CSV written by :func:`write_trace`.

    The file must be non-empty and carry a single boundary setting.
    """
    omegas, values, settings = [], [], set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParameterError(f"trace file is empty: {path}")
        if [c.strip().lower() for c in header] != ["omega", "re", "im", "setting"]:
            raise ParameterError(
                f"trace file {path} must start with 'omega,re,im,setting'"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParameterError(f"{path}:{lineno}: expected 4 columns")
            try:
                omegas.append(float(row[0]))
                values.append(complex(float(row[1]), float(row[2])))
            except ValueError as exc:
                raise ParameterError(f"{path}:{lineno}: {exc}") from None
            settings.add(row[3].strip())
    if not omegas:
        raise ParameterError(f"trace file has no samples: {path}")
    if len(settings) != 1:
        raise ParameterError(
            f"trace file {path} mixes boundary settings {sorted(settings)}"
        )
    setting = BoundarySetting.parse(settings.pop())
    return ReflectionTrace(np.asarray(omegas), np.asarray(values), setting)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, BoundarySetting):
        return obj.value
    return obj


def write_json(path, payload: dict) -> None:
    """Serialize a result payload as deterministic, sorted-key JSON."""
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    _atomic_write_text(path, text + "\n")


def write_samples_csv(path, columns: dict) -> None:
    """Write named float columns (plot data) as CSV with full precision."""
    names = list(columns)
    arrays = [np.asarray(columns[n], dtype=float) for n in names]
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise ParameterError("plot CSV columns have mismatched lengths")
    lines = [",".join(names)]
    for i in range(n):
        lines.append(",".join(_FLOAT_FMT % a[i] for a in arrays))
    _atomic_write_text(path, "\n".join(lines) + "\n")
