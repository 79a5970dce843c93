"""
Report formats: JSON documents and CSV time series.

Numbers are written with 17 significant digits so a report read back
reproduces every float bit for bit. Non-finite JSON values become ``null``;
CSV tables are written by ``numpy.savetxt`` and spell them ``nan`` and ``inf``.
"""

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Union

import numpy as np
from pydantic import BaseModel

from .errors import InvalidParameterError, ReportIOError

INDENT = "  "


@dataclass
class EmittedFile:
    """A report file written to disk."""

    path: Path
    format_name: str
    size: int


def get_supported_formats() -> Dict[str, str]:
    """Get mapping of report formats to descriptions."""
    return {"json": "JSON report", "csv": "CSV time series"}


def format_number(value: float) -> str:
    """17 significant digits; ``null`` for NaN and infinities."""
    value = float(value)
    if not math.isfinite(value):
        return "null"
    return f"{value:.17g}"


def _plain(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, tuple):
        return list(value)
    return value


def _is_scalar(value: Any) -> bool:
    return not isinstance(value, (dict, list))


def _encode(value: Any, depth: int) -> str:
    value = _plain(value)
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_number(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    pad, inner = INDENT * depth, INDENT * (depth + 1)
    if isinstance(value, Mapping):
        if not value:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, depth + 1)}"
            for k, v in value.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(value, list):
        elements = [_plain(v) for v in value]
        if all(_is_scalar(v) for v in elements):
            return "[" + ", ".join(_encode(v, depth + 1) for v in elements) + "]"
        items = [f"{inner}{_encode(v, depth + 1)}" for v in elements]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    raise InvalidParameterError(f"cannot serialize {type(value).__name__}")


def dumps_report(document: Any) -> str:
    """Serialize a report document deterministically (key order preserved)."""
    return _encode(document, 0) + "\n"


def csv_table(
    times: Sequence[float], states: np.ndarray, rates: np.ndarray
) -> str:
    """Time series with header ``t,k_1..k_N,c_1..c_N``."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    rates = np.atleast_2d(np.asarray(rates, dtype=float))
    times = np.asarray(times, dtype=float).reshape(-1)
    if not (times.size == states.shape[0] == rates.shape[0]):
        raise InvalidParameterError("times, states and rates must have equal length")
    n = states.shape[1]
    header = ["t"] + [f"k_{i}" for i in range(1, n + 1)] + [f"c_{i}" for i in range(1, n + 1)]
    buffer = io.StringIO()
    np.savetxt(
        buffer,
        np.column_stack([times, states, rates]),
        fmt="%.17g",
        delimiter=",",
        header=",".join(header),
        comments="",
    )
    return buffer.getvalue()



def _write(path: Path, text: str, format_name: str) -> EmittedFile:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        path.write_bytes(data)
    except OSError as e:
        raise ReportIOError(f"cannot write report: {e}", field=str(path)) from e
    return EmittedFile(path=path, format_name=format_name, size=len(data))


def emit_report(
    results: Union[Mapping[str, Any], List[Any]],
    format_name: str,
    out_dir: Union[str, Path],
    stem: str,
) -> EmittedFile:
    """Write a report as ``<out_dir>/<stem>.<format>``.

    Args:
        results: Report document; for ``csv`` a mapping with ``times``,
            ``states`` and ``rates``.
        format_name: One of ``get_supported_formats()``.
        out_dir: Output directory, created if missing.
        stem: File name without extension.

    Returns:
        The emitted file.
    """
    if format_name not in get_supported_formats():
        raise InvalidParameterError(f"unsupported report format: {format_name}")
    path = Path(out_dir) / f"{stem}.{format_name}"
    if format_name == "json":
        return _write(path, dumps_report(results), format_name)
    text = csv_table(results["times"], results["states"], results["rates"])
    return _write(path, text, format_name)
