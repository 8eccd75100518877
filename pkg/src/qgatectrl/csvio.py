"""CSV and gnuplot-table emission with lossless round trips.

Every output file starts with `# key=value` comment lines (config hash, seed,
artifact version) followed by a header row. Floats serialize via repr, so
reading a file back reproduces the exact values written.
"""

from __future__ import annotations

import math
from pathlib import Path


def format_value(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(
    path: str | Path,
    fieldnames: list[str],
    rows: list[dict],
    meta: dict[str, str] | None = None,
    trailer: dict[str, str] | None = None,
) -> None:
    lines = [f"# {k}={v}" for k, v in (meta or {}).items()]
    lines.append(",".join(fieldnames))
    for row in rows:
        lines.append(",".join(format_value(row[name]) for name in fieldnames))
    for k, v in (trailer or {}).items():
        lines.append(f"# {k}={v}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_table(path: str | Path) -> tuple[list[str], list[dict[str, str]], dict[str, str]]:
    """Returns (fieldnames, rows-as-strings, merged comment metadata)."""
    fieldnames: list[str] | None = None
    rows: list[dict[str, str]] = []
    meta: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        if fieldnames is None:
            fieldnames = line.split(",")
            continue
        values = line.split(",")
        if len(values) != len(fieldnames):
            raise ValueError(f"malformed row in {path}: {line!r}")
        rows.append(dict(zip(fieldnames, values)))
    if fieldnames is None:
        raise ValueError(f"{path} has no header row")
    return fieldnames, rows, meta


def write_dat(
    path: str | Path,
    fieldnames: list[str],
    rows: list[dict],
    meta: dict[str, str] | None = None,
) -> None:
    """Gnuplot-compatible whitespace-separated mirror of a CSV table."""
    lines = [f"# {k}={v}" for k, v in (meta or {}).items()]
    lines.append("# " + " ".join(fieldnames))
    for row in rows:
        lines.append(" ".join(format_value(row[name]) for name in fieldnames))
    Path(path).write_text("\n".join(lines) + "\n")


def parse_float(text: str) -> float:
    value = float(text)
    return value


def parse_optional_float(text: str) -> float:
    return math.nan if text in ("", "nan") else float(text)
