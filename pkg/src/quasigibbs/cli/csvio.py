"""Versioned CSV emission with deterministic bytes.

Every file starts with a ``# schema=...`` line and a ``# provenance`` line
carrying the config hash and master seeds; identical configs and seeds
produce byte-identical output. Floats are rendered with repr, the shortest
round-trip form.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

from ..errors import CsvSchemaError

SCHEMA_PREFIX = "quasigibbs"


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(
    path: str | Path,
    schema: str,
    meta: dict,
    header: Sequence[str],
    rows: Iterable[Sequence],
) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# schema={SCHEMA_PREFIX}.{schema}"]
    meta_items = " ".join(f"{k}={format_value(v)}" for k, v in sorted(meta.items()))
    lines.append(f"# provenance {meta_items}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    p.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return p


def read_csv(path: str | Path, expect_schema: str | None = None) -> tuple[str, list[str], list[list[str]]]:
    """Read a versioned CSV; returns (schema, header, rows of strings)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# schema="):
        raise CsvSchemaError(f"{path}: missing schema line")
    schema = lines[0].split("=", 1)[1]
    if expect_schema is not None and schema != f"{SCHEMA_PREFIX}.{expect_schema}":
        raise CsvSchemaError(
            f"{path}: schema {schema!r}, expected {SCHEMA_PREFIX}.{expect_schema!r}"
        )
    body = [ln for ln in lines[1:] if ln and not ln.startswith("#")]
    if not body:
        raise CsvSchemaError(f"{path}: no header row")
    header = body[0].split(",")
    rows = [ln.split(",") for ln in body[1:]]
    return schema, header, rows
