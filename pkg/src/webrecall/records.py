"""On-disk record encoding shared by every persisted artifact.

A file is newline-delimited JSON: the first line is a header object carrying
``schema`` (integer version) and ``kind``; each following line is one record.
Keys are sorted and separators fixed so equal content gives equal bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable

from .errors import SchemaError, VersionMismatch

SCHEMA_VERSION = 1


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_records(path: str | Path, kind: str, records: Iterable[Any], **meta: Any) -> None:
    header = {"schema": SCHEMA_VERSION, "kind": kind, **meta}
    lines = [dumps(header), *(dumps(r) for r in records)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_records(path: str | Path, kind: str) -> tuple[dict[str, Any], list[Any]]:
    """Return ``(header, records)``; raises SchemaError or VersionMismatch."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{path}: not UTF-8 text") from exc
    lines = [line for line in text.split("\n") if line.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty file, missing header")
    try:
        header = json.loads(lines[0])
        records = [json.loads(line) for line in lines[1:]]
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed record: {exc}") from exc
    if not isinstance(header, dict) or not isinstance(header.get("schema"), int):
        raise SchemaError(f"{path}: header lacks an integer schema field")
    if header["schema"] != SCHEMA_VERSION:
        raise VersionMismatch(f"{path}: schema {header['schema']} (this build reads {SCHEMA_VERSION})")
    if header.get("kind") != kind:
        raise SchemaError(f"{path}: expected kind {kind!r}, found {header.get('kind')!r}")
    return header, records
