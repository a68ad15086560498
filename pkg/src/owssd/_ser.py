"""Shared JSON (de)serialization helpers.

All writers are deterministic: keys are sorted, no timestamps, floats
are emitted through Python's repr (shortest round-tripping form), so
identical in-memory state always produces byte-identical files.
"""

from __future__ import annotations

import json
import math
import os
from typing import Any, Iterable, Iterator

from .errors import SchemaError


def dump_json_doc(path: str, obj: Any) -> None:
    """Write one JSON document, sorted keys, trailing newline."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def load_json_doc(path: str, expected_schema: str) -> dict:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise SchemaError(f"not valid JSON: {e}", path=path) from e
    if not isinstance(obj, dict):
        raise SchemaError("expected a JSON object at top level", path=path)
    got = obj.get("schema")
    if got != expected_schema:
        raise SchemaError(f"expected schema {expected_schema!r}, got {got!r}", path=path)
    return obj


def dump_jsonl(path: str, header: dict, records: Iterable[dict]) -> None:
    """Write a JSONL file: one header line, then one line per record."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True, allow_nan=False) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n")


def iter_jsonl(path: str, expected_schema: str) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, record) pairs after validating the header line.

    Line numbers are 1-based; the header is line 1, records start at 2.
    Blank trailing lines are ignored.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise SchemaError("empty file, expected a header line", path=path)
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as e:
            raise SchemaError(f"header is not valid JSON: {e}", path=path, line=1) from e
        if not isinstance(header, dict) or header.get("schema") != expected_schema:
            raise SchemaError(
                f"expected schema {expected_schema!r}, got {header.get('schema') if isinstance(header, dict) else header!r}",
                path=path,
                line=1,
            )
        yield 1, header
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"record is not valid JSON: {e}", path=path, line=lineno) from e
            if not isinstance(rec, dict):
                raise SchemaError("record must be a JSON object", path=path, line=lineno)
            yield lineno, rec


def require(cond: bool, message: str, *, path: str | None = None, line: int | None = None) -> None:
    if not cond:
        raise SchemaError(message, path=path, line=line)


def as_float_list(value: Any, what: str, *, path: str | None = None, line: int | None = None) -> list[float]:
    require(isinstance(value, list), f"{what} must be a list", path=path, line=line)
    out = []
    for v in value:
        require(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v),
                f"{what} must contain only finite numbers", path=path, line=line)
        out.append(float(v))
    return out
