"""Flat ``key = value`` configuration files with ``#`` comments."""

from __future__ import annotations

from pathlib import Path

from .errors import ParseError


def parse_key_values(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("empty key", line=lineno)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", line=lineno)
        out[key] = value
    return out


def read_key_values(path: str | Path) -> dict[str, str]:
    return parse_key_values(Path(path).read_text(encoding="utf-8"))
