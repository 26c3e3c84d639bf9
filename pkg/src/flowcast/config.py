"""Flat key-value configuration files.

One ``key = value`` pair per line, ``#`` comments, no sections.  Values stay
strings; consumers coerce.  CLI flags override file entries.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ParseError


def read_config(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected 'key = value'", line_number=lineno)
            key, value = line.split("=", 1)
            key = key.strip()
            if not key:
                raise ParseError(f"{path}:{lineno}: empty key", line_number=lineno)
            out[key] = value.strip()
    return out


def apply_overrides(cfg: dict[str, str], overrides: list[str]) -> dict[str, str]:
    """Fold repeated ``--set key=value`` flags into a config dict."""
    merged = dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ParseError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        merged[key.strip()] = value.strip()
    return merged
