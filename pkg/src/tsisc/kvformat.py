"""Plain ``key=value`` text files used for calibrations, constants and run configs."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ConfigError


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_kv(path) -> dict[str, str]:
    return parse_kv(Path(path).read_text())


def format_value(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def write_kv(path, items: dict, header: str | None = None) -> None:
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.extend(f"{k}={format_value(v)}" for k, v in items.items())
    Path(path).write_text("\n".join(lines) + "\n")
