"""Plain-text ``key=value`` configuration files and typed value parsing."""

from __future__ import annotations

from pathlib import Path

from .mmd import KernelSpec


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def read_kv_file(path: str | Path) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config: file {str(path)!r} does not exist")
    out: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        key, sep, value = text.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key = key.strip()
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def coerce(default, raw):
    """Convert ``raw`` to the type of ``default``; non-strings pass through.

    Tuples are comma-separated and take the element type of the default's
    first entry (float when the default is empty); booleans accept
    true/false/1/0; kernels use the ``family:bw1,bw2`` form.
    """
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low not in ("true", "false", "1", "0"):
            raise ValueError("expected true or false")
        return low in ("true", "1")
    if isinstance(default, KernelSpec):
        return KernelSpec.parse(text)
    if isinstance(default, tuple):
        kind = type(default[0]) if default else float
        items = [x.strip() for x in text.split(",") if x.strip()]
        if kind is int:
            return tuple(int(x) for x in items)
        if kind is str:
            return tuple(items)
        return tuple(float(x) for x in items)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def format_value(value) -> str:
    """Inverse of :func:`coerce` for writing configs and manifests."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)
