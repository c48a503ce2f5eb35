"""Flat ``key = value`` config files with ``#`` comments."""

from __future__ import annotations


def parse_config(path) -> dict[str, str]:
    """Read a flat key/value config file; later keys override earlier ones."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            values[key.strip()] = value.split("#", 1)[0].strip()
    return values


def get_int(cfg: dict[str, str], key: str, default: int) -> int:
    return int(cfg[key]) if key in cfg else default


def get_float(cfg: dict[str, str], key: str, default: float) -> float:
    return float(cfg[key]) if key in cfg else default


def get_list(cfg: dict[str, str], key: str, default: tuple[str, ...]) -> tuple[str, ...]:
    if key not in cfg:
        return default
    return tuple(part.strip() for part in cfg[key].split(",") if part.strip())
