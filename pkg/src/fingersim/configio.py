"""Strict INI-style config parsing shared by the optics and scenario loaders.

Rejects duplicate and unknown keys with file/line diagnostics.
"""

from __future__ import annotations

import configparser
import fnmatch
from pathlib import Path

from .errors import ConfigurationError

__all__ = ["load_config", "validate_schema", "get_floats", "get_float", "get_int", "get_str"]


def load_config(path) -> configparser.ConfigParser:
    """Parse an INI file; duplicate sections/keys raise with line numbers."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    cp = configparser.ConfigParser(strict=True, inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh, source=str(path))
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigurationError(str(exc)) from exc
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return cp


def _key_line(path, section: str, key: str) -> int:
    """Best-effort line number of `key` inside `section` (0 if not found)."""
    current = None
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError:
        return 0
    for i, line in enumerate(lines, start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
        elif current == section and stripped and not stripped.startswith(("#", ";")):
            name = stripped.split("=", 1)[0].split(":", 1)[0].strip()
            if name.lower() == key.lower():
                return i
    return 0


def validate_schema(cp: configparser.ConfigParser, schema: dict, path) -> None:
    """Check every section/key against `schema`.

    Schema maps a section name (fnmatch pattern, e.g. "window.*") to the set
    of allowed keys. Unknown sections or keys raise ConfigurationError naming
    the offender and its line.
    """
    for section in cp.sections():
        allowed = None
        for pattern, keys in schema.items():
            if fnmatch.fnmatchcase(section, pattern):
                allowed = keys
                break
        if allowed is None:
            raise ConfigurationError(f"{path}: unknown section [{section}]")
        for key in cp[section]:
            if key not in allowed:
                line = _key_line(path, section, key)
                where = f"line {line}" if line else "unknown line"
                raise ConfigurationError(
                    f"{path}: unknown key '{key}' in section [{section}] ({where})"
                )


def _require(sec, key: str):
    if key not in sec:
        raise ConfigurationError(f"missing key '{key}' in section [{sec.name}]")
    return sec[key]


def get_floats(sec, key: str, n: int | None = None, default=None):
    """Comma-separated floats; enforces count when `n` is given."""
    if key not in sec and default is not None:
        return list(default)
    raw = _require(sec, key)
    try:
        vals = [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigurationError(f"section [{sec.name}] key '{key}': not numeric: {raw!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigurationError(
            f"section [{sec.name}] key '{key}': expected {n} values, got {len(vals)}"
        )
    return vals


def get_float(sec, key: str, default=None) -> float:
    if key not in sec and default is not None:
        return float(default)
    return get_floats(sec, key, n=1)[0]


def get_int(sec, key: str, default=None) -> int:
    if key not in sec and default is not None:
        return int(default)
    val = get_float(sec, key)
    if val != int(val):
        raise ConfigurationError(f"section [{sec.name}] key '{key}': expected integer")
    return int(val)


def get_str(sec, key: str, default=None) -> str:
    if key not in sec and default is not None:
        return str(default)
    return _require(sec, key).strip()
