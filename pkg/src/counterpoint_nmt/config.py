"""Plain ``key = value`` configuration files."""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any, TypeVar

T = TypeVar("T")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines. Blank lines and ``#`` comments are skipped."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def format_kv(values: dict[str, Any]) -> str:
    return "".join(f"{k} = {_format(v)}\n" for k, v in values.items())


def _format(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return " ".join(str(x) for x in v)
    return str(v)


def coerce(value: str, like: Any) -> Any:
    """Convert ``value`` to the type of the default ``like``."""
    if isinstance(like, bool):
        low = value.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def load_into(cls: type[T], values: dict[str, str], strict: bool = False) -> T:
    """Build dataclass ``cls`` from string values, typed after its defaults.

    Unknown keys are ignored unless ``strict``; they may belong to another
    section of a shared run configuration.
    """
    defaults = cls()  # type: ignore[call-arg]
    kwargs = {}
    names = {f.name for f in dataclasses.fields(cls)}  # type: ignore[arg-type]
    for key, raw in values.items():
        if key not in names:
            if strict:
                raise ValueError(f"unknown key {key!r} for {cls.__name__}")
            continue
        kwargs[key] = coerce(raw, getattr(defaults, key))
    return dataclasses.replace(defaults, **kwargs)  # type: ignore[type-var]


def read_config(path: str | Path) -> dict[str, str]:
    return parse_kv(Path(path).read_text(encoding="utf-8"))
