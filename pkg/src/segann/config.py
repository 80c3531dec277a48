"""Run configuration: JSON files merged with command-line overrides.

A config file may carry three sections ("build", "search", "runtime") plus
a "prices" path. Flags always win over file values; unknown keys are
rejected rather than ignored so typos surface early.
"""

from __future__ import annotations

import dataclasses
import json
from typing import Optional

from .builder import BuildParams, SearchParams
from .errors import ConfigError
from .runtime import RunOptions

_SECTIONS = {
    "build": BuildParams,
    "search": SearchParams,
    "runtime": RunOptions,
}


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config root must be an object")
    for section in raw:
        if section not in _SECTIONS and section != "prices":
            raise ConfigError(f"{path}: unknown config section {section!r}")
    return raw


def build_section(config: dict, section: str, overrides: Optional[dict] = None):
    """Instantiate one section dataclass from file values plus overrides
    (override entries set to None are treated as absent)."""
    cls = _SECTIONS[section]
    values = dict(config.get(section, {}))
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown {section} option(s): {sorted(unknown)}")
    for key, val in (overrides or {}).items():
        if val is not None:
            if key not in known:
                raise ConfigError(f"unknown {section} option {key!r}")
            values[key] = val
    return cls(**values)
