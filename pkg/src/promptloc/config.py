"""Config loading: packaged defaults, optionally overlaid by a user YAML file."""

from __future__ import annotations

import copy
import os
from importlib import resources
from pathlib import Path

import yaml

ENV_VAR = "PROMPTLOC_CONFIG"


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    text = resources.files("promptloc").joinpath("default_config.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


def merge(base: dict, override: dict, path="") -> dict:
    """Recursive overlay; unknown keys are rejected so typos surface early."""
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be a mapping")
            out[key] = merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def load_config(path=None) -> dict:
    """Defaults overlaid by ``path``, else by $PROMPTLOC_CONFIG when set."""
    cfg = default_config()
    path = path or os.environ.get(ENV_VAR)
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} does not exist")
        user = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        if not isinstance(user, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
        cfg = merge(cfg, user)
    return cfg
