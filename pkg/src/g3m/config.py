"""Scenario configuration: a nested YAML file, validated on load.

Unknown keys are rejected and every error names the offending field and,
when it came from a file, its line.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import yaml

from .errors import G3MError

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "market": {"sigma": [0.8, 0.6], "rho": [[1.0, 0.3], [0.3, 1.0]], "mu": [0.0, 0.0]},
    "pool": {"weights": [0.5, 0.5], "fee": 0.003, "inventory": [100.0, 100.0]},
    "grid": {"horizon": 1.0, "dt": "1/8760"},
    "simulate": {"n_paths": 1, "export_paths": False, "noise_rate": 0.0, "noise_fraction": 0.001},
    "il": {"weights": None, "horizon": 1.0, "dt": "1/2190", "n_paths": 10000, "n_se": 4.0},
    "v3": {
        "p0": 1.0,
        "p_a": 0.25,
        "p_b": 4.0,
        "L0": 2.0,
        "lam": 4.0,
        "horizon": 0.25,
        "dt": "1/8760",
        "n_paths": 1000,
        "rebalance_every": 1,
        "n_se": 4.0,
    },
    "analytics": {
        "window": 168,
        "tvl_floor": 200000.0,
        "max_ffill_hours": 6,
        "il_convention": "apy",
        "fee_convention": "apr",
        "center": "D",
        "min_pools": 4,
        "lags": [0, 24, 48, 72, 96, 120, 144, 168, 192, 240, 336, 504, 672],
    },
}


class ConfigError(G3MError):
    pass


def parse_number(value, where: str) -> float:
    """Accept ints, floats and fraction strings such as ``"1/8760"``."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigError(f"{where}: expected a number, got {value!r}")


def _line_index(node, prefix=()) -> dict:
    """Map dotted key paths to 1-based source lines."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for key, val in node.value:
            path = prefix + (str(key.value),)
            out[".".join(path)] = key.start_mark.line + 1
            out.update(_line_index(val, path))
    return out


def _merge(base: dict, override: dict, lines: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        path = f"{prefix}{key}"
        if key not in base:
            where = f" (line {lines[path]})" if path in lines else ""
            raise ConfigError(f"unknown key '{path}'{where}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{path}' must be a mapping")
            out[key] = _merge(base[key], val, lines, path + ".")
        else:
            out[key] = val
    return out


@dataclass
class Config:
    data: dict
    lines: dict = field(default_factory=dict)
    source: str | None = None

    def __getitem__(self, key):
        return self.data[key]

    def where(self, path: str) -> str:
        line = self.lines.get(path)
        return f"{path} (line {line})" if line else path

    def num(self, path: str) -> float:
        sect, key = path.split(".")
        return parse_number(self.data[sect][key], self.where(path))

    def digest(self) -> str:
        blob = json.dumps(self.data, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False)


def load_config(path: str | Path | None = None, text: str | None = None) -> Config:
    """Load and merge a YAML scenario over the defaults."""
    lines: dict = {}
    override: dict = {}
    source = None
    if path is not None:
        source = str(path)
        text = Path(path).read_text()
    if text is not None:
        try:
            node = yaml.compose(text)
            override = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        if not isinstance(override, dict):
            raise ConfigError("config root must be a mapping")
        lines = _line_index(node) if node is not None else {}
    return Config(_merge(DEFAULTS, override, lines), lines, source)


def apply_overrides(cfg: Config, seed=None, paths=None, command: str | None = None) -> Config:
    data = copy.deepcopy(cfg.data)
    if seed is not None:
        data["seed"] = int(seed)
    if paths is not None and command in ("simulate", "il", "v3"):
        data[command]["n_paths"] = int(paths)
    return Config(data, cfg.lines, cfg.source)
