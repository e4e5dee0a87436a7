"""Run configuration: a TOML file with flat sections and a canonical writer.

Grammar (every section and key optional)::

    [scenario]
    name = "billiard"          # any other key is a scenario parameter override
    e = 0.8

    [run]
    horizon = 5.0
    h = 1e-3
    adaptive = false
    h_min = 1e-12
    local_tol = 1e-10
    q0 = [0.1, -0.3]           # initial configuration
    p0 = [0.6, 0.8]            # initial momenta; lifted through the family when absent
    max_impacts = 10000
    zeno_dt = 1e-9
    samples = 1000             # verification sample counts
    impact_samples = 100
    grid_samples = 50
    seed = 0

    [tolerances]
    guard_tol = 1e-10
    time_tol = 1e-12
    adm_tol = 1e-8
    constraint_tol = 1e-9
    pass_tol = 1e-8
    compare_tol = 1e-6
    lift_tol = 1e-8

    [family]
    lambda0 = [0.6, 0.8]
    region0 = 0

    [output]
    dir = "out"
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .export import fmt

_NUM = "number"
_INT = "integer"
_BOOL = "boolean"
_STR = "string"
_VEC = "number list"

SCHEMA: dict[str, dict[str, str]] = {
    "scenario": {"name": _STR},
    "run": {
        "horizon": _NUM, "h": _NUM, "adaptive": _BOOL, "h_min": _NUM, "local_tol": _NUM,
        "q0": _VEC, "p0": _VEC, "max_impacts": _INT, "zeno_dt": _NUM,
        "samples": _INT, "impact_samples": _INT, "grid_samples": _INT, "seed": _INT,
    },
    "tolerances": {
        "guard_tol": _NUM, "time_tol": _NUM, "adm_tol": _NUM, "constraint_tol": _NUM,
        "pass_tol": _NUM, "compare_tol": _NUM, "lift_tol": _NUM,
    },
    "family": {"lambda0": _VEC, "region0": _INT},
    "output": {"dir": _STR},
}
SECTIONS = tuple(SCHEMA)

RUN_DEFAULTS = {"horizon": 5.0, "h": 1e-3, "adaptive": False, "h_min": 1e-12, "local_tol": 1e-10,
                "max_impacts": 10000, "zeno_dt": 1e-9, "samples": 1000, "impact_samples": 100,
                "grid_samples": 50, "seed": 0}
TOL_DEFAULTS = {"guard_tol": 1e-10, "time_tol": 1e-12, "adm_tol": 1e-8, "constraint_tol": 1e-9,
                "compare_tol": 1e-6, "lift_tol": 1e-8}
POSITIVE = {"h", "h_min", "local_tol", "zeno_dt", *SCHEMA["tolerances"]}
NON_NEGATIVE = {"horizon"}
COUNTS = {"max_impacts", "samples", "impact_samples", "grid_samples"}


@dataclass
class RunConfig:
    """Parsed configuration; ``params`` holds scenario parameter overrides."""

    scenario: str | None = None
    params: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    family: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        return getattr(self, section).get(key, default)

    def run_value(self, key: str):
        return self.run.get(key, RUN_DEFAULTS.get(key))

    def tol(self, key: str):
        return self.tolerances.get(key, TOL_DEFAULTS.get(key))

    @property
    def out_dir(self) -> Path:
        return Path(self.output.get("dir", "out"))


def _coerce(where: str, kind: str, v):
    if kind == _STR:
        if not isinstance(v, str):
            raise ConfigError(f"{where} must be a string, got {v!r}")
        return v
    if kind == _BOOL:
        if not isinstance(v, bool):
            raise ConfigError(f"{where} must be true or false, got {v!r}")
        return v
    if kind == _INT:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{where} must be an integer, got {v!r}")
        return v
    if kind == _NUM:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where} must be a number, got {v!r}")
        return float(v)
    if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        raise ConfigError(f"{where} must be a list of numbers, got {v!r}")
    return [float(x) for x in v]


def _check_value(section: str, key: str, v) -> None:
    where = f"[{section}] {key}"
    if isinstance(v, float) and not math.isfinite(v):
        raise ConfigError(f"{where} must be finite")
    if isinstance(v, list) and not all(math.isfinite(x) for x in v):
        raise ConfigError(f"{where} must have finite entries")
    if key in POSITIVE and not v > 0:
        raise ConfigError(f"{where} must be positive, got {v}")
    if key in NON_NEGATIVE and not v >= 0:
        raise ConfigError(f"{where} must be non-negative, got {v}")
    if key in COUNTS and not v >= 1:
        raise ConfigError(f"{where} must be at least 1, got {v}")


def from_dict(data: dict) -> RunConfig:
    """Validate a parsed TOML document against the schema."""
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}; allowed: {', '.join(SECTIONS)}")
    cfg = RunConfig()
    for section in SECTIONS:
        body = data.get(section, {})
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        schema = SCHEMA[section]
        for key, v in body.items():
            if section == "scenario" and key != "name":
                # parameter override; names are checked against the scenario's schema later
                cfg.params[key] = _coerce(f"[scenario] {key}", _NUM, v)
                _check_value(section, key, cfg.params[key])
                continue
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in [{section}]; allowed: {', '.join(sorted(schema))}")
            val = _coerce(f"[{section}] {key}", schema[key], v)
            _check_value(section, key, val)
            if section == "scenario":
                cfg.scenario = val
            else:
                getattr(cfg, section)[key] = val
    return cfg


def loads(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None
    return from_dict(data)


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        s = fmt(v)
        return s if any(c in s for c in ".en") else s + ".0"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {v!r} to a config")


def dumps(cfg: RunConfig) -> str:
    """Canonical text: fixed section order, sorted keys, 17-digit floats, empty sections omitted."""
    blocks = []
    for section in SECTIONS:
        if section == "scenario":
            items = ({"name": cfg.scenario} if cfg.scenario is not None else {}) | dict(cfg.params)
        else:
            items = getattr(cfg, section)
        if not items:
            continue
        lines = [f"[{section}]"]
        if section == "scenario" and "name" in items:
            lines.append(f"name = {_toml_value(items['name'])}")
        lines += [f"{k} = {_toml_value(items[k])}" for k in sorted(items) if not (section == "scenario" and k == "name")]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def canonicalize(text: str) -> str:
    return dumps(loads(text))


def parse_assignment(item: str) -> tuple[str, str, object]:
    """``section.key=value`` or ``key=value`` (a scenario parameter) from ``--set``."""
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = (s.strip() for s in item.split("=", 1))
    if not key:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    if "." in key:
        section, name = key.split(".", 1)
    else:
        section, name = "scenario", key
    return section, name, value


def apply_overrides(cfg: RunConfig, assignments: list[tuple[str, str, object]]) -> RunConfig:
    """New config with the assignments applied and revalidated."""
    data = to_dict(cfg)
    for section, key, value in assignments:
        if section not in SCHEMA:
            raise ConfigError(f"unknown section {section!r} in override; allowed: {', '.join(SECTIONS)}")
        data.setdefault(section, {})[key] = value
    return from_dict(data)


def to_dict(cfg: RunConfig) -> dict:
    data = {s: copy.deepcopy(getattr(cfg, s)) for s in SECTIONS if s != "scenario"}
    data["scenario"] = dict(cfg.params)
    if cfg.scenario is not None:
        data["scenario"]["name"] = cfg.scenario
    return data
