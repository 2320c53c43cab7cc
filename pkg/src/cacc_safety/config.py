"""YAML run configuration: defaults, validation, overrides and object construction."""

from __future__ import annotations

import copy
import itertools
from pathlib import Path

import yaml

from .dynamics import MODES, ScenarioConfig
from .errors import ConfigError, DistributionError
from .gains import GainSet
from .montecarlo import CampaignConfig
from .stochastic import DEFAULT_SUPPORT, DecelDistribution, standin_distribution, uniform_distribution

DEFAULTS = {
    "platoon": {"N": 10, "v0": 25.0, "d": 6.0},
    "gains": {"ka": 0.2, "kv": 0.92, "kp": 0.03, "hw": 0.86},
    "topology": {"r": 1},
    "scenario": {
        "mode": "coordinated",
        "tau": 0.5,
        "tau0": 0.5,
        "T": 50.0,
        "h": 0.01,
        "clamp_reverse": True,
        "leader_through_lag": True,
        "D0_sweep": None,
    },
    "decel": {"preset": "standin", "values": None, "probs": None},
    "mc": {"n": 2000, "seed": 42, "threads": 1, "allow_infeasible_gains": False},
    "validate": {"N": 3, "D0": [4.75, 7.25, 9.75], "n": None, "delta": 0.01},
    "region": {"r": [1, 2, 3, 4], "samples": 100},
    "output": {"dir": "results", "dump_trajectories": False},
}

# keys whose value may be a scalar or a list of variants
_LISTABLE = {("platoon", "d"), ("topology", "r")}
# nullable keys and the kind of value they take when set
_NULLABLE = {
    ("scenario", "D0_sweep"): "numbers",
    ("decel", "values"): "numbers",
    ("decel", "probs"): "probabilities",
    ("validate", "n"): "int",
}
_PRESETS = ("uniform", "standin", "custom")


def _type_ok(default, value) -> bool:
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    if isinstance(default, list):
        return isinstance(value, list)
    return True


def _check_section(name, given, defaults):
    if not isinstance(given, dict):
        raise ConfigError(f"section '{name}' must be a mapping, got {type(given).__name__}")
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown key '{name}.{key}' (allowed: {', '.join(defaults)})")
        default = defaults[key]
        kind = _NULLABLE.get((name, key))
        if value is None and kind is not None:
            continue
        if kind == "int":
            if not _type_ok(1, value) or value < 1:
                raise ConfigError(f"'{name}.{key}' must be a positive integer or null, got {value!r}")
            continue
        if kind is not None:
            allowed = (lambda v: _type_ok(1.0, v) or isinstance(v, str)) if kind == "probabilities" else (
                lambda v: _type_ok(1.0, v)
            )
            if not isinstance(value, list) or not all(allowed(v) for v in value):
                raise ConfigError(f"'{name}.{key}' must be a list of {kind}, got {value!r}")
            continue
        if (name, key) in _LISTABLE and isinstance(value, list):
            if not value or not all(_type_ok(default, v) for v in value):
                raise ConfigError(f"'{name}.{key}' must be a {type(default).__name__} or a non-empty list of them")
            continue
        if isinstance(default, list) and isinstance(value, (int, float)) and not isinstance(value, bool):
            continue
        if not _type_ok(default, value):
            raise ConfigError(f"'{name}.{key}' must be {type(default).__name__}, got {value!r}")


def merge(user: dict | None) -> dict:
    """Validate ``user`` against the known sections and overlay it on the defaults."""
    cfg = copy.deepcopy(DEFAULTS)
    if user is None:
        return cfg
    if not isinstance(user, dict):
        raise ConfigError("configuration must be a mapping of sections")
    for name, section in user.items():
        if name not in DEFAULTS:
            raise ConfigError(f"unknown section '{name}' (allowed: {', '.join(DEFAULTS)})")
        if section is None:
            continue
        _check_section(name, section, DEFAULTS[name])
        cfg[name].update(copy.deepcopy(section))
    if cfg["scenario"]["mode"] not in MODES:
        raise ConfigError(f"'scenario.mode' must be one of {MODES}, got {cfg['scenario']['mode']!r}")
    if cfg["decel"]["preset"] not in _PRESETS:
        raise ConfigError(f"'decel.preset' must be one of {_PRESETS}")
    return cfg


def load(path) -> dict:
    """Read a YAML config, or the config snapshot embedded in a run manifest."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{path}: parse error at {where}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    if isinstance(data, dict) and "config" in data and "tool_version" in data:
        data = data["config"]
    return merge(data)


def _parse_number(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return float(text)


def apply_sweep(cfg: dict, spec: str) -> None:
    """Apply one ``--sweep KEY=V1,V2,...`` override (keys: d, r, D0)."""
    if "=" not in spec:
        raise ConfigError(f"--sweep expects KEY=V1,V2,..., got {spec!r}")
    key, _, rhs = spec.partition("=")
    try:
        vals = [_parse_number(v) for v in rhs.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--sweep {key}: values must be numbers, got {rhs!r}") from None
    if not vals:
        raise ConfigError(f"--sweep {key}: no values given")
    key = key.strip()
    if key == "d":
        cfg["platoon"]["d"] = [float(v) for v in vals]
    elif key == "r":
        if not all(isinstance(v, int) for v in vals):
            raise ConfigError("--sweep r: values must be integers")
        cfg["topology"]["r"] = vals
        cfg["region"]["r"] = vals
    elif key == "D0":
        cfg["scenario"]["D0_sweep"] = [float(v) for v in vals]
    else:
        raise ConfigError(f"--sweep: unknown key {key!r} (allowed: d, r, D0)")


def parse_variant(spec: str) -> tuple:
    """Parse ``r=2,d=4`` into ``(2, 4.0)``."""
    parts = dict(p.split("=", 1) for p in spec.split(",") if "=" in p)
    if set(parts) != {"r", "d"}:
        raise ConfigError(f"--variant expects r=INT,d=NUM, got {spec!r}")
    try:
        return int(parts["r"]), float(parts["d"])
    except ValueError:
        raise ConfigError(f"--variant: bad number in {spec!r}") from None


def _as_list(x):
    return list(x) if isinstance(x, list) else [x]


def build_distribution(cfg: dict) -> DecelDistribution:
    dec = cfg["decel"]
    values = tuple(dec["values"]) if dec["values"] is not None else DEFAULT_SUPPORT
    try:
        if dec["preset"] == "uniform":
            return uniform_distribution(values)
        if dec["preset"] == "standin":
            return standin_distribution(values)
        if dec["probs"] is None:
            raise ConfigError("'decel.probs' is required when decel.preset is custom")
        return DecelDistribution(values, tuple(dec["probs"]))
    except DistributionError as exc:
        raise ConfigError(f"decel: {exc}") from None


def variants(cfg: dict, explicit=None) -> list:
    """``(r, d)`` pairs: the explicit list if given, else the cross product of topology.r and platoon.d."""
    if explicit:
        return list(explicit)
    rs = [int(r) for r in _as_list(cfg["topology"]["r"])]
    ds = [float(d) for d in _as_list(cfg["platoon"]["d"])]
    return list(itertools.product(rs, ds))


def build_gains(cfg: dict, r: int) -> GainSet:
    g = cfg["gains"]
    try:
        return GainSet(float(g["ka"]), float(g["kv"]), float(g["kp"]), int(r), float(g["hw"]))
    except ValueError as exc:
        raise ConfigError(f"gains: {exc}") from None


def build_scenario(cfg: dict, r: int, d: float, N: int | None = None) -> ScenarioConfig:
    p, s = cfg["platoon"], cfg["scenario"]
    try:
        return ScenarioConfig(
            mode=s["mode"],
            N=int(N if N is not None else p["N"]),
            d=float(d),
            v0=float(p["v0"]),
            gains=build_gains(cfg, r),
            tau=float(s["tau"]),
            clamp_reverse=bool(s["clamp_reverse"]),
            leader_through_lag=bool(s["leader_through_lag"]),
            T=float(s["T"]),
            h=float(s["h"]),
        )
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from None


def build_campaign(cfg: dict, r: int, d: float, dist: DecelDistribution | None = None) -> CampaignConfig:
    dist = dist or build_distribution(cfg)
    sweep = cfg["scenario"]["D0_sweep"]
    mc = cfg["mc"]
    try:
        return CampaignConfig(
            build_scenario(cfg, r, d),
            dist,
            n=int(mc["n"]),
            seed=int(mc["seed"]),
            D0_sweep=tuple(float(x) for x in sweep) if sweep is not None else None,
            tau0=float(cfg["scenario"]["tau0"]),
            allow_infeasible_gains=bool(mc["allow_infeasible_gains"]),
        )
    except ValueError as exc:
        raise ConfigError(f"campaign: {exc}") from None
