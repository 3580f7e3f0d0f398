"""Flat ``key = value`` scenario configuration shared by every subcommand."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


def _int_list(text):
    text = str(text).strip()
    if not text:
        return []
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _str_list(text):
    return [p.strip() for p in str(text).split(",") if p.strip()]


def _optional(conv):
    def parse(text):
        if text is None or str(text).strip().lower() in ("", "none", "auto"):
            return None
        return conv(text)
    return parse


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ScenarioConfig:
    # model
    kind: str = "nonlinear"
    n: int | None = None
    N: int = 2
    omega0: float = 1.0
    coupling: float = 1.0
    coupling_mode: str = "g1"
    # initial charger state: fock | coherent | squeezed | custom
    initial: str = "fock"
    initial_level: int | None = None
    amplitudes_file: str | None = None
    # time grid
    t_max: float = 3.0
    num_points: int = 1001
    time_unit: str = "g1"
    insert_peak: bool = True  # add the refined optimal time to the trace grid
    # cutoff overrides
    dim_a: int | None = None
    dim_b: int | None = None
    max_dim: int = 4096
    # outputs
    out: str = "trace.csv"
    json: str | None = None
    seed: int = 0
    preset: str | None = None
    # sweep / verify
    N_list: list = dataclasses.field(default_factory=lambda: list(range(2, 13)))
    quadrature_nodes: int = 2001
    mapping_factor: float = 1.0
    suites: list = dataclasses.field(default_factory=list)
    # classical
    frame: str = "rotating"
    dt: float | None = None
    # josephson
    E_J: float = 1.0
    lambda1: float = 0.05
    lambda2: float = 0.05
    omega2: float = 1.0
    max_order: int | None = None
    renormalize_frequencies: bool = False

    def resolved(self) -> dict:
        """Plain dict of every field, suitable for embedding in outputs."""
        return dataclasses.asdict(self)

    @property
    def json_path(self) -> Path:
        return Path(self.json) if self.json else Path(self.out).with_suffix(".json")


_PARSERS = {
    "kind": str, "n": _optional(int), "N": int, "omega0": float, "coupling": float,
    "coupling_mode": str, "initial": str, "initial_level": _optional(int),
    "amplitudes_file": _optional(str), "t_max": float, "num_points": int,
    "time_unit": str, "insert_peak": _bool, "dim_a": _optional(int), "dim_b": _optional(int), "max_dim": int,
    "out": str, "json": _optional(str), "seed": int, "preset": _optional(str),
    "N_list": _int_list, "quadrature_nodes": int, "mapping_factor": float,
    "suites": _str_list, "frame": str, "dt": _optional(float), "E_J": float,
    "lambda1": float, "lambda2": float, "omega2": float, "max_order": _optional(int),
    "renormalize_frequencies": _bool,
}
# accept the common spellings g1 / g_n for the coupling value
_ALIASES = {"g1": "coupling", "g_n": "coupling", "gn": "coupling"}

_CHOICES = {
    "kind": ("linear", "nonlinear"),
    "coupling_mode": ("g1", "direct"),
    "initial": ("fock", "coherent", "squeezed", "custom"),
    "time_unit": ("g1", "transfer"),
    "frame": ("lab", "rotating"),
    "preset": (None, "compare-inputs"),
}

# keys a preset fills in unless the file or the command line sets them
PRESETS = {
    "compare-inputs": {
        "kind": "nonlinear", "n": "2", "N": "2", "coupling": "1.0", "coupling_mode": "direct",
        "time_unit": "transfer", "t_max": "3.0", "max_dim": "8192",
    },
}

assert set(_PARSERS) == {f.name for f in fields(ScenarioConfig)}


def read_config_file(path) -> dict:
    pairs = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def _canonical_key(key):
    key = key.strip().lstrip("-").replace("-", "_")
    if key in _PARSERS:
        return key
    key = _ALIASES.get(key, key)
    for name in _PARSERS:
        if name.lower() == key.lower():
            return name
    raise ConfigError(f"unknown configuration key {key!r}")


def build_config(file_pairs=None, overrides=None) -> ScenarioConfig:
    """Merge file pairs and ``--key value`` overrides (overrides win) and validate."""
    raw = {}
    for source in (file_pairs or {}, overrides or {}):
        for key, value in source.items():
            name = _canonical_key(key)
            if key.strip().lstrip("-") in ("g1", "g_n", "gn") and "coupling_mode" not in raw:
                raw["coupling_mode"] = "g1" if key.strip().lstrip("-") == "g1" else "direct"
            raw[name] = value
    preset = raw.get("preset")
    if preset is not None and str(preset).strip().lower() not in ("", "none"):
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        raw = {**PRESETS[preset], **raw}
    values = {}
    for name, text in raw.items():
        try:
            values[name] = _PARSERS[name](text)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {name}: {text!r} ({exc})") from exc
    cfg = ScenarioConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig):
    for name, allowed in _CHOICES.items():
        if getattr(cfg, name) not in allowed:
            raise ConfigError(f"{name} must be one of {allowed}, got {getattr(cfg, name)!r}")
    if cfg.num_points < 2:
        raise ConfigError("num_points must be at least 2")
    if not (cfg.t_max > 0 and math.isfinite(cfg.t_max)):
        raise ConfigError("t_max must be positive")
    if cfg.N < 1 or (cfg.n is not None and cfg.n < 1):
        raise ConfigError("N and n must be positive")
    if not cfg.omega0 > 0 or not cfg.coupling > 0:
        raise ConfigError("omega0 and coupling must be positive")
    if cfg.initial == "custom" and not cfg.amplitudes_file:
        raise ConfigError("initial = custom needs amplitudes_file")
    if cfg.dt is not None and not cfg.dt > 0:
        raise ConfigError("dt must be positive")
