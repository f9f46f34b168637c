"""Flat ``key = value`` config and sweep files.

Keys match the ``SystemConfig`` field names; channel gains are given in dB
with a ``_db`` suffix (``sigma_SD2_db = -10``).  ``#`` starts a comment.
Sweep files use the same keys plus ``sweep.*`` entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .model import (
    SIGMA_SS2_DEFAULT_DB,
    ChannelProfile,
    Protocol,
    Sensing,
    SystemConfig,
    db_to_linear,
    linear_to_db,
)

PERFECT = "PERFECT"
SENSING_MODES = ("IS", "CS", PERFECT)
SWEEP_VARIABLES = ("L", "q", "P_S", "lambda_P")

_CHANNEL_KEYS = {
    f"{name}_db": name
    for name in ("sigma_PD2", "sigma_PR2", "sigma_PS2", "sigma_SR2", "sigma_SD2", "sigma_SS2")
}
_FLOAT_KEYS = ("P_P", "P_S", "sigma_N2", "beta", "p_d", "p_f", "q", "lambda_P")
_OPTIONAL = {"sigma_SS2_db", "p_d_star", "p_f_star", "sensing", "protocol"}
_SWEEP_KEYS = ("sweep.variable", "sweep.values", "sweep.protocols", "sweep.sensing", "sweep.optimize_q")


class ConfigError(ValueError):
    def __init__(self, message, line=None, source="<config>"):
        where = f"{source}:{line}: " if line else f"{source}: "
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class LoadedConfig:
    config: SystemConfig
    notes: tuple = ()


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    values: tuple
    fixed: SystemConfig
    protocols: tuple
    sensing_modes: tuple
    optimize_q: bool = False
    notes: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(f"sweep variable must be one of {SWEEP_VARIABLES}")
        if not self.values:
            raise ValueError("sweep values must be nonempty")
        if not self.protocols:
            raise ValueError("sweep needs at least one protocol")
        if not self.sensing_modes:
            raise ValueError("sweep needs at least one sensing mode")
        for v in self.values:
            apply_variable(self.fixed, self.variable, v)


def apply_variable(cfg: SystemConfig, variable: str, value) -> SystemConfig:
    if variable == "L":
        if int(value) != value:
            raise ValueError(f"L must be an integer, got {value!r}")
        return cfg.replace(L=int(value))
    return cfg.replace(**{variable: float(value)})


def apply_sensing(cfg: SystemConfig, mode: str) -> SystemConfig:
    """PERFECT is individual sensing with p_d = 1 and p_f = 0."""
    if mode == PERFECT:
        return cfg.replace(sensing=Sensing.IS, p_d=1.0, p_f=0.0, p_d_star=None, p_f_star=None)
    return cfg.replace(sensing=Sensing(mode))


def _parse_lines(text, source):
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, source)
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno, source)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r}", lineno, source)
        entries[key] = (value, lineno)
    return entries


def _number(entries, key, source, kind=float):
    value, line = entries[key]
    try:
        if kind is int:
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        return float(value)
    except ValueError:
        raise ConfigError(f"{key} expects {'an integer' if kind is int else 'a number'}, got {value!r}", line, source) from None


def _build_config(entries, source, allow_sensing_perfect=True):
    required = {"L", *_FLOAT_KEYS, *_CHANNEL_KEYS} - _OPTIONAL
    missing = sorted(required - entries.keys())
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}", None, source)
    notes = []
    kw = {"L": _number(entries, "L", source, int)}
    for key in _FLOAT_KEYS:
        kw[key] = _number(entries, key, source)
    chan = {}
    for key, name in _CHANNEL_KEYS.items():
        if key in entries:
            chan[name] = db_to_linear(_number(entries, key, source))
    if "sigma_SS2" not in chan:
        chan["sigma_SS2"] = db_to_linear(SIGMA_SS2_DEFAULT_DB)
        notes.append(f"sigma_SS2_db not given; assumed {SIGMA_SS2_DEFAULT_DB:g} dB")
    for key in ("p_d_star", "p_f_star"):
        if key in entries:
            kw[key] = _number(entries, key, source)
    perfect = False
    for key, enum_cls in (("sensing", Sensing), ("protocol", Protocol)):
        if key not in entries:
            continue
        value, line = entries[key]
        value = value.upper()
        if key == "sensing" and value == PERFECT and allow_sensing_perfect:
            perfect = True
            continue
        try:
            kw[key] = enum_cls(value)
        except ValueError:
            choices = [e.value for e in enum_cls]
            raise ConfigError(f"{key} must be one of {choices}, got {value!r}", line, source) from None
    try:
        cfg = SystemConfig(channels=ChannelProfile(**chan), **kw)
        if perfect:
            cfg = apply_sensing(cfg, PERFECT)
            notes.append("sensing PERFECT: p_d = 1 and p_f = 0 override the file values")
    except ValueError as exc:
        raise ConfigError(str(exc), None, source) from None
    return cfg, tuple(notes)


def parse_config(text: str, source: str = "<config>") -> LoadedConfig:
    entries = _parse_lines(text, source)
    unknown = [k for k in entries if k not in {"L", *_FLOAT_KEYS, *_CHANNEL_KEYS, *_OPTIONAL}]
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}", entries[unknown[0]][1], source)
    cfg, notes = _build_config(entries, source)
    return LoadedConfig(cfg, notes)


def load_config(path) -> LoadedConfig:
    return parse_config(_read(path), str(path))


def _split_list(entries, key, source):
    value, _ = entries[key]
    return [v.strip() for v in value.split(",") if v.strip()]


def parse_sweep(text: str, source: str = "<sweep>") -> SweepSpec:
    entries = _parse_lines(text, source)
    known = {"L", *_FLOAT_KEYS, *_CHANNEL_KEYS, *_OPTIONAL, *_SWEEP_KEYS}
    for k, (_, line) in entries.items():
        if k not in known:
            raise ConfigError(f"unknown key {k!r}", line, source)
    for k in ("sweep.variable", "sweep.values", "sweep.protocols"):
        if k not in entries:
            raise ConfigError(f"missing required key {k!r}", None, source)
    variable, vline = entries["sweep.variable"]
    if variable not in SWEEP_VARIABLES:
        raise ConfigError(f"sweep.variable must be one of {SWEEP_VARIABLES}", vline, source)
    # the swept key need not appear among the fixed parameters
    base = dict(entries)
    swept = _split_list(entries, "sweep.values", source)
    if not swept:
        raise ConfigError("sweep.values is empty", entries["sweep.values"][1], source)
    if variable not in base:
        base[variable] = (swept[0], entries["sweep.values"][1])
    cfg, notes = _build_config(base, source, allow_sensing_perfect=False)

    line = entries["sweep.values"][1]
    values = []
    for raw in swept:
        try:
            v = float(raw)
        except ValueError:
            raise ConfigError(f"bad sweep value {raw!r}", line, source) from None
        values.append(int(v) if variable == "L" and v == int(v) else v)

    protocols = _split_list(entries, "sweep.protocols", source)
    pline = entries["sweep.protocols"][1]
    if not protocols:
        raise ConfigError("sweep.protocols is empty", pline, source)
    try:
        protocols = tuple(Protocol(p.upper()) for p in protocols)
    except ValueError as exc:
        raise ConfigError(str(exc), pline, source) from None

    if "sweep.sensing" in entries:
        modes = tuple(m.upper() for m in _split_list(entries, "sweep.sensing", source))
        bad = [m for m in modes if m not in SENSING_MODES]
        if bad or not modes:
            raise ConfigError(
                f"sweep.sensing entries must be among {SENSING_MODES}", entries["sweep.sensing"][1], source
            )
    else:
        modes = (cfg.sensing.value,)

    optimize = False
    if "sweep.optimize_q" in entries:
        value, oline = entries["sweep.optimize_q"]
        if value.lower() not in ("true", "false"):
            raise ConfigError("sweep.optimize_q must be true or false", oline, source)
        optimize = value.lower() == "true"

    try:
        return SweepSpec(variable, tuple(values), cfg, protocols, modes, optimize, notes)
    except ValueError as exc:
        raise ConfigError(str(exc), line, source) from None


def load_sweep(path) -> SweepSpec:
    return parse_sweep(_read(path), str(path))


def _read(path):
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", None, str(path)) from None


def format_config(cfg: SystemConfig) -> str:
    """Inverse of ``parse_config`` (values written with full precision)."""
    lines = [f"L = {cfg.L}"]
    lines += [f"{k} = {getattr(cfg, k)!r}" for k in _FLOAT_KEYS]
    for key, name in _CHANNEL_KEYS.items():
        lines.append(f"{key} = {linear_to_db(getattr(cfg.channels, name))!r}")
    lines.append(f"sensing = {cfg.sensing.value}")
    lines.append(f"protocol = {cfg.protocol.value}")
    for key in ("p_d_star", "p_f_star"):
        if getattr(cfg, key) is not None:
            lines.append(f"{key} = {getattr(cfg, key)!r}")
    return "\n".join(lines) + "\n"
