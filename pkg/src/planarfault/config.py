"""Scenario configuration and its INI serialization.

The format is documented in docs/formats.md. Floats are written with
``repr`` so a config survives a write/read cycle unchanged.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError
from .green import ElasticMedium
from .grid import DEFAULT_DEPTH_GUARD, Rake
from .posterior import ParameterBox

__all__ = ["ScenarioConfig", "load_config", "dump_config", "parse_config", "config_hash"]

CENTER_MODES = ("weighted-station-mean", "explicit")

_SECTIONS = {
    "medium": ("lam", "mu"),
    "fault": ("center_mode", "center", "half_lengths", "n_side", "rake", "depth_guard"),
    "box": ("a_range", "b_range", "d_range", "n_a", "n_b", "n_d"),
    "noise": ("sigma_hor", "sigma_ver"),
    "inversion": ("err_rel", "tau", "c_override", "seed", "threads"),
}
_KEY_ALIASES = {"lam": "lambda"}


@dataclass(frozen=True)
class ScenarioConfig:
    lam: float = 1.0
    mu: float = 1.0
    center_mode: str = "weighted-station-mean"
    center: tuple = (0.0, 0.0)
    half_lengths: tuple = (50.0, 50.0)
    n_side: int = 30
    rake: str = "steepest-ascent"
    depth_guard: float = DEFAULT_DEPTH_GUARD
    a_range: tuple = (-0.5, 0.1)
    b_range: tuple = (-0.4, 0.2)
    d_range: tuple = (-30.0, -6.0)
    n_a: int = 21
    n_b: int = 21
    n_d: int = 21
    # None: use the per-station values from the station file
    sigma_hor: float | None = None
    sigma_ver: float | None = None
    err_rel: float = 0.05
    tau: float = 1.0
    c_override: float | None = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.center_mode not in CENTER_MODES:
            raise ConfigError(f"center_mode must be one of {CENTER_MODES}, got {self.center_mode!r}")
        for name in ("center", "half_lengths", "a_range", "b_range", "d_range"):
            val = tuple(float(v) for v in getattr(self, name))
            if len(val) != 2:
                raise ConfigError(f"{name} needs exactly two values")
            object.__setattr__(self, name, val)
        if not 0 < self.err_rel < 1:
            raise ConfigError(f"err_rel must lie in (0, 1), got {self.err_rel}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.c_override is not None and not self.c_override > 0:
            raise ConfigError(f"c_override must be positive, got {self.c_override}")
        for name in ("sigma_hor", "sigma_ver"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.depth_guard <= 0:
            raise ConfigError("depth_guard must be positive")
        # validate the derived objects eagerly
        self.medium()
        self.box()
        self.rake_spec()
        if min(self.half_lengths) <= 0 or self.n_side < 1:
            raise ConfigError("fault rectangle needs positive half lengths and n_side >= 1")

    def medium(self) -> ElasticMedium:
        return ElasticMedium(self.lam, self.mu)

    def box(self) -> ParameterBox:
        return ParameterBox(self.a_range, self.b_range, self.d_range, self.n_a, self.n_b, self.n_d)

    def rake_spec(self) -> Rake:
        return Rake.parse(self.rake)

    def replace(self, **changes) -> "ScenarioConfig":
        data = asdict(self)
        data.update(changes)
        return ScenarioConfig(**data)


_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(name, text):
    kind = _TYPES[name]
    text = text.strip()
    try:
        if kind == "tuple":
            return tuple(float(v) for v in text.split(","))
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "float | None":
            return None if text in ("", "station", "none") else float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc


def dump_config(cfg: ScenarioConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for section, names in _SECTIONS.items():
        parser[section] = {_KEY_ALIASES.get(n, n): _fmt(getattr(cfg, n)) for n in names}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    unknown = set(parser.sections()) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    values = {}
    for section, names in _SECTIONS.items():
        if not parser.has_section(section):
            continue
        keys = {_KEY_ALIASES.get(n, n): n for n in names}
        for key, raw in parser[section].items():
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            values[keys[key]] = _parse(keys[key], raw)
    return ScenarioConfig(**values)


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text)


def config_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()
