"""Run configuration: strict JSON schema, presets and scenario construction."""

from __future__ import annotations

import json
import types
import typing
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .scenarios.base import FilterSettings
from .scenarios.quadrotor import QuadrotorScenario, QuadTruth
from .scenarios.runner import METHODS, ArdSettings
from .scenarios.wingrock import DelayTruth, WingRockScenario, WingRockTruth

SCENARIOS = ("wingrock", "delay", "quadrotor", "quad-z")
PRESETS = ("paper-wingrock", "paper-delay", "paper-quad", "paper-quad-z")


@dataclass(frozen=True)
class PlantSettings:
    """Simulator-side knobs. ``None`` keeps the scenario default."""

    integrator: str = "rk4"
    dither_std: float | None = None
    meas_noise_std: float | None = None


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "wingrock"
    method: str = "ski"
    methods: tuple = METHODS
    seeds: tuple = (0,)
    duration_s: float | None = None
    rate_hz: float | None = None
    filter: FilterSettings = FilterSettings()
    ard: ArdSettings = ArdSettings()
    plant: PlantSettings = PlantSettings()
    sindy_lambda: float = 0.1
    output_dir: str | None = None
    workers: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["seeds"] = list(self.seeds)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_NESTED = {"filter": FilterSettings, "ard": ArdSettings, "plant": PlantSettings}


def _check_type(path: str, value, hint):
    optional = typing.get_origin(hint) in (typing.Union, types.UnionType)
    args = typing.get_args(hint)
    if hint is float or (optional and float in args):
        if value is None and type(None) in args:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if hint is str or (optional and str in args):
        if value is None and type(None) in args:
            return None
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise AssertionError(f"unhandled type for {path}: {hint}")


def _build(cls, data, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {prefix or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        path = f"{prefix}.{name}" if prefix else name
        if name in _NESTED and cls is RunConfig:
            kwargs[name] = _build(_NESTED[name], value, path)
        elif name in ("methods", "seeds"):
            if not isinstance(value, list) or not value:
                raise ConfigError(f"{path}: expected a non-empty list")
            item = str if name == "methods" else int
            kwargs[name] = tuple(_check_type(f"{path}[{i}]", v, item) for i, v in enumerate(value))
        else:
            kwargs[name] = _check_type(path, value, hints[name])
    return cls(**kwargs)


def _validate(cfg: RunConfig) -> RunConfig:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.scenario in SCENARIOS, f"scenario must be one of {SCENARIOS}, got {cfg.scenario!r}")
    for m in (cfg.method, *cfg.methods):
        need(m in METHODS, f"method must be one of {METHODS}, got {m!r}")
    need(len(set(cfg.methods)) == len(cfg.methods), "methods contains duplicates")
    need(all(s >= 0 for s in cfg.seeds), "seeds must be non-negative")
    need(cfg.duration_s is None or cfg.duration_s > 0, "duration_s must be positive")
    need(cfg.rate_hz is None or cfg.rate_hz > 0, "rate_hz must be positive")
    f = cfg.filter
    need(0.0 < f.alpha <= 1.0, f"filter.alpha must lie in (0, 1], got {f.alpha}")
    need(f.beta >= 0, "filter.beta must be non-negative")
    need(f.q_scale >= 0, "filter.q_scale must be non-negative")
    need(f.r_std is None or f.r_std > 0, "filter.r_std must be positive")
    need(f.p0 > 0 and f.s0 > 0, "filter.p0 and filter.s0 must be positive")
    a = cfg.ard
    need(a.eta_hp >= 0, "ard.eta_hp must be non-negative")
    need(a.N_hp >= 0, "ard.N_hp must be non-negative")
    need(a.variance_floor > 0, "ard.variance_floor must be positive")
    need(0 < a.report_threshold < 1, "ard.report_threshold must lie in (0, 1)")
    need(a.gradient_form in ("exact", "printed"), "ard.gradient_form must be 'exact' or 'printed'")
    p = cfg.plant
    need(p.integrator in ("rk4", "euler"), "plant.integrator must be 'rk4' or 'euler'")
    need(p.dither_std is None or p.dither_std >= 0, "plant.dither_std must be non-negative")
    need(p.meas_noise_std is None or p.meas_noise_std >= 0, "plant.meas_noise_std must be non-negative")
    need(p.meas_noise_std != 0 or f.r_std is not None,
         "plant.meas_noise_std = 0 needs an explicit filter.r_std")
    need(cfg.sindy_lambda >= 0, "sindy_lambda must be non-negative")
    need(cfg.workers >= 1, "workers must be at least 1")
    return cfg


def parse_config(data: dict) -> RunConfig:
    """Validate a decoded JSON object into a :class:`RunConfig`.

    Raises:
        ConfigError: on unknown keys, wrong types or out-of-range values.
    """
    return _validate(_build(RunConfig, data, ""))


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    text = resources.files("ski").joinpath("presets", f"{name}.json").read_text()
    return json.loads(text)


def load_config(source: str) -> RunConfig:
    """Read a config from a JSON file path or a bundled preset name."""
    path = Path(source)
    if path.is_file():
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
        return parse_config(data)
    if source in PRESETS:
        return parse_config(load_preset(source))
    raise ConfigError(f"config file not found: {source}")


def apply_overrides(cfg: RunConfig, pairs) -> RunConfig:
    """Apply ``key=value`` overrides (dotted keys reach nested blocks; values
    are parsed as JSON, falling back to plain strings)."""
    data = cfg.to_dict()
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep:
            raise ConfigError(f"override {pair!r} is not key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        *parents, leaf = key.split(".")
        node = data
        for p in parents:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"unknown key in override: {key}")
            node = node[p]
        if leaf not in node:
            raise ConfigError(f"unknown key in override: {key}")
        node[leaf] = value
    return parse_config(data)


def _truth_changes(cfg: RunConfig) -> dict:
    changes = {}
    if cfg.duration_s is not None:
        changes["duration"] = cfg.duration_s
    if cfg.rate_hz is not None:
        changes["rate"] = cfg.rate_hz
    if cfg.plant.meas_noise_std is not None:
        changes["meas_noise_std"] = cfg.plant.meas_noise_std
    return changes


def make_scenario(cfg: RunConfig):
    """Instantiate the scenario described by ``cfg``."""
    p = cfg.plant
    if cfg.scenario in ("wingrock", "delay"):
        return WingRockScenario(
            truth=replace(WingRockTruth(), **_truth_changes(cfg)),
            integrator=p.integrator,
            delay=DelayTruth() if cfg.scenario == "delay" else None,
            dither_std=p.dither_std or 0.0,
            name=cfg.scenario,
        )
    truth = replace(QuadTruth(), **_truth_changes(cfg))
    kwargs = {}
    if p.dither_std is not None:
        kwargs["pwm_dither_std"] = p.dither_std
    if cfg.scenario == "quad-z":
        truth = replace(truth, d1=0.0, d2=0.0)
    return QuadrotorScenario(
        truth=truth, axis="z" if cfg.scenario == "quad-z" else "xyz",
        integrator=p.integrator, name=cfg.scenario, **kwargs,
    )
