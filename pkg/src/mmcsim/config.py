"""Scenario files: INI sections ``[params]``, ``[gains]``, ``[schedule]``, ``[run]``.

Every key is optional; an empty file yields the standard n = 8 scenario.
Angles are in radians and frequencies in rad/s, except the convenience
key ``params.frequency_hz``.

Example::

    [params]
    n = 8
    frequency_hz = 50

    [schedule]
    amplitudes = 0:1.5, 1.405:9, 2.605:0.75

    [run]
    duration = 3.5
    reference = both
    windows = 0.38:0.4, 2.14:2.16, 3.08:3.1
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, replace
from pathlib import Path

from .controller import ControllerGains, ReferenceMode, ReferenceSchedule
from .exceptions import ConfigurationError, MMCError
from .params import ConverterParams, FullState
from .simulation import Scenario

DEFAULT_WINDOWS = ((0.38, 0.4), (2.14, 2.16), (3.08, 3.1))

_FLOAT_PARAMS = ("L", "R", "La", "Ra", "Vdc", "VaM", "alphaVa", "omega", "Ts")
_GAIN_KEYS = {"KdM": float, "Kd0": float, "tau": float, "alpha1": float,
              "alpha2": float, "wn": int}
_RUN_KEYS = ("duration", "reference", "plant_integrator", "inner_steps", "plant",
             "initial_voltage", "windows", "seed")
_SECTIONS = ("params", "gains", "schedule", "run")


@dataclass(frozen=True)
class RunConfig:
    """A scenario plus the run-level choices that are not part of the simulation."""

    scenario: Scenario
    references: tuple[ReferenceMode, ...] = (ReferenceMode(),)
    windows: tuple[tuple[float, float], ...] = DEFAULT_WINDOWS
    source: str = "<defaults>"


def _number(section: str, key: str, text: str, kind=float):
    try:
        value = kind(text)
    except ValueError:
        raise ConfigurationError(f"{section}.{key}: cannot parse {text!r} as {kind.__name__}") from None
    if kind is float and not math.isfinite(value):
        raise ConfigurationError(f"{section}.{key}: value must be finite, got {text!r}")
    return value


def _pairs(section: str, key: str, text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ConfigurationError(f"{section}.{key}: expected 'a:b' items, got {item!r}")
        a, b = item.split(":", 1)
        out.append((_number(section, key, a), _number(section, key, b)))
    if not out:
        raise ConfigurationError(f"{section}.{key}: empty list")
    return tuple(out)


def parse_references(text: str) -> tuple[ReferenceMode, ...]:
    """``optimal``, ``constant``, ``constant:V`` or ``both``."""
    if text.strip() == "both":
        return ReferenceMode("optimal"), ReferenceMode("constant")
    return (ReferenceMode.parse(text),)


def _check_keys(parser, section: str, allowed):
    if not parser.has_section(section):
        return {}
    items = dict(parser.items(section))
    for key in items:
        if key not in allowed:
            raise ConfigurationError(f"unknown key {section}.{key}")
    return items


def load_run_config(path) -> RunConfig:
    """Read a scenario file; errors name the offending field."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"scenario file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigurationError(f"{path}: unknown section [{section}]")
    try:
        return _build(parser, str(path))
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    except MMCError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


def default_run_config() -> RunConfig:
    return _build(configparser.ConfigParser(), "<defaults>")


def _build(parser, source: str) -> RunConfig:
    params_kw = {}
    items = _check_keys(parser, "params", _FLOAT_PARAMS + ("n", "C", "frequency_hz"))
    for key, text in items.items():
        if key == "n":
            params_kw["n"] = _number("params", key, text, int)
        elif key == "C":
            parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
            values = [_number("params", key, p) for p in parts]
            params_kw["C"] = values[0] if len(values) == 1 else tuple(values)
        elif key == "frequency_hz":
            if "omega" in items:
                raise ConfigurationError("give either params.omega or params.frequency_hz, not both")
            params_kw["omega"] = 2 * math.pi * _number("params", key, text)
        else:
            params_kw[key] = _number("params", key, text)
    params = ConverterParams(**params_kw)

    gains_kw = {k: _number("gains", k, v, _GAIN_KEYS[k])
                for k, v in _check_keys(parser, "gains", _GAIN_KEYS).items()}
    if "alpha1" in gains_kw and "alpha2" not in gains_kw:
        gains_kw["alpha2"] = 1.0 - gains_kw["alpha1"]
    elif "alpha2" in gains_kw and "alpha1" not in gains_kw:
        gains_kw["alpha1"] = 1.0 - gains_kw["alpha2"]
    gains = ControllerGains(**gains_kw)

    sched = _check_keys(parser, "schedule", ("amplitudes",))
    if "amplitudes" in sched:
        schedule = ReferenceSchedule(_pairs("schedule", "amplitudes", sched["amplitudes"]),
                                     omega=params.omega)
    else:
        schedule = ReferenceSchedule(omega=params.omega)

    run = _check_keys(parser, "run", _RUN_KEYS)
    kw = {}
    if "duration" in run:
        kw["duration"] = _number("run", "duration", run["duration"])
    for key in ("plant_integrator", "plant"):
        if key in run:
            kw[key] = run[key].strip()
    if "inner_steps" in run:
        kw["inner_steps"] = _number("run", "inner_steps", run["inner_steps"], int)
    if "seed" in run:
        kw["seed"] = _number("run", "seed", run["seed"], int)
    if "initial_voltage" in run:
        kw["initial"] = FullState.uniform(params.n, _number("run", "initial_voltage",
                                                            run["initial_voltage"]))
    references = parse_references(run.get("reference", "optimal"))
    windows = _pairs("run", "windows", run["windows"]) if "windows" in run else DEFAULT_WINDOWS
    for a, b in windows:
        if not b > a:
            raise ConfigurationError(f"run.windows: window [{a}, {b}) is empty")
    scenario = Scenario(params=params, gains=gains, schedule=schedule,
                        reference=references[0], **kw)
    return RunConfig(scenario, references, tuple(windows), source)


def with_overrides(config: RunConfig, *, duration=None, references=None, seed=None) -> RunConfig:
    scenario = config.scenario
    if duration is not None:
        scenario = replace(scenario, duration=duration)
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    if references is not None:
        config = replace(config, references=references)
        scenario = replace(scenario, reference=references[0])
    return replace(config, scenario=scenario)
