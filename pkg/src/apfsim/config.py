"""JSON scenario files.

Every field is optional; ``{}`` is the default scenario. Unknown keys are
rejected so typos surface as errors naming the offending field.
"""
from __future__ import annotations

import dataclasses
import json
import typing
from pathlib import Path

from .control import StrategyKind
from .emd import EmdConfig
from .plant import (ClippedResistive, ConfigInvalid, ControlSpec, ConverterSpec,
                    DisturbanceSpec, HalfWaveRectified, Linear, LineSpec, MetricsSpec,
                    ScenarioConfig, SourceSpec, validate)

LOAD_KINDS = {cls.kind: cls for cls in (Linear, HalfWaveRectified, ClippedResistive)}

_SECTIONS = {
    "source": SourceSpec,
    "line": LineSpec,
    "disturbance": DisturbanceSpec,
    "converter": ConverterSpec,
    "emd": EmdConfig,
    "control": ControlSpec,
    "metrics": MetricsSpec,
}


def _coerce(value, hint, name: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if value is None:
        if type(None) in args:
            return None
        raise ConfigInvalid(name, "must not be null")
    if origin is typing.Union or (origin is not None and type(None) in args):
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], name)
    if origin is tuple:
        if not isinstance(value, list) or len(value) != len(args):
            raise ConfigInvalid(name, f"expected a list of {len(args)} numbers")
        return tuple(_coerce(v, a, f"{name}[{k}]") for k, (v, a) in enumerate(zip(value, args)))
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigInvalid(name, "expected true or false")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigInvalid(name, "expected an integer")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigInvalid(name, "expected a number")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigInvalid(name, "expected a string")
        return value
    return value


def _build(cls, data, name: str):
    if not isinstance(data, dict):
        raise ConfigInvalid(name, "expected an object")
    hints = typing.get_type_hints(cls)
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - fields
    if unknown:
        raise ConfigInvalid(f"{name}.{sorted(unknown)[0]}", "unknown field")
    kwargs = {k: _coerce(v, hints[k], f"{name}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigInvalid(name, str(exc)) from exc
    except ValueError as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        raise ConfigInvalid(name, str(exc)) from exc


def _build_load(data, name: str):
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigInvalid(name, "expected an object with a 'kind'")
    kind = data["kind"]
    if kind not in LOAD_KINDS:
        raise ConfigInvalid(f"{name}.kind", f"one of {sorted(LOAD_KINDS)}")
    return _build(LOAD_KINDS[kind], {k: v for k, v in data.items() if k != "kind"}, name)


def from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigInvalid("<root>", "expected a JSON object")
    top = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = set(data) - top
    if unknown:
        raise ConfigInvalid(sorted(unknown)[0], "unknown field")
    kwargs = {}
    for key, cls in _SECTIONS.items():
        if key in data:
            kwargs[key] = _build(cls, data[key], key)
    if "loads" in data:
        loads = data["loads"]
        if not isinstance(loads, list) or len(loads) != 3:
            raise ConfigInvalid("loads", "expected a list of three load objects")
        kwargs["loads"] = tuple(_build_load(d, f"loads[{k}]") for k, d in enumerate(loads))
    if "strategy" in data:
        try:
            kwargs["strategy"] = StrategyKind(data["strategy"])
        except ValueError:
            raise ConfigInvalid("strategy", f"one of {[k.value for k in StrategyKind]}") from None
    for key, hint in (("dt", float), ("duration", float), ("seed", int)):
        if key in data:
            kwargs[key] = _coerce(data[key], hint, key)
    cfg = ScenarioConfig(**kwargs)
    validate(cfg)
    return cfg


def to_dict(cfg: ScenarioConfig) -> dict:
    out = {}
    for key in _SECTIONS:
        section = dataclasses.asdict(getattr(cfg, key))
        out[key] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
    out["loads"] = [{"kind": load.kind, **dataclasses.asdict(load)} for load in cfg.loads]
    out["strategy"] = cfg.strategy.value
    out["dt"] = cfg.dt
    out["duration"] = cfg.duration
    out["seed"] = cfg.seed
    return out


def load(path) -> ScenarioConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("<json>", f"line {exc.lineno}: {exc.msg}") from exc
    return from_dict(data)


def dumps(cfg: ScenarioConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2)
