"""YAML configuration files for scenarios and sweeps.

A document has two optional sections, ``scenario`` (fields of
:class:`~coopsci.sim.ScenarioConfig`) and ``sweep`` (fields of
:class:`~coopsci.montecarlo.SweepConfig` other than ``base``).  Missing keys
take the dataclass defaults; unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import yaml

from coopsci.montecarlo import SweepConfig
from coopsci.sci import OmegaSearch
from coopsci.sim import PathSpec, ScenarioConfig
from coopsci.unscented import UtParams

_NESTED = {
    ScenarioConfig: {"r1_path": PathSpec, "r2_path": PathSpec, "ut": UtParams, "omega": OmegaSearch},
    SweepConfig: {"base": ScenarioConfig},
}
_TUPLES = {"center", "paths"}
SECTIONS = ("scenario", "sweep")

PRESETS = {
    "nominal": {},
    "noiseless": {
        "scenario": {
            "range_noise_std": 0.0,
            "gps_noise_std_r1": 0.0,
            "gps_noise_std_r2": 0.0,
            "gps_period_r2": 1,
            "gps_dropout_r2": 0.0,
        },
        "sweep": {"range_noise_scale": 0.0, "gps_noise_scale": 0.0, "vel_offset_scale": 0.0, "pos_offset_max": 0},
    },
}


class ConfigError(ValueError):
    """Invalid configuration; ``where`` names the field (and line, if known)."""

    def __init__(self, message: str, where: str = ""):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


def to_dict(obj) -> dict:
    """Plain nested dict of a config dataclass (tuples become lists)."""
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            v = to_dict(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def _build(cls, data, where: str, lines: dict):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping, got {type(data).__name__}", _loc(where, lines))
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown key {key!r}", _loc(f"{where}.{key}", lines))
    kwargs = {}
    nested = _NESTED.get(cls, {})
    for key, value in data.items():
        if key in nested:
            value = _build(nested[key], value, f"{where}.{key}", lines)
        elif key in _TUPLES and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), _loc(where, lines)) from None


def _loc(path: str, lines: dict) -> str:
    line = lines.get(path)
    return f"{path} (line {line})" if line else path


def _key_lines(node, prefix: str = "", out: dict | None = None) -> dict:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _key_lines(v, path, out)
    return out


def from_document(doc: dict, lines: dict | None = None) -> tuple[ScenarioConfig, SweepConfig]:
    lines = lines or {}
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping")
    for key in doc:
        if key not in SECTIONS:
            raise ConfigError(f"unknown section {key!r}; expected {SECTIONS}", _loc(str(key), lines))
    scenario = _build(ScenarioConfig, doc.get("scenario"), "scenario", lines)
    sweep_doc = dict(doc.get("sweep") or {})
    if "base" in sweep_doc:
        raise ConfigError("the sweep base comes from the scenario section", _loc("sweep.base", lines))
    sweep = _build(SweepConfig, {**sweep_doc, "base": to_dict(scenario)}, "sweep", lines)
    return scenario, sweep


def parse_config(text: str) -> tuple[ScenarioConfig, SweepConfig]:
    try:
        node = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    return from_document(doc, _key_lines(node) if node is not None else {})


def render_config(scenario: ScenarioConfig, sweep: SweepConfig | None = None) -> str:
    doc = {"scenario": to_dict(scenario)}
    if sweep is not None:
        s = to_dict(sweep)
        s.pop("base")
        doc["sweep"] = s
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


def load_document(source: str | Path | None) -> tuple[dict, dict]:
    """Document and key line numbers from a preset name or a YAML file."""
    if source is None or str(source) in PRESETS:
        return json.loads(json.dumps(PRESETS[str(source or "nominal")])), {}
    path = Path(source)
    if not path.is_file():
        raise ConfigError(f"no such config file or preset: {source} (presets: {', '.join(PRESETS)})")
    text = path.read_text(encoding="utf-8")
    try:
        node = yaml.compose(text)
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from None
    return doc, (_key_lines(node) if node is not None else {})


def apply_override(doc: dict, dotted: str, raw: str) -> None:
    """Set ``section.key[.subkey]`` in ``doc`` to the YAML scalar ``raw``."""
    parts = dotted.split(".")
    if len(parts) < 2 or parts[0] not in SECTIONS:
        raise ConfigError(f"override {dotted!r} must look like section.key with section in {SECTIONS}")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value {raw!r}: {exc}", dotted) from None
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError("cannot descend into a scalar", dotted)
    node[parts[-1]] = value


def config_hash(scenario: ScenarioConfig, sweep: SweepConfig | None = None) -> str:
    payload = json.dumps({"scenario": to_dict(scenario), "sweep": to_dict(sweep) if sweep else None},
                         sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()
