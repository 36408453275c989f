"""Experiment configuration: JSON schema, defaults and object construction."""

from __future__ import annotations

import copy
import hashlib
import json
from typing import Any, Mapping

import jsonschema

from pivotpend.dynamics import IntegratorConfig, PendulumParams
from pivotpend.pivot_profiles import PivotProfile, profile_from_dict

__all__ = ["ConfigError", "DEFAULTS", "SCHEMA", "digest", "load_config", "resolve_config"]


class ConfigError(ValueError):
    """Config file unreadable, not JSON, or not matching the schema."""


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_opt_pos = {"type": ["number", "null"], "exclusiveMinimum": 0}


def _obj(props: dict, required=()) -> dict:
    return {
        "type": "object",
        "properties": props,
        "required": list(required),
        "additionalProperties": False,
    }


_term = _obj({"amplitude": _num, "omega": _num, "phase": _num}, required=("amplitude", "omega"))

PIVOT_SCHEMA = {
    "oneOf": [
        _obj({"kind": {"const": "zero"}}, required=("kind",)),
        _obj(
            {"kind": {"const": "polynomial"}, "coefficients": {"type": "array", "items": _num}},
            required=("kind", "coefficients"),
        ),
        _obj(
            {"kind": {"const": "harmonic_sum"}, "terms": {"type": "array", "items": _term}},
            required=("kind", "terms"),
        ),
        _obj({"kind": {"const": "constant_acceleration"}, "a": _num}, required=("kind", "a")),
    ]
}

SCHEMA = _obj(
    {
        "params": _obj({"g": _pos, "l": _pos, "m": _pos}),
        "pivot": PIVOT_SCHEMA,
        "integrator": _obj(
            {
                "rtol": _pos,
                "atol": _pos,
                "h_init": _opt_pos,
                "max_step": _opt_pos,
                "event_tol": _pos,
                "max_steps": {"type": "integer", "minimum": 1},
            }
        ),
        "simulate": _obj(
            {
                "phi0": _num,
                "p0": _num,
                "t0": _num,
                "t_end": _num,
                "watch_exit": {"type": "boolean"},
                "sample_dt": _opt_pos,
            }
        ),
        "nonfalling": _obj({"horizon": _opt_pos, "tol_phi": _pos, "p0": _num}),
        "periodic": _obj(
            {
                "T": _opt_pos,
                "safety": _num,
                "p_floor": _opt_pos,
                "grid_n": {"type": "integer", "minimum": 64},
                "newton_tol": _pos,
                "seeds": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
                "index_check": {"type": "boolean"},
                "index_halfwidth": _pos,
            }
        ),
        "index": _obj(
            {
                "T": _opt_pos,
                "region": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
                "min_disp": _pos,
                "max_samples": {"type": "integer", "minimum": 8},
                "initial_per_edge": {"type": "integer", "minimum": 2},
            }
        ),
        "sweep": _obj(
            {
                "axis": {"enum": ["phi0", "p0", "amplitude", "omega"]},
                "range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "count": {"type": "integer", "minimum": 0},
                "command": {"enum": ["escape", "find-nonfalling", "find-periodic", "validate-segment", None]},
                "term": {"type": "integer", "minimum": 0},
            },
            required=("axis", "range", "count"),
        ),
        "output": _obj({"dir": {"type": "string"}}),
        "workers": {"type": "integer", "minimum": 1},
    }
)

DEFAULTS: dict[str, Any] = {
    "params": {"g": 9.8, "l": 1.0, "m": 1.0},
    "pivot": {"kind": "zero"},
    "integrator": {
        "rtol": 1e-10,
        "atol": 1e-12,
        "h_init": None,
        "max_step": None,
        "event_tol": 1e-10,
        "max_steps": 1_000_000,
    },
    "simulate": {"phi0": 0.0, "p0": 0.0, "t0": 0.0, "t_end": 10.0, "watch_exit": False, "sample_dt": None},
    "nonfalling": {"horizon": None, "tol_phi": 1e-10, "p0": 0.0},
    "periodic": {
        "T": None,
        "safety": 1.1,
        "p_floor": None,
        "grid_n": 512,
        "newton_tol": 1e-11,
        "seeds": [5, 5],
        "index_check": True,
        "index_halfwidth": 0.3,
    },
    "index": {
        "T": None,
        "region": [-0.5, 0.5, -0.5, 0.5],
        "min_disp": 1e-8,
        "max_samples": 1 << 20,
        "initial_per_edge": 16,
    },
    "output": {"dir": "out"},
    "workers": 1,
}

_SWEEP_DEFAULTS = {"command": None, "term": 0}


def resolve_config(raw: Mapping[str, Any]) -> dict[str, Any]:
    """Validate ``raw`` against the schema and fill in defaults."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    cfg = copy.deepcopy(DEFAULTS)
    for key, val in raw.items():
        if isinstance(val, dict) and key in cfg and key != "pivot":
            cfg[key].update(copy.deepcopy(val))
        else:
            cfg[key] = copy.deepcopy(val)
    if "sweep" in cfg:
        cfg["sweep"] = {**_SWEEP_DEFAULTS, **cfg["sweep"]}
    return cfg


def load_config(path) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return resolve_config(raw)


def digest(cfg: Mapping[str, Any]) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def params_of(cfg: Mapping[str, Any]) -> PendulumParams:
    return PendulumParams(**cfg["params"])


def pivot_of(cfg: Mapping[str, Any]) -> PivotProfile:
    return profile_from_dict(cfg["pivot"])


def integrator_of(cfg: Mapping[str, Any]) -> IntegratorConfig:
    ic = dict(cfg["integrator"])
    if ic.get("max_step") is None:
        ic.pop("max_step", None)
    return IntegratorConfig(**ic)
