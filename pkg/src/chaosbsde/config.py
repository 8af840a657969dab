"""Experiment configuration: JSON schema, validation and object construction.

A config is one JSON document.  ``validate_config`` collects every problem
it can find (schema violations plus semantic checks such as the mesh bound)
instead of stopping at the first, and returns the config with defaults
filled in.
"""

import copy
import json

import jsonschema
import numpy as np

from .models import (
    asian_basket_terminal,
    barrier_call_terminal,
    borrowing_rate_generator,
    chaos_synthetic_terminal,
    linear_rate_generator,
    power_max_terminal,
    trig_generator,
    zero_generator,
)

GRID_SCHEMA = {
    "oneOf": [
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
        {
            "type": "object",
            "properties": {
                "min": {"type": "number"},
                "max": {"type": "number"},
                "points": {"type": "integer", "minimum": 1},
            },
            "required": ["min", "max"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "generator": {
            "type": "object",
            "properties": {
                "family": {
                    "enum": ["zero", "linear_rate", "trig", "borrowing_rate"]
                },
                "r": {"type": "number"},
                "big_r": {"type": "number"},
                "mu": {"type": ["number", "array"]},
                "sigma": {"type": ["number", "array"]},
                "rho": {"type": "number"},
                "theta": {"type": ["number", "array"]},
            },
            "required": ["family"],
            "additionalProperties": False,
        },
        "terminal": {
            "type": "object",
            "properties": {
                "family": {
                    "enum": ["power_max", "barrier_call", "asian_basket", "chaos_synthetic"]
                },
                "power": {"type": "number"},
                "strike": {"type": "number"},
                "barrier": {"type": "number"},
                "s0": {"type": ["number", "array"]},
                "mu": {"type": ["number", "array"]},
                "sigma": {"type": ["number", "array"]},
                "monitoring_steps": {"type": "integer", "minimum": 1},
                "coefficients_file": {"type": "string"},
                "param_grid": {
                    "type": "object",
                    "additionalProperties": GRID_SCHEMA,
                },
            },
            "required": ["family"],
            "additionalProperties": False,
        },
        "chaos": {
            "type": "object",
            "properties": {
                "p": {"type": "integer", "minimum": 0},
                "partition_steps": {"type": "integer", "minimum": 1},
                "coefficient_samples": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "scheme": {
            "type": "object",
            "properties": {
                "horizon": {"type": "number", "exclusiveMinimum": 0},
                "n_steps": {"type": "integer", "minimum": 1},
                "d": {"type": "integer", "minimum": 1},
                "rho": {"type": "number", "minimum": -1, "maximum": 1},
                "nested_steps": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 1},
                    "minItems": 2,
                },
            },
            "additionalProperties": False,
        },
        "regressor": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["mlp", "linear"]},
                "batch_size": {"type": "integer", "minimum": 1},
                "adam_steps": {"type": "integer", "minimum": 1},
                "cold_steps": {"type": ["integer", "null"], "minimum": 1},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "hidden_mult": {"type": "integer", "minimum": 1},
                "explicit": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "baseline": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["backward_euler", "mc"]},
                "n_paths": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "evaluation": {
            "type": "object",
            "properties": {
                "n_paths": {"type": "integer", "minimum": 2},
                "grid_points": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "seeds": {
            "type": "object",
            "properties": {
                "box": {"type": "integer", "minimum": 0},
                "train": {"type": "integer", "minimum": 0},
                "evaluate": {"type": "integer", "minimum": 0},
                "baseline": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "workers": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
    },
    "required": ["name", "generator", "terminal"],
    "additionalProperties": False,
}

DEFAULTS = {
    "chaos": {"p": 2, "partition_steps": 10, "coefficient_samples": 100_000},
    "scheme": {"horizon": 1.0, "n_steps": 10, "d": 1, "rho": 0.0},
    "regressor": {
        "kind": "mlp",
        "batch_size": 50_000,
        "adam_steps": 3_000,
        "cold_steps": None,
        "lr": 1e-3,
        "hidden_mult": 3,
        "explicit": False,
    },
    "baseline": {"kind": "backward_euler", "n_paths": 100_000},
    "evaluation": {"n_paths": 100_000, "grid_points": 11},
    "seeds": {"box": 1, "train": 2, "evaluate": 3, "baseline": 4},
    "workers": 1,
    "output_dir": "out",
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join(f"  - {e}" for e in self.errors))


def _merge_defaults(cfg):
    out = copy.deepcopy(DEFAULTS)
    for key, value in cfg.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key].update(value)
        else:
            out[key] = value
    return out


def validate_config(cfg):
    """Schema plus semantic validation; returns the config with defaults applied.

    Raises ConfigError carrying the exhaustive error list.
    """
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = [
        "/".join(str(p) for p in e.absolute_path) + ": " + e.message
        for e in sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    ]
    if errors:
        raise ConfigError(errors)
    cfg = _merge_defaults(cfg)

    try:
        gen = build_generator(cfg)
    except Exception as exc:
        errors.append(f"generator: {exc}")
        gen = None
    horizon = cfg["scheme"]["horizon"]
    n = cfg["scheme"]["n_steps"]
    if gen is not None and gen.lip > 0.0 and horizon / n >= 1.0 / gen.lip:
        errors.append(
            f"scheme: mesh {horizon / n} violates the well-definedness bound "
            f"1/[g]_L = {1.0 / gen.lip}; increase n_steps"
        )
    fam = cfg["terminal"]["family"]
    if fam in ("barrier_call", "asian_basket"):
        for key in ("s0", "mu", "sigma"):
            if key not in cfg["terminal"]:
                errors.append(f"terminal: {key} is required for family {fam!r}")
    if fam == "power_max" and cfg["scheme"]["d"] != 1:
        errors.append("terminal: power_max requires d = 1")
    if fam == "asian_basket" and cfg["scheme"]["d"] < 2:
        errors.append("terminal: asian_basket expects a basket, d >= 2")
    nested = cfg["scheme"].get("nested_steps")
    if nested is not None:
        for a, b in zip(nested[:-1], nested[1:]):
            if b % a != 0 or b <= a:
                errors.append(
                    f"scheme: nested_steps must be strictly increasing with "
                    f"each dividing the next, got {nested}"
                )
                break
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path):
    with open(path) as f:
        try:
            cfg = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"not valid JSON: {exc}"])
    if not isinstance(cfg, dict):
        raise ConfigError(["top level must be an object"] + [
            f"missing required key {k!r}" for k in CONFIG_SCHEMA["required"]
        ])
    if not cfg:
        raise ConfigError([f"missing required key {k!r}" for k in CONFIG_SCHEMA["required"]])
    return validate_config(cfg)


def build_generator(cfg):
    g = cfg["generator"]
    fam = g["family"]
    if fam == "zero":
        return zero_generator()
    if fam == "trig":
        return trig_generator()
    if fam == "linear_rate":
        return linear_rate_generator(g.get("r", 0.0), g.get("theta", [0.0]))
    if fam == "borrowing_rate":
        return borrowing_rate_generator(
            g["r"], g["big_r"], _vec(g["mu"], cfg["scheme"]["d"]),
            _vec(g["sigma"], cfg["scheme"]["d"]), g.get("rho", 0.0),
        )
    raise ValueError(f"unknown generator family {fam!r}")


def _vec(x, d):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if len(x) == 1 and d > 1:
        return np.full(d, x[0])
    return x


def parameter_grid(cfg):
    """(param names, list of value tuples) from the terminal's param_grid."""
    spec = cfg["terminal"].get("param_grid", {})
    default_points = cfg["evaluation"]["grid_points"]
    names = sorted(spec)
    axes = []
    for name in names:
        entry = spec[name]
        if isinstance(entry, dict):
            axes.append(np.linspace(entry["min"], entry["max"], entry.get("points", default_points)))
        else:
            axes.append(np.asarray(entry, dtype=float))
    if not axes:
        return [], [()]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = list(zip(*[m.ravel() for m in mesh]))
    return names, points


def build_terminal(cfg, overrides=None):
    """TerminalSpec from the config, with grid-point parameter overrides."""
    t = dict(cfg["terminal"])
    t.update(overrides or {})
    horizon = cfg["scheme"]["horizon"]
    steps = t.get("monitoring_steps", cfg["scheme"]["n_steps"])
    eval_times = np.linspace(0.0, horizon, steps + 1)
    fam = t["family"]
    d = cfg["scheme"]["d"]
    if fam == "power_max":
        return power_max_terminal(t["power"], eval_times)
    if fam == "barrier_call":
        return barrier_call_terminal(
            t["strike"], t["barrier"], _vec(t["s0"], d), _vec(t["mu"], d),
            _vec(t["sigma"], d), eval_times,
        )
    if fam == "asian_basket":
        return asian_basket_terminal(
            t["strike"], _vec(t["s0"], d), _vec(t["mu"], d), _vec(t["sigma"], d), eval_times
        )
    if fam == "chaos_synthetic":
        from .chaos import load_coefficients

        return chaos_synthetic_terminal(load_coefficients(t["coefficients_file"]))
    raise ValueError(f"unknown terminal family {fam!r}")


def build_basis(cfg):
    from .basis import BasisSpec

    horizon = cfg["scheme"]["horizon"]
    steps = cfg["chaos"]["partition_steps"]
    return BasisSpec(times=np.linspace(0.0, horizon, steps + 1), d=cfg["scheme"]["d"])


def build_correlation(cfg):
    d = cfg["scheme"]["d"]
    rho = cfg["scheme"]["rho"]
    return rho * np.ones((d, d)) + (1.0 - rho) * np.eye(d)
