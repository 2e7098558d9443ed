"""Experiment configuration: JSON schema, loading and object construction."""

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import jsonschema
import numpy as np

from .exceptions import ValidationError
from .linalg import substream
from .operators import (
    Averaged,
    AveragedFamily,
    CustomDirection,
    FiniteFamily,
    GaussianHyperplane,
    HyperplaneProjection,
    Identity,
    OrthoProjection,
    SoftThreshold,
    UniformCoordinateProjection,
    _check_alpha,
)

# substream indices below 2**62 belong to trials
X0_STREAM = 2**62
ESTIMATOR_STREAM = 2**62 + 1

_number = {"type": "number"}
_vector = {"type": "array", "items": _number, "minItems": 1}

INSTANCE_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"type": {"const": "ortho-projection"}, "span": {"type": "array", "items": _vector, "minItems": 1}},
            "required": ["type", "span"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "hyperplane"}, "direction": _vector},
            "required": ["type", "direction"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "averaged"}, "alpha": _number, "inner": {"$ref": "#/$defs/instance"}},
            "required": ["type", "alpha", "inner"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "soft-threshold"}, "lambda": {"type": "number", "minimum": 0}},
            "required": ["type", "lambda"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "identity"}},
            "required": ["type"],
            "additionalProperties": False,
        },
    ]
}

FAMILY_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "type": {"const": "finite"},
                "instances": {"type": "array", "items": {"$ref": "#/$defs/instance"}, "minItems": 1},
                "probs": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            },
            "required": ["type", "instances", "probs"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "gaussian-hyperplane"}, "dim": {"type": "integer", "minimum": 1}},
            "required": ["type"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "coordinate-projection"}, "dim": {"type": "integer", "minimum": 1}},
            "required": ["type"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "averaged"}, "alpha": _number, "base": {"$ref": "#/$defs/family"}},
            "required": ["type", "alpha", "base"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "custom-direction"},
                "dim": {"type": "integer", "minimum": 1},
                "distribution": {"enum": ["gaussian", "uniform-angle"]},
                "scales": _vector,
                "target": {"enum": ["hyperplane", "line"]},
            },
            "required": ["type"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"instance": INSTANCE_SCHEMA, "family": FAMILY_SCHEMA},
    "type": "object",
    "properties": {
        "dimension": {"type": "integer", "minimum": 1},
        "alpha": _number,
        "family": {"$ref": "#/$defs/family"},
        "x0": {"oneOf": [_vector, {"enum": ["ones", "random-unit"]}]},
        "n_steps": {"type": "integer", "minimum": 0},
        "n_trials": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "method": {"enum": ["exact", "monte-carlo"]},
        "estimator_samples": {"type": "integer", "minimum": 1},
        "overrides": {
            "type": "object",
            "properties": {"C": {"type": "number"}, "rho": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
        "outputs": {
            "type": "object",
            "properties": {"trace_csv": {"type": "string"}, "report_json": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "required": ["dimension", "alpha", "family"],
    "additionalProperties": False,
}


class ConfigError(ValidationError):
    """Configuration problem, with the config line it refers to."""

    def __init__(self, source, line, message):
        self.source = source
        self.line = line
        super().__init__(f"{source}:{line}: {message}")


@dataclass
class ExperimentConfig:
    dimension: int
    alpha: float
    family: object
    x0_spec: object
    n_steps: int
    n_trials: int
    master_seed: int
    epsilon: Optional[float]
    method: str
    estimator_samples: int
    overrides: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)
    source: str = "<config>"

    def x0(self):
        if isinstance(self.x0_spec, str):
            if self.x0_spec == "ones":
                return np.ones(self.dimension)
            v = substream(self.master_seed, X0_STREAM).standard_normal(self.dimension)
            return v / np.linalg.norm(v)
        return np.array(self.x0_spec, dtype=float)

    def digest(self):
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _line_of(text, path):
    """1-based line of the deepest object key along ``path`` in ``text``."""
    pos = 0
    for key in path:
        if isinstance(key, str):
            hit = text.find(f'"{key}"', pos)
            if hit >= 0:
                pos = hit
    return text.count("\n", 0, pos) + 1


def _schema_error(text, source, err):
    best = jsonschema.exceptions.best_match([err])
    path = list(best.absolute_path)
    if best.validator == "additionalProperties":
        allowed = set(best.schema.get("properties", {}))
        extra = sorted(set(best.instance) - allowed)
        if extra:
            path = path + [extra[0]]
            where = ".".join(str(p) for p in path)
            return ConfigError(source, _line_of(text, path), f"{where}: unknown field {extra[0]!r}")
    where = ".".join(str(p) for p in path) or "<root>"
    return ConfigError(source, _line_of(text, path), f"{where}: {best.message}")


def build_instance(spec):
    kind = spec["type"]
    if kind == "ortho-projection":
        return OrthoProjection.from_span(spec["span"])
    if kind == "hyperplane":
        return HyperplaneProjection(spec["direction"])
    if kind == "averaged":
        return Averaged(spec["alpha"], build_instance(spec["inner"]))
    if kind == "soft-threshold":
        return SoftThreshold(spec["lambda"])
    if kind == "identity":
        return Identity()
    raise ValidationError(f"unknown operator type {kind!r}")


def build_family(spec, dim):
    kind = spec["type"]
    if kind == "finite":
        return FiniteFamily(tuple(build_instance(s) for s in spec["instances"]), spec["probs"], dim=dim)
    if kind == "gaussian-hyperplane":
        return GaussianHyperplane(spec.get("dim", dim))
    if kind == "coordinate-projection":
        return UniformCoordinateProjection(spec.get("dim", dim))
    if kind == "averaged":
        return AveragedFamily(spec["alpha"], build_family(spec["base"], dim))
    if kind == "custom-direction":
        return CustomDirection(
            spec.get("dim", dim),
            distribution=spec.get("distribution", "gaussian"),
            scales=spec.get("scales"),
            target=spec.get("target", "hyperplane"),
        )
    raise ValidationError(f"unknown family type {kind!r}")


def parse_config(text, source="<config>", seed=None, trials=None):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(source, exc.lineno, f"invalid JSON: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    err = jsonschema.exceptions.best_match(validator.iter_errors(raw))
    if err is not None:
        raise _schema_error(text, source, err)

    def fail(key, message):
        return ConfigError(source, _line_of(text, [key]), f"{key}: {message}")

    dim = raw["dimension"]
    try:
        alpha = _check_alpha(raw["alpha"])
    except ValidationError as exc:
        raise fail("alpha", str(exc)) from None
    try:
        family = build_family(raw["family"], dim)
    except ValidationError as exc:
        raise fail("family", str(exc)) from None
    if family.dim != dim:
        raise fail("family", f"family acts on R^{family.dim} but dimension is {dim}")
    x0 = raw.get("x0", "ones")
    if not isinstance(x0, str) and len(x0) != dim:
        raise fail("x0", f"x0 has {len(x0)} entries, expected {dim}")
    overrides = dict(raw.get("overrides", {}))
    if "C" in overrides and not 0.0 <= overrides["C"] <= 1.0:
        raise fail("overrides", f"C override must lie in [0, 1], got {overrides['C']}")
    return ExperimentConfig(
        dimension=dim,
        alpha=alpha,
        family=family,
        x0_spec=x0,
        n_steps=raw.get("n_steps", 10),
        n_trials=int(trials) if trials is not None else raw.get("n_trials", 1),
        master_seed=int(seed) if seed is not None else raw.get("master_seed", 0),
        epsilon=raw.get("epsilon"),
        method=raw.get("method", "exact"),
        estimator_samples=raw.get("estimator_samples", 100_000),
        overrides=overrides,
        outputs=dict(raw.get("outputs", {})),
        raw=raw,
        source=source,
    )


def load_config(path, seed=None, trials=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(path, 0, f"cannot read config: {exc.strerror}") from None
    return parse_config(text, source=str(path), seed=seed, trials=trials)
