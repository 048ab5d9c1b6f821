"""Scenario files: a versioned JSON description of one verification run.

A scenario names the pair of processes, the grid, the Monte Carlo budgets
and the output location::

    {
      "schema_version": 1,
      "name": "geometric",
      "x":     {"u": {"form": "linear", "k": 0.05}, "sigma": {"form": "linear", "k": 0.2},
                "g": {"form": "linear", "k": 0.10}, "levy": {"variant": "PointMass", "rate": 1.0},
                "x0": 1.0},
      "xstar": {...},
      "grid":  {"horizon": 1.0, "n_steps": 400, "n_paths": 100000, "seed": 0},
      "budgets": {"constant_paths": 10000},
      "outputs": {"dir": "out", "format": "json"}
    }

Coefficients come from the closed catalog in :mod:`jumpwass.coefficients`;
every time-dependent parameter is a number or a
``{"kind": "constant"|"linear"|"exp", "a": ..., "b": ...}`` schedule.
Unknown fields are rejected everywhere. :meth:`Scenario.to_json` writes the
fully normalized document, and parsing it back yields an equal scenario.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Union

import jsonschema

from .simulate import GridConfig, ProcessSpec

__all__ = ["Scenario", "Budgets", "Outputs", "ScenarioError", "SCHEMA", "SCHEMA_VERSION", "load_scenario",
           "parse_scenario", "scenario_hash", "set_field", "get_field"]

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Invalid scenario document; the message names the offending field."""


_NUMBER = {"type": "number"}
_SCHEDULE = {
    "oneOf": [
        _NUMBER,
        {
            "type": "object",
            "properties": {"kind": {"enum": ["constant", "linear", "exp"]}, "a": _NUMBER, "b": _NUMBER},
            "required": ["kind", "a"],
            "additionalProperties": False,
        },
    ]
}


def _form(name: str, params: tuple, optional: tuple = ()) -> dict:
    props = {"form": {"const": name}}
    props.update({p: _SCHEDULE for p in params})
    props.update({p: _NUMBER for p in optional})
    return {"type": "object", "properties": props, "required": ["form", *params], "additionalProperties": False}


_COEFFICIENT = {
    "oneOf": [
        _NUMBER,
        _form("zero", ()),
        _form("constant", ("c",)),
        _form("linear", ("k",)),
        _form("geometric", ("k",)),
        _form("affine", ("c", "k")),
        _form("affine+bump", ("c", "k", "amp"), ("center", "width")),
    ]
}


def _variant(name: str, props: dict, required: tuple) -> dict:
    p = {"variant": {"const": name}}
    p.update(props)
    return {"type": "object", "properties": p, "required": ["variant", *required], "additionalProperties": False}


_LEVY = {
    "oneOf": [
        {"type": "null"},
        _variant("PointMass", {"rate": _SCHEDULE, "location": _NUMBER}, ("rate",)),
        _variant("GammaLevy", {"shape_rate": _SCHEDULE}, ("shape_rate",)),
        _variant("FiniteDiscrete", {"atoms": {"type": "array", "items": {
            "type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}}}, ("atoms",)),
        _variant("TruncatedDensity", {"density": {"type": "string"}, "params": {"type": "object"},
                                      "cutoff": _NUMBER, "lower": _NUMBER, "upper": _NUMBER}, ("density",)),
        _variant("None", {}, ()),
    ]
}

_PROCESS = {
    "type": "object",
    "properties": {"u": _COEFFICIENT, "sigma": _COEFFICIENT, "g": _COEFFICIENT, "levy": _LEVY, "x0": _NUMBER},
    "additionalProperties": False,
}

_INT = {"type": "integer", "minimum": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "jumpwass scenario",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "x": _PROCESS,
        "xstar": _PROCESS,
        "grid": {
            "type": "object",
            "properties": {"horizon": {"type": "number", "exclusiveMinimum": 0}, "n_steps": _INT,
                           "epsilon": {"type": "number", "exclusiveMinimum": 0}, "n_paths": _INT,
                           "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                           "n_nodes": {"type": "integer", "minimum": 2}},
            "additionalProperties": False,
        },
        "budgets": {
            "type": "object",
            "properties": {"constant_paths": _INT, "start_points": _INT,
                           "safety": {"type": "number", "minimum": 1},
                           "node_count": _INT, "fm_paths": _INT, "csv_paths": {"type": "integer", "minimum": 0},
                           "K": {"type": "number", "exclusiveMinimum": 0}, "threads": _INT},
            "additionalProperties": False,
        },
        "outputs": {
            "type": "object",
            "properties": {"dir": {"type": "string"}, "format": {"enum": ["json", "csv"]}},
            "additionalProperties": False,
        },
    },
    "required": ["schema_version", "name", "x", "xstar"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class Budgets:
    """Estimator budgets beyond the path count of the grid."""

    constant_paths: int = 10_000
    start_points: int = 9
    safety: float = 1.5
    node_count: int = 64
    fm_paths: int = 256
    csv_paths: int = 100
    K: float = 10.0
    threads: int = 1


@dataclass(frozen=True)
class Outputs:
    dir: str = "out"
    format: str = "json"


@dataclass(frozen=True)
class Scenario:
    name: str
    x: ProcessSpec
    xstar: ProcessSpec
    grid: GridConfig = field(default_factory=GridConfig)
    budgets: Budgets = field(default_factory=Budgets)
    outputs: Outputs = field(default_factory=Outputs)

    @classmethod
    def from_json(cls, obj: dict) -> "Scenario":
        return parse_scenario(obj)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "x": self.x.to_json(),
            "xstar": self.xstar.to_json(),
            "grid": self.grid.to_json(),
            "budgets": asdict(self.budgets),
            "outputs": asdict(self.outputs),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    def with_overrides(self, *, seed=None, paths=None, steps=None, threads=None, out=None,
                       fmt=None) -> "Scenario":
        """Copy with command-line overrides applied (``None`` keeps the file value)."""
        doc = self.to_json()
        for key, value in (("seed", seed), ("n_paths", paths), ("n_steps", steps)):
            if value is not None:
                doc["grid"][key] = int(value)
        if threads is not None:
            doc["budgets"]["threads"] = int(threads)
        if out is not None:
            doc["outputs"]["dir"] = str(out)
        if fmt is not None:
            doc["outputs"]["format"] = fmt
        return parse_scenario(doc)

    @property
    def hash(self) -> str:
        return scenario_hash(self)


def _path_of(error: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in error.absolute_path) or "<root>"


def parse_scenario(obj: Any) -> Scenario:
    """Validate ``obj`` against :data:`SCHEMA` and build a :class:`Scenario`."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        # oneOf errors are vague; point at the deepest failing branch
        if e.context:
            # drop branches rejected for their tag or type; the rest name the real problem
            rejected = {c.schema_path[0] for c in e.context if c.validator in ("const", "type")}
            informative = [c for c in e.context if c.schema_path[0] not in rejected] or list(e.context)
            e = max(informative, key=lambda c: len(c.absolute_path))
        raise ScenarioError(f"scenario field {_path_of(e)}: {e.message}")
    try:
        x = ProcessSpec.from_json(obj["x"])
        xstar = ProcessSpec.from_json(obj["xstar"])
        grid = GridConfig(**obj.get("grid", {}))
        budgets = Budgets(**obj.get("budgets", {}))
        outputs = Outputs(**obj.get("outputs", {}))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc
    if x.x0 != xstar.x0:
        raise ScenarioError("scenario field xstar/x0: both processes must start at the same value")
    for label, spec in (("x", x), ("xstar", xstar)):
        try:
            spec.validate(grid.horizon)
        except ValueError as exc:
            raise ScenarioError(f"scenario field {label}/levy: {exc}") from exc
    return Scenario(obj["name"], x, xstar, grid, budgets, outputs)


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Read and validate a scenario file; JSON syntax errors report line and column."""
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_scenario(obj)


def scenario_hash(scenario: Scenario) -> str:
    """SHA-256 of the canonical (sorted, compact) normalized document.

    Output location/format and the thread count do not change results and
    are left out.
    """
    doc = scenario.to_json()
    doc.pop("outputs")
    doc["budgets"].pop("threads")
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def get_field(doc: dict, dotted: str):
    node = doc
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ScenarioError(f"unknown scenario field {dotted!r}")
        node = node[part]
    return node


def set_field(doc: dict, dotted: str, value) -> dict:
    """Copy of ``doc`` with the numeric field at ``dotted`` (e.g. ``xstar.sigma.k``) replaced."""
    get_field(doc, dotted)
    out = copy.deepcopy(doc)
    parts = dotted.split(".")
    node = get_field(out, ".".join(parts[:-1])) if len(parts) > 1 else out
    if isinstance(node[parts[-1]], dict):
        raise ScenarioError(f"scenario field {dotted!r} is not numeric; address a leaf such as {dotted}.a")
    if not isinstance(node[parts[-1]], (int, float)) or isinstance(node[parts[-1]], bool):
        raise ScenarioError(f"scenario field {dotted!r} is not numeric")
    node[parts[-1]] = value
    return out

