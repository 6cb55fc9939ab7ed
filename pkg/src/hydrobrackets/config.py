"""JSON system definitions: schema, loading, validation.

A config file declares one system (coordinates, structure matrices, box)
plus optional tolerance overrides and a hodograph section with boundary
data and solve windows.  Every document is validated against
``CONFIG_SCHEMA`` before any expression is parsed, so malformed files fail
with a JSON path instead of a stack trace.
"""

from __future__ import annotations

import json

import jsonschema

from .errors import ConfigError, ExprSyntaxError, UnknownSymbolError
from .system import Box, SystemDef

_EXPR = {"type": ["string", "number"]}
_ROW = {"type": "array", "items": _EXPR, "minItems": 1}
_MATRIX = {"type": "array", "items": _ROW, "minItems": 1}
_CUBE = {"type": "array", "items": _MATRIX, "minItems": 1}
_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_PAIR = {"type": "array", "items": {"type": "number"},
         "minItems": 2, "maxItems": 2}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "coords", "box"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "N": {"type": "integer", "minimum": 1},
        "coords": {"type": "array", "items": {"type": "string", "minLength": 1},
                   "minItems": 1},
        "params": {"type": "object",
                   "additionalProperties": {"type": "number"}},
        "g_upper": _MATRIX,
        "b": _CUBE,
        "V": _MATRIX,
        "v_diag": _ROW,
        "affinors": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["sign", "matrix"],
                "additionalProperties": False,
                "properties": {"sign": {"enum": [1, -1]},
                               "matrix": _MATRIX},
            },
        },
        "h_ultra": _MATRIX,
        "gamma": _MATRIX,
        "box": {
            "type": "object",
            "required": ["min", "max"],
            "additionalProperties": False,
            "properties": {"min": _POINT, "max": _POINT},
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol_zero": _POSITIVE,
                "tol_flat": _POSITIVE,
                "tol_gap": _POSITIVE,
                "tol_goursat": _POSITIVE,
                "tol_jacobi": _POSITIVE,
                "gap_tol": _POSITIVE,
                "newton_tol": _POSITIVE,
            },
        },
        "hodograph": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "w": {"type": "array", "items": _EXPR, "minItems": 1},
                "boundary": {"type": "array", "items": _EXPR,
                             "minItems": 2, "maxItems": 2},
                "resolution": {"type": "integer", "minimum": 2},
                "basepoint": _POINT,
                "seed": _POINT,
                "x_window": _PAIR,
                "t_window": _PAIR,
                "nx": {"type": "integer", "minimum": 2},
                "nt": {"type": "integer", "minimum": 2},
            },
        },
    },
}

DEFAULT_TOLERANCES = {
    "tol_zero": 1e-9,
    "tol_flat": 1e-7,
    "tol_gap": 1e-8,
    "tol_goursat": 1e-5,
    "tol_jacobi": 1e-6,
    "gap_tol": 1e-8,
    "newton_tol": 1e-12,
}


class LoadedConfig:
    """A validated config: the built system plus the extra sections."""

    def __init__(self, system: SystemDef, tolerances: dict, hodograph: dict,
                 raw: dict):
        self.system = system
        self.tolerances = tolerances
        self.hodograph = hodograph
        self.raw = raw


def parse_document(doc: dict) -> LoadedConfig:
    """Validate a decoded JSON document and build its system."""
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"config invalid at {err.json_path}: {err.message}") from err

    if "N" in doc and doc["N"] != len(doc["coords"]):
        raise ConfigError(
            f"config invalid at $.N: declared {doc['N']} but {len(doc['coords'])} "
            "coordinates are listed")
    box = doc["box"]
    for side in ("min", "max"):
        if len(box[side]) != len(doc["coords"]):
            raise ConfigError(
                f"config invalid at $.box.{side}: expected {len(doc['coords'])} "
                "entries")

    affinors = None
    if "affinors" in doc:
        affinors = [(a["sign"], a["matrix"]) for a in doc["affinors"]]
    try:
        system = SystemDef(
            doc["coords"],
            g_upper=doc.get("g_upper"),
            b=doc.get("b"),
            V=doc.get("V"),
            v_diag=doc.get("v_diag"),
            affinors=affinors,
            h_ultra=doc.get("h_ultra"),
            gamma=doc.get("gamma"),
            params=doc.get("params"),
            box=Box(tuple(box["min"]), tuple(box["max"])),
            name=doc["name"])
    except ExprSyntaxError as err:
        raise ConfigError(f"expression error at position {err.position}: {err}") from err
    except UnknownSymbolError as err:
        raise ConfigError(f"expression error: {err}") from err
    except ValueError as err:
        raise ConfigError(f"config invalid: {err}") from err

    tolerances = dict(DEFAULT_TOLERANCES)
    tolerances.update(doc.get("tolerances", {}))
    return LoadedConfig(system, tolerances, dict(doc.get("hodograph", {})), doc)


def load_config(path) -> LoadedConfig:
    """Load, validate and build a system from a JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"{path}: JSON syntax error at line {err.lineno} column {err.colno}: "
            f"{err.msg}") from err
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    try:
        return parse_document(doc)
    except ConfigError as err:
        raise ConfigError(f"{path}: {err}") from err
