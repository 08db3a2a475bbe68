"""Versioned JSON file formats, validated on read."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema

from .estimate import Estimate
from .sampler import RBDataset, UnitarityDataset


class DataError(ValueError):
    """A file that is missing, malformed or does not match its schema."""


_COUNT = {"type": "integer", "minimum": 0}

DATASET_SCHEMA = {
    "type": "object",
    "required": ["schema", "points"],
    "properties": {
        "schema": {"const": "rb-dataset/1"},
        "meta": {"type": "object"},
        "points": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["m", "b", "sequences"],
                "properties": {
                    "m": {"type": "integer", "minimum": 1},
                    "b": {"enum": [0, 1]},
                    "sequences": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["n", "successes"],
                            "properties": {"n": {"type": "integer", "minimum": 1}, "successes": _COUNT},
                        },
                    },
                },
            },
        },
    },
}

UNITARITY_SCHEMA = {
    "type": "object",
    "required": ["schema", "points"],
    "properties": {
        "schema": {"const": "rb-unitarity/1"},
        "meta": {"type": "object"},
        "points": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["m", "sequences"],
                "properties": {
                    "m": {"type": "integer", "minimum": 1},
                    "sequences": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["pauli_values"],
                            "properties": {
                                "pauli_values": {
                                    "type": "array",
                                    "minItems": 1,
                                    "items": {"type": "number", "minimum": -1, "maximum": 1},
                                },
                                "identity_value": {"type": "number"},
                            },
                        },
                    },
                },
            },
        },
    },
}

_PAIR = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

ESTIMATE_SCHEMA = {
    "type": "object",
    "required": ["schema", "p_hat", "A_hat", "variance_p", "interval", "coverage", "method", "flags"],
    "properties": {
        "schema": {"const": "rb-estimate/1"},
        "p_hat": {"type": "number"},
        "A_hat": {"type": "number"},
        "variance_p": {"type": ["number", "null"]},
        "interval": _PAIR,
        "coverage": {"type": "number"},
        "method": {"enum": ["chebyshev", "lognormal"]},
        "flags": {"type": "array", "items": {"type": "string"}},
        "covariance": {"oneOf": [{"type": "null"}, {"type": "array", "items": _PAIR}]},
        "summary": {"type": ["object", "null"]},
    },
}

ADAPTIVE_SCHEMA = {
    "type": "object",
    "required": ["schema", "p_hat", "r_hat", "ell", "m", "total_shots", "trace"],
    "properties": {
        "schema": {"const": "rb-adaptive/1"},
        "ell": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 2},
        "total_shots": _COUNT,
        "trace": {"type": "array"},
    },
}

VALIDATION_SCHEMA = {
    "type": "object",
    "required": ["schema", "per_m", "overall"],
    "properties": {
        "schema": {"const": "rb-validation/1"},
        "per_m": {"type": "array", "minItems": 1},
        "overall": {"type": "object", "required": ["combined_p", "alpha", "reject"]},
    },
}

SCHEMAS = {
    "rb-dataset/1": DATASET_SCHEMA,
    "rb-unitarity/1": UNITARITY_SCHEMA,
    "rb-estimate/1": ESTIMATE_SCHEMA,
    "rb-adaptive/1": ADAPTIVE_SCHEMA,
    "rb-validation/1": VALIDATION_SCHEMA,
}


def _nan_to_none(obj):
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, float) and obj in (float("inf"), float("-inf")):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_nan_to_none(v) for v in obj]
    return obj


def dumps(doc: dict) -> str:
    """Canonical text: sorted keys, two-space indent, trailing newline, no NaN."""
    return json.dumps(_nan_to_none(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(doc: dict, path) -> None:
    Path(path).write_text(dumps(doc))


def load(path, expected: str | None = None) -> dict:
    """Read and schema-check a JSON document; ``expected`` pins the schema tag."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    tag = doc.get("schema") if isinstance(doc, dict) else None
    if expected is not None and tag != expected:
        raise DataError(f"{path}: expected schema {expected!r}, found {tag!r}")
    if tag not in SCHEMAS:
        raise DataError(f"{path}: unknown schema {tag!r}")
    try:
        jsonschema.validate(doc, SCHEMAS[tag])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise DataError(f"{path}: {where}: {exc.message}") from None
    return doc


def read_dataset(path) -> RBDataset:
    doc = load(path, "rb-dataset/1")
    try:
        return RBDataset.from_dict(doc)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def read_unitarity(path) -> UnitarityDataset:
    return UnitarityDataset.from_dict(load(path, "rb-unitarity/1"))


def read_estimate(path) -> Estimate:
    doc = load(path, "rb-estimate/1")
    if doc["variance_p"] is None:
        doc["variance_p"] = float("inf")
    return Estimate.from_dict(doc)


def write_csv(rows, header, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
