"""JSON run configurations: schema, validation and default materialization.

Every command reads one JSON document. Unknown keys are rejected, every
violation is reported with its JSON pointer, and the fully-defaulted
*effective* config is written next to the command's outputs so a run can be
reproduced from it alone.

Top-level blocks (all optional unless a command needs them):

``dataset``
    ``source``: ``{"images": path, "labels": path}`` IDX training files, or
    ``synthetic``: ``{"k", "per_cluster", "dim", "spread", "seed"}``;
    ``test``: IDX files for held-out points (synthetic data draws its own);
    ``classes``: label filter; ``subsample`` / ``subsample_seed``.
``model``
    Training settings (``epochs``, ``batch_size``, ``learning_rate``,
    ``beta1``, ``beta2``, ``adam_eps``, ``ensemble_size``, ``latent_dim``,
    ``hidden``, ``seed``), which models to train (``ensemble``, ``rbf``) and
    the RBF settings ``rbf_centers`` and ``rbf_zeta``.
``geometry``
    ``control_points``, ``segments``, ``iterations``, ``lr``,
    ``tolerance``, ``patience``.
``experiment``
    ``seeds`` (list), ``pairs``, ``master_seed``.
``checkpoint``, ``method``, ``z0``, ``z1``, ``bounds``, ``resolution``,
``field``, ``pairs``, ``seed``
    Per-command settings for ``geodesic``, ``grid`` and ``oracle-check``.
``output``
    Output directory.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .errors import ConfigError

_IDX = {
    "type": "object",
    "properties": {"images": {"type": "string"}, "labels": {"type": "string"}},
    "required": ["images", "labels"],
    "additionalProperties": False,
}

_SYNTHETIC = {
    "type": "object",
    "properties": {
        "k": {"type": "integer", "minimum": 1},
        "per_cluster": {"type": "integer", "minimum": 1},
        "dim": {"type": "integer", "minimum": 2},
        "spread": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

_LATENT_SPEC = {
    "oneOf": [
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
        {
            "type": "object",
            "properties": {"index": {"type": "integer", "minimum": 0}},
            "required": ["index"],
            "additionalProperties": False,
        },
    ]
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "source": _IDX,
                "synthetic": _SYNTHETIC,
                "test": _IDX,
                "test_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "classes": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "subsample": {"type": ["integer", "null"], "minimum": 1},
                "subsample_seed": {"type": "integer"},
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "adam_eps": {"type": "number", "exclusiveMinimum": 0},
                "ensemble_size": {"type": "integer", "minimum": 1},
                "latent_dim": {"type": "integer", "minimum": 1},
                "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "seed": {"type": "integer"},
                "ensemble": {"type": "boolean"},
                "rbf": {"type": "boolean"},
                "rbf_centers": {"type": "integer", "minimum": 1},
                "rbf_zeta": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "control_points": {"type": "integer", "minimum": 1},
                "segments": {"type": "integer", "minimum": 2},
                "iterations": {"type": "integer", "minimum": 0},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "tolerance": {"type": "number", "minimum": 0},
                "patience": {"type": "integer", "minimum": 1},
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 2},
                "pairs": {"type": "integer", "minimum": 1},
                "master_seed": {"type": "integer"},
            },
        },
        "checkpoint": {"type": "string"},
        "method": {"enum": ["single", "ensemble", "rbf"]},
        "z0": _LATENT_SPEC,
        "z1": _LATENT_SPEC,
        "bounds": {
            "type": ["array", "null"],
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            "minItems": 2,
            "maxItems": 2,
        },
        "resolution": {"type": "integer", "minimum": 2},
        "field": {"enum": ["uncertainty", "magnification"]},
        "pairs": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "output": {"type": "string"},
    },
}

DEFAULTS = {
    "dataset": {"classes": None, "subsample": None, "subsample_seed": 0, "test_fraction": 0.2},
    "model": {
        "epochs": 200,
        "batch_size": 128,
        "learning_rate": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "adam_eps": 1e-8,
        "ensemble_size": 8,
        "latent_dim": 2,
        "hidden": [128, 128],
        "seed": 0,
        "ensemble": True,
        "rbf": True,
        "rbf_centers": 10,
        "rbf_zeta": 1e-4,
    },
    "geometry": {
        "control_points": 8,
        "segments": 128,
        "iterations": 500,
        "lr": 1e-2,
        "tolerance": 1e-6,
        "patience": 20,
    },
    "experiment": {"seeds": list(range(10)), "pairs": 20, "master_seed": 0},
    "synthetic": {"k": 3, "per_cluster": 200, "dim": 9, "spread": 0.1, "seed": 0},
}

# which blocks and keys each command needs; value None means "block with defaults"
COMMAND_REQUIREMENTS = {
    "train": {"dataset": None, "model": None, "output": "/output"},
    "geodesic": {"checkpoint": "/checkpoint", "z0": "/z0", "z1": "/z1", "geometry": None, "output": "/output"},
    "grid": {"checkpoint": "/checkpoint", "bounds": "/bounds", "output": "/output"},
    "cv-experiment": {"dataset": None, "model": None, "geometry": None, "experiment": None, "output": "/output"},
    "oracle-check": {"checkpoint": "/checkpoint", "geometry": None, "output": "/output"},
}

COMMAND_DEFAULTS = {
    "geodesic": {"method": "ensemble", "seed": 0},
    "grid": {"resolution": 101, "field": "uncertainty"},
    "oracle-check": {"method": "single", "pairs": 10, "resolution": 101, "seed": 0, "bounds": None},
}


def _pointer(path):
    return "/" + "/".join(str(p) for p in path) if path else ""


def validate(doc, command):
    """Check `doc` against the schema and the command's required keys."""
    validator = jsonschema.Draft7Validator(SCHEMA)
    violations = [(_pointer(e.absolute_path), e.message) for e in validator.iter_errors(doc)]
    if not isinstance(doc, dict):
        raise ConfigError(violations or [("", "config must be a JSON object")])
    needs = COMMAND_REQUIREMENTS[command]
    for key, pointer in needs.items():
        if pointer is not None and key not in doc:
            violations.append((pointer, "required"))
    if "dataset" in needs:
        ds = doc.get("dataset", {})
        if isinstance(ds, dict):
            if "source" not in ds and "synthetic" not in ds:
                violations.append(("/dataset/source", "required: IDX training files (or a synthetic block)"))
            if "source" in ds and "synthetic" in ds:
                violations.append(("/dataset", "give either source or synthetic, not both"))
        else:
            violations.append(("/dataset/source", "required"))
    if command == "cv-experiment":
        seeds = doc.get("experiment", {}).get("seeds", DEFAULTS["experiment"]["seeds"])
        if isinstance(seeds, list) and len(seeds) < 2:
            violations.append(("/experiment/seeds", "at least 2 seeds are needed for a coefficient of variation"))
    if violations:
        raise ConfigError(sorted(set(violations)))


def _resolve(path, base):
    p = Path(path)
    return str(p if p.is_absolute() else (base / p).resolve())


def effective_config(doc, command, base_dir="."):
    """Validated copy of `doc` with every default filled in and paths made absolute."""
    validate(doc, command)
    out = copy.deepcopy(doc)
    base = Path(base_dir)
    for block in ("dataset", "model", "geometry", "experiment"):
        if block in COMMAND_REQUIREMENTS[command] or block in out:
            merged = copy.deepcopy(DEFAULTS[block])
            merged.update(out.get(block, {}))
            out[block] = merged
    for key, value in COMMAND_DEFAULTS.get(command, {}).items():
        out.setdefault(key, value)
    ds = out.get("dataset")
    if ds is not None:
        if "synthetic" in ds:
            synth = dict(DEFAULTS["synthetic"])
            synth.update(ds["synthetic"])
            ds["synthetic"] = synth
        for key in ("source", "test"):
            if key in ds:
                ds[key] = {k: _resolve(v, base) for k, v in ds[key].items()}
    if "checkpoint" in out:
        out["checkpoint"] = _resolve(out["checkpoint"], base)
    if "output" in out:
        out["output"] = _resolve(out["output"], Path("."))
    return out


def load_config(path, command, output=None):
    path = Path(path)
    doc = json.loads(path.read_text())
    if output is not None:
        doc["output"] = str(output)
    return effective_config(doc, command, path.parent)


def write_effective(cfg, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
