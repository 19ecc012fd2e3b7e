"""Model files, report files and ``key = value`` configs.

Floats are written with 17 significant digits so every double survives a
save/load round trip unchanged.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import jsonschema
import numpy as np

from .kernel import InterpolatorModel
from .optimizer import EmbeddingModel, HyperParams, ObjectiveTrace, TraceEntry

__all__ = [
    "ConfigError",
    "FORMAT_VERSION",
    "CONFIG_KEYS",
    "dumps",
    "atomic_write",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "read_config",
    "parse_config",
    "SCHEMAS",
    "validate_document",
]

FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Bad configuration key or value."""


# ---------------------------------------------------------------------------
# JSON writing


def _encode(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError("non-finite number in document")
        s = format(x, ".17g")
        return s if any(c in s for c in ".en") else s + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [json.dumps(str(k)) + ": " + _encode(v, indent, level + 1) for k, v in obj.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(x, (list, tuple, dict, np.ndarray)) for x in obj):
            return "[" + ", ".join(_encode(x, indent, level + 1) for x in obj) + "]"
        return "[" + pad + ("," + pad).join(_encode(x, indent, level + 1) for x in obj) + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent: int = 1) -> str:
    return _encode(obj, indent, 0) + "\n"


def atomic_write(path, text: str):
    """Write via a temporary sibling file and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# model documents

_HP_FIELDS = ("mu1", "mu2", "mu3", "mu4", "mu5", "dim", "grid_count", "grid_min", "grid_max",
              "max_iters", "tol")


def model_to_dict(model: EmbeddingModel) -> dict:
    hp = model.hyperparams
    return {
        "format": "mnse-model",
        "version": FORMAT_VERSION,
        "num_modalities": model.num_modalities,
        "num_classes": model.num_classes,
        "dim": model.dim,
        "hyperparams": {
            **{k: getattr(hp, k) for k in _HP_FIELDS},
            "jitter_ladder": list(hp.jitter_ladder),
            "sigma_init": None if hp.sigma_init is None else list(hp.sigma_init),
            "thetas": None if hp.thetas is None else list(hp.thetas),
        },
        "thetas": list(model.thetas),
        "degenerate": model.degenerate,
        "modalities": [
            {
                "sigma": f.sigma,
                "jitter": f.jitter,
                "sample_ids": [int(i) for i in ids],
                "labels": [int(c) for c in lab],
                "X": f.X,
                "Y": f.Y,
                "C": f.C,
            }
            for f, ids, lab in zip(model.interpolators, model.sample_ids, model.labels)
        ],
        "trace": [
            {
                "iteration": e.iteration,
                "after_y": e.after_y,
                "after_sigma": e.after_sigma,
                "sigmas": list(e.sigmas),
                "orthonormality_error": e.orthonormality_error,
                "eigenvalue_sum": e.eigenvalue_sum,
            }
            for e in model.trace.entries
        ],
    }


def _matrix(rows, ncols=None) -> np.ndarray:
    a = np.array(rows, dtype=float)
    if a.size == 0:
        a = a.reshape(0, ncols or 0)
    return a


def model_from_dict(doc: dict) -> EmbeddingModel:
    validate_document(doc, "model")
    hpd = dict(doc["hyperparams"])
    for key in ("jitter_ladder", "sigma_init", "thetas"):
        if hpd.get(key) is not None:
            hpd[key] = tuple(hpd[key])
    hp = HyperParams(**hpd)
    d = int(doc["dim"])
    interps, ids, labels = [], [], []
    for mod in doc["modalities"]:
        X = _matrix(mod["X"])
        interps.append(InterpolatorModel(X, mod["sigma"], _matrix(mod["C"], d),
                                         _matrix(mod["Y"], d), mod["jitter"]))
        ids.append(np.array(mod["sample_ids"], dtype=np.int64))
        labels.append(np.array(mod["labels"], dtype=np.int64))
    trace = ObjectiveTrace([
        TraceEntry(e["iteration"], e["after_y"], e["after_sigma"], tuple(e["sigmas"]),
                   e["orthonormality_error"], e["eigenvalue_sum"])
        for e in doc["trace"]
    ])
    Y = np.concatenate([f.Y for f in interps])
    return EmbeddingModel(Y, tuple(interps), tuple(ids), tuple(labels), int(doc["num_classes"]),
                          hp, trace, tuple(doc["thetas"]), bool(doc["degenerate"]))


def save_model(model: EmbeddingModel, path):
    atomic_write(path, dumps(model_to_dict(model)))


def load_model(path) -> EmbeddingModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# key = value configs

CONFIG_KEYS = {
    # hyperparameters
    "mu1": float, "mu2": float, "mu3": float, "mu4": float, "mu5": float,
    "dim": int, "grid_count": int, "grid_min": float, "grid_max": float,
    "max_iters": int, "tol": float,
    # synthetic generator (used by gen / validate)
    "classes": int, "modalities": int, "per_class": int, "dims": str,
    "separation": float, "noise": float, "warp": str, "cross_noise": float, "seed": int,
    # evaluation / validation
    "k": int, "metric": str, "mode": str, "trials": int, "train_fraction": float,
    "pool_size": int,
}


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: invalid value for '{key}': {value!r}") from None
    return out


def read_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


# ---------------------------------------------------------------------------
# schemas

_NUM = {"type": "number"}
_MATRIX = {"type": "array", "items": {"type": "array", "items": _NUM}}

SCHEMAS = {
    "model": {
        "type": "object",
        "required": ["format", "version", "num_modalities", "num_classes", "dim",
                     "hyperparams", "modalities", "trace", "thetas", "degenerate"],
        "properties": {
            "format": {"const": "mnse-model"},
            "version": {"const": FORMAT_VERSION},
            "num_modalities": {"type": "integer", "minimum": 1},
            "num_classes": {"type": "integer", "minimum": 1},
            "dim": {"type": "integer", "minimum": 1},
            "hyperparams": {"type": "object", "required": list(_HP_FIELDS) + ["jitter_ladder"]},
            "modalities": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["sigma", "jitter", "sample_ids", "labels", "X", "Y", "C"],
                    "properties": {
                        "sigma": {"type": "number", "exclusiveMinimum": 0},
                        "jitter": {"type": "number", "minimum": 0},
                        "sample_ids": {"type": "array", "items": {"type": "integer"}},
                        "labels": {"type": "array", "items": {"type": "integer"}},
                        "X": _MATRIX, "Y": _MATRIX, "C": _MATRIX,
                    },
                },
            },
            "trace": {"type": "array"},
        },
    },
    "classify": {
        "type": "object",
        "required": ["report", "mode", "misclassification_percent", "counts"],
        "properties": {
            "report": {"const": "classify"},
            "mode": {"enum": ["all", "own"]},
            "misclassification_percent": {
                "type": "array",
                "items": {"anyOf": [{"type": "null"},
                                    {"type": "number", "minimum": 0, "maximum": 100}]},
            },
        },
    },
    "retrieve": {
        "type": "object",
        "required": ["report", "metric", "k", "directions"],
        "properties": {
            "report": {"const": "retrieve"},
            "metric": {"enum": ["euclidean", "cosine"]},
            "directions": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["direction", "map", "precision_at_k", "recall_at_k", "queries"],
                    "properties": {
                        "map": {"type": "number", "minimum": 0, "maximum": 1},
                        "precision_at_k": {"type": "array",
                                           "items": {"type": "number", "minimum": 0, "maximum": 1}},
                        "recall_at_k": {"type": "array",
                                        "items": {"type": "number", "minimum": 0, "maximum": 1}},
                    },
                },
            },
        },
    },
    "bounds": {
        "type": "object",
        "required": ["report", "condition_holds", "classification_floor", "vacuous", "empirical"],
        "properties": {
            "report": {"const": "bounds"},
            "classification_floor": {"type": "number", "minimum": 0, "maximum": 1},
            "single_modality_floor": {"type": "number", "minimum": 0, "maximum": 1},
            "vacuous": {"type": "boolean"},
        },
    },
}


def validate_document(doc: dict, kind: str):
    """Raise ``jsonschema.ValidationError`` if ``doc`` does not match schema ``kind``."""
    jsonschema.validate(doc, SCHEMAS[kind])
