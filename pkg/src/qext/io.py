"""Run configuration, state documents and reports as JSON; iteration logs as CSV.

Complex matrices are stored row-major as {"shape", "re", "im"}.  Floats go
through repr, so write -> read -> write reproduces the same bytes.
"""
from __future__ import annotations

import copy
import csv
import io
import json
from pathlib import Path

import jsonschema
import numpy as np

FORMAT_VERSION = 1

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["geometry"],
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "polytope": {"oneOf": [
                    {"enum": ["P1", "P2", "square"]},
                    {"type": "array", "minItems": 2, "items": {"type": "array", "items": {"type": "integer"}}},
                ]},
                "cloud": {"type": "string"},
            },
            "oneOf": [{"required": ["polytope"]}, {"required": ["cloud"]}],
        },
        "k": _pos_int,
        "k_list": {"type": "array", "items": _pos_int, "minItems": 1},
        "solver": {"enum": ["balanced", "qext", "modified_t"]},
        "warm_start": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "profile": {"enum": ["fubini_study", "perturbed"]},
                "seed": {"type": "integer"},
                "amplitude": {"type": "number", "minimum": 0},
            },
        },
        "A0": {"type": "array", "items": _num},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "inner_tol": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "max_iter": _pos_int,
                "max_outer": _pos_int,
            },
        },
        "quadrature": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "resolution": {"type": ["integer", "null"], "minimum": 1},
                "order": _pos_int,
                "grading": {"type": "integer", "minimum": 0},
            },
        },
        "diagnostics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "bergman_seed": {"type": "integer"},
                "bergman_amplitude": {"type": "number", "minimum": 0},
                "hessian_draws": _pos_int,
            },
        },
        "seed": {"type": "integer"},
        "output": {"type": "string"},
    },
}

DEFAULTS = {
    "format_version": FORMAT_VERSION,
    "solver": "balanced",
    "warm_start": {"profile": "fubini_study", "seed": 0, "amplitude": 0.5},
    "A0": [],
    "tolerances": {"tol": 1e-8, "inner_tol": None, "max_iter": 2000, "max_outer": 40},
    "quadrature": {"resolution": None, "order": 12, "grading": 3},
    "diagnostics": {"bergman_seed": 0, "bergman_amplitude": 0.2, "hessian_draws": 200},
    "seed": 0,
    "output": "run",
}


class ConfigError(ValueError):
    pass


def _error_path(err: jsonschema.ValidationError) -> str:
    path = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"{path}: {err.message}"


def validate_config(doc: dict) -> dict:
    """Schema-check a config and return the full effective config with defaults filled in."""
    geo = doc.get("geometry")
    if isinstance(geo, dict) and not ({"polytope", "cloud"} & set(geo)):
        raise ConfigError("geometry: missing required key 'polytope' (or 'cloud')")
    v = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(v.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("; ".join(_error_path(e) for e in errors))
    if "k" not in doc and "k_list" not in doc:
        raise ConfigError("<root>: one of 'k' or 'k_list' is required")
    out = copy.deepcopy(DEFAULTS)
    for key, val in doc.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key].update(copy.deepcopy(val))
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path) -> dict:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"<file>: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError("<root>: config must be an object")
    return validate_config(doc)


def encode_matrix(M) -> dict:
    M = np.asarray(M, dtype=complex)
    return {"shape": list(M.shape), "re": [float(x) for x in M.real.ravel()],
            "im": [float(x) for x in M.imag.ravel()]}


def decode_matrix(doc) -> np.ndarray:
    shape = tuple(int(s) for s in doc["shape"])
    re = np.asarray(doc["re"], dtype=float)
    im = np.asarray(doc["im"], dtype=float)
    if re.size != int(np.prod(shape)) or im.size != re.size:
        raise ValueError("matrix entry count does not match its shape")
    return (re + 1j * im).reshape(shape)


def _plain(obj):
    """Convert numpy scalars and arrays inside a document to JSON types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return encode_matrix(obj)
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(doc) -> str:
    return json.dumps(_plain(doc), indent=1, sort_keys=True, allow_nan=True) + "\n"


def write_document(path, doc) -> None:
    Path(path).write_text(dumps(doc))


def read_document(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def state_document(H, A, C_A: float, k: int, certificates: dict, status: str, config: dict | None = None) -> dict:
    return {"format_version": FORMAT_VERSION, "k": int(k), "status": status, "H": encode_matrix(H),
            "A": encode_matrix(A), "C_A": float(C_A), "certificates": certificates,
            "config": config if config is not None else {}}


def parse_state(doc) -> dict:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported state format version {doc.get('format_version')!r}")
    for key in ("H", "A", "C_A", "k"):
        if key not in doc:
            raise ValueError(f"state document lacks {key!r}")
    return {"H": decode_matrix(doc["H"]), "A": decode_matrix(doc["A"]), "C_A": float(doc["C_A"]),
            "k": int(doc["k"]), "certificates": doc.get("certificates", {}), "config": doc.get("config", {})}


ITERATION_COLUMNS = ["outer", "inner", "perp_residual", "a_tilde", "C_A", "energy"]


def iteration_csv(residuals, C_values) -> str:
    """Per-iteration log.  Timing lives in a separate file so this one is reproducible."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ITERATION_COLUMNS)
    for r in residuals:
        w.writerow([r["outer"], r["inner"], repr(float(r["perp"])), repr(float(r["a_tilde"])),
                    repr(float(C_values.get(r["outer"], float("nan")))), repr(float(r["energy"]))])
    return buf.getvalue()


def timing_csv(residuals) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["outer", "inner", "wallclock"])
    for r in residuals:
        w.writerow([r["outer"], r["inner"], repr(float(r["wallclock"]))])
    return buf.getvalue()
