"""
Problem files: JSON documents describing one optimal control problem and how to
discretize and solve it.

The file is validated against :data:`SCHEMA` before anything else happens;
unknown keys are rejected at every level. :func:`load` returns a
:class:`RunConfig` whose ``resolved`` dict is itself a valid problem file with
every default (kernel shapes included) written out, so feeding it back
reproduces the run exactly.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import exprlang, kernels
from .assembly import Box, ProblemSpec
from .kernels import Family, KernelConfig
from .solver import SolveOptions

DEFAULT_FAMILIES = {"S": "gaussian", "Sigma": "wendland_c4", "D": "gaussian"}
DEFAULT_CENTERS = {"M_S": 200, "M_D": 20, "strategy": "halton", "seed": 0}

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_box = {
    "type": "object",
    "properties": {"lower": _vec, "upper": _vec},
    "required": ["lower", "upper"],
    "additionalProperties": False,
}
_kernel = {
    "type": "object",
    "properties": {
        "family": {"type": "string", "enum": [f.value for f in Family]},
        "shape": {"type": "number", "exclusiveMinimum": 0},
        "support_radius": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}
_expr = {"type": "string", "minLength": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "okoc problem file",
    "type": "object",
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 0},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "x0": _vec,
        "X": _box,
        "U": _box,
        "D": _box,
        "dynamics": {"type": "array", "items": _expr, "minItems": 1},
        "running_cost": _expr,
        "terminal_cost": _expr,
        "kernel": {
            "type": "object",
            "properties": {"S": _kernel, "Sigma": _kernel, "D": _kernel},
            "additionalProperties": False,
        },
        "centers": {
            "type": "object",
            "properties": {
                "M_S": {"type": "integer", "minimum": 1},
                "M_D": {"type": "integer", "minimum": 1},
                "M_b": {"type": "integer", "minimum": 1},
                "strategy": {"type": "string", "enum": ["halton", "grid"]},
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "eq_tol": {"type": "number", "exclusiveMinimum": 0},
                "stat_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "penalty_init": {"type": "number", "exclusiveMinimum": 0},
                "penalty_growth": {"type": "number", "exclusiveMinimum": 1},
                "method": {"type": "string", "enum": ["exact", "al"]},
            },
            "additionalProperties": False,
        },
    },
    "required": ["n", "m", "T", "x0", "X", "dynamics", "running_cost", "terminal_cost"],
    "additionalProperties": False,
}


class ProblemFileError(ValueError):
    """Schema or consistency violation; carries a location for diagnostics."""


@dataclass(frozen=True)
class RunConfig:
    spec: ProblemSpec
    M_S: int
    M_D: int
    M_b: int
    strategy: str
    seed: int
    solver: SolveOptions
    resolved: dict


def read_json(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _where(err: jsonschema.ValidationError) -> str:
    path = "/".join(str(p) for p in err.absolute_path)
    return f"at key '{path}'" if path else "at top level"


def validate(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise ProblemFileError(f"{_where(err)}: {err.message}")
    n, m = doc["n"], doc["m"]
    checks = [("x0", doc["x0"], n), ("dynamics", doc["dynamics"], n)]
    for key in ("X", "D"):
        if key in doc:
            checks += [(f"{key}/lower", doc[key]["lower"], n), (f"{key}/upper", doc[key]["upper"], n)]
    if m:
        if "U" not in doc:
            raise ProblemFileError("at top level: 'U' is required when m > 0")
        checks += [("U/lower", doc["U"]["lower"], m), ("U/upper", doc["U"]["upper"], m)]
    elif "U" in doc:
        raise ProblemFileError("at key 'U': no control box allowed when m = 0")
    for key, arr, want in checks:
        if len(arr) != want:
            raise ProblemFileError(f"at key '{key}': expected {want} entries, got {len(arr)}")
    for key in ("T",):
        if not math.isfinite(doc[key]):
            raise ProblemFileError(f"at key '{key}': must be finite")


def _kernel_for(doc_kernel: dict | None, space: str, box: Box) -> KernelConfig:
    spec = dict(doc_kernel or {})
    family = Family.parse(spec.get("family", DEFAULT_FAMILIES[space]))
    need_default = "shape" not in spec or (family is not Family.GAUSSIAN and "support_radius" not in spec)
    med = kernels.median_sq_distance(box.lower, box.upper) if need_default else None
    shape = float(spec.get("shape", med if med is not None else 1.0))
    radius = float(spec.get("support_radius", math.sqrt(med) if med is not None else 1.0))
    if family is Family.GAUSSIAN:
        radius = 1.0  # unused; fixed so configs compare equal after a round trip
    return KernelConfig(family, box.dim, shape, radius)


def load(source, seed: int | None = None) -> RunConfig:
    """Validate and resolve a problem file (path or already-parsed dict)."""
    doc = read_json(source) if not isinstance(source, dict) else copy.deepcopy(source)
    validate(doc)
    n, m, T = doc["n"], doc["m"], float(doc["T"])
    try:
        X = Box(doc["X"]["lower"], doc["X"]["upper"])
        U = Box(doc["U"]["lower"], doc["U"]["upper"]) if m else None
        D = Box(doc["D"]["lower"], doc["D"]["upper"]) if "D" in doc else X
    except ValueError as exc:
        raise ProblemFileError(f"box: {exc}") from None

    f = tuple(exprlang.parse(src, n, m) for src in doc["dynamics"])
    h = exprlang.parse(doc["running_cost"], n, m)
    F = exprlang.parse(doc["terminal_cost"], n, 0)

    time_box = Box((0.0,), (T,))
    S_box = Box.product(time_box, X, *([U] if m else []))
    Sigma_box = Box.product(time_box, X)
    kdoc = doc.get("kernel", {})
    kS = _kernel_for(kdoc.get("S"), "S", S_box)
    kSigma = _kernel_for(kdoc.get("Sigma"), "Sigma", Sigma_box)
    kD = _kernel_for(kdoc.get("D"), "D", D)
    try:
        spec = ProblemSpec(n, m, T, tuple(float(v) for v in doc["x0"]), X, U, D, f, h, F, kS, kSigma, kD)
    except ValueError as exc:
        raise ProblemFileError(str(exc)) from None

    cdoc = {**DEFAULT_CENTERS, **doc.get("centers", {})}
    if seed is not None:
        cdoc["seed"] = int(seed)
    cdoc.setdefault("M_b", max(1, round((cdoc["M_S"] + cdoc["M_D"]) / 3)))
    if cdoc["M_b"] > cdoc["M_S"] + cdoc["M_D"]:
        raise ProblemFileError(f"at key 'centers/M_b': {cdoc['M_b']} exceeds M_S + M_D = {cdoc['M_S'] + cdoc['M_D']}")
    sdoc = doc.get("solver", {})
    opts = SolveOptions(**sdoc)

    resolved = {
        "n": n,
        "m": m,
        "T": T,
        "x0": list(spec.x0),
        "X": X.to_dict(),
        **({"U": U.to_dict()} if m else {}),
        "D": D.to_dict(),
        "dynamics": list(doc["dynamics"]),
        "running_cost": doc["running_cost"],
        "terminal_cost": doc["terminal_cost"],
        "kernel": {"S": kS.to_dict(), "Sigma": kSigma.to_dict(), "D": kD.to_dict()},
        "centers": {k: cdoc[k] for k in ("M_S", "M_D", "M_b", "strategy", "seed")},
        "solver": {
            "eq_tol": opts.eq_tol,
            "stat_tol": opts.stat_tol,
            "max_iters": opts.max_iters,
            "penalty_init": opts.penalty_init,
            "penalty_growth": opts.penalty_growth,
            "method": opts.method,
        },
    }
    return RunConfig(spec, cdoc["M_S"], cdoc["M_D"], cdoc["M_b"], cdoc["strategy"], cdoc["seed"], opts, resolved)


def bundled(name: str) -> Path:
    """Path of a problem file shipped with the package (e.g. ``"lq"``)."""
    path = Path(__file__).parent / "problems" / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(path)
    return path


def finite_json(obj):
    """Raise if any float in ``obj`` is non-finite; return ``obj``."""
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ValueError("non-finite number in report")
    if isinstance(obj, dict):
        for v in obj.values():
            finite_json(v)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            finite_json(v)
    elif isinstance(obj, np.ndarray):
        finite_json(obj.tolist())
    return obj
