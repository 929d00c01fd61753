"""Versioned JSON documents for fitted models.

Floats are written with Python's shortest round-trip repr, so loading a
document reproduces every coefficient and knot bit for bit.
"""

from __future__ import annotations

import json

import numpy as np

from . import __version__
from .basis import BasisFunction, BasisSet, DomainTransform, HalModel
from .density import DensityModel
from .errors import DomainError
from .solver import SolveReport
from .survival import HazardModel

FORMAT = "halkit-model"
SCHEMA_VERSION = 1
KINDS = ("regression", "hazard", "density", "projection")


def model_to_dict(model, kind: str | None = None) -> dict:
    if isinstance(model, HazardModel):
        inner, kind = model.inner, "hazard"
    elif isinstance(model, DensityModel):
        inner, kind = model.inner, "density"
    else:
        inner, kind = model, kind or "regression"
    if kind not in KINDS:
        raise DomainError(f"unknown model kind {kind!r}")
    b = inner.basis
    report = inner.report
    return {
        "format": FORMAT,
        "version": SCHEMA_VERSION,
        "halkit_version": __version__,
        "kind": kind,
        "d": b.d,
        "has_intercept": b.has_intercept,
        "sections": [list(f.section) for f in b.functions],
        "knots": [list(f.knot) for f in b.functions],
        "beta": [float(v) for v in inner.beta],
        "M": float(inner.M),
        "transform": {"mins": inner.transform.mins.tolist(), "maxs": inner.transform.maxs.tolist()},
        "report": None if report is None else {k: v for k, v in report.to_dict().items() if k != "beta_hat"},
    }


def validate_model_dict(doc) -> None:
    """Raise DomainError describing the first schema violation."""
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise DomainError("not a halkit model document")
    if doc.get("version") != SCHEMA_VERSION:
        raise DomainError(f"unsupported schema version {doc.get('version')!r}")
    for key, typ in (("kind", str), ("d", int), ("has_intercept", bool), ("sections", list), ("knots", list),
                     ("beta", list), ("M", (int, float)), ("transform", dict)):
        if not isinstance(doc.get(key), typ):
            raise DomainError(f"model document field {key!r} is missing or has the wrong type")
    if doc["kind"] not in KINDS:
        raise DomainError(f"unknown model kind {doc['kind']!r}")
    if len(doc["sections"]) != len(doc["knots"]):
        raise DomainError("sections and knots must have the same length")
    for sec, knot in zip(doc["sections"], doc["knots"]):
        if not isinstance(sec, list) or not isinstance(knot, list) or len(sec) != len(knot) or not sec:
            raise DomainError("each section needs one knot coordinate per member")
        if any(not isinstance(j, int) or not 0 <= j < doc["d"] for j in sec):
            raise DomainError(f"section {sec} has coordinates outside 0..{doc['d'] - 1}")
    expected = len(doc["sections"]) + (1 if doc["has_intercept"] else 0)
    if len(doc["beta"]) != expected:
        raise DomainError(f"beta has {len(doc['beta'])} entries, columns imply {expected}")


def model_from_dict(doc: dict):
    validate_model_dict(doc)
    d = doc["d"]
    fns = [BasisFunction(tuple(s), tuple(float(v) for v in k)) for s, k in zip(doc["sections"], doc["knots"])]
    basis = BasisSet(d, fns, doc["has_intercept"])
    beta = np.asarray(doc["beta"], dtype=float)
    report = None
    if doc.get("report") is not None:
        report = SolveReport.from_dict({**doc["report"], "beta_hat": beta})
    tr = DomainTransform(doc["transform"]["mins"], doc["transform"]["maxs"])
    inner = HalModel(basis, beta, doc["M"], tr, report)
    if doc["kind"] == "hazard":
        return HazardModel(inner, report)
    if doc["kind"] == "density":
        return DensityModel(inner, report)
    return inner


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def save_model(model, path, kind: str | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(model_to_dict(model, kind)))


def load_model(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(doc)
