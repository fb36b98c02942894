"""JSON scene files: load, validate and dump.

Gamma entries are keyed ``"k,j,i"`` (1-based, storage order) and omega
entries ``"i,j"`` with i < j.  Absent entries are zero.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .expr import ExprError, ZERO, free_vars, parse, serialize
from .geometry import Chart, ConnectionCoeffs, GeometryError
from .symplectic import FormError, TwoFormField

DEFAULT_TOLERANCES = {"residual": 1e-8, "rank": 1e-8}
TOP_LEVEL_KEYS = {
    "chart", "connection", "two_form", "cotangent", "reduction", "presymplectic", "seed", "tolerances",
}


class SceneError(ValueError):
    pass


@dataclass
class Scene:
    chart: Chart = None
    connection: ConnectionCoeffs = None
    torsion_free: bool = True
    two_form: TwoFormField = None
    base_connection: dict = None  # raw block, resolved against a base chart by the caller
    fiber_domain: list = None
    reduction: dict = None
    presymplectic: dict = None
    seed: int = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    explicit_tolerances: bool = False


def _expr(src, names, where):
    if not isinstance(src, (str, int, float)) or isinstance(src, bool):
        raise SceneError(f"{where}: expected an expression string, got {type(src).__name__}")
    try:
        e = parse(str(src))
    except ExprError as exc:
        raise SceneError(f"{where}: {exc}") from None
    unknown = free_vars(e) - set(names)
    if unknown:
        raise SceneError(f"{where}: undeclared coordinates {sorted(unknown)}")
    return e


def _indices(key, count, dim, where):
    try:
        idx = [int(p) for p in str(key).split(",")]
    except ValueError:
        raise SceneError(f"{where}: bad index key {key!r}") from None
    if len(idx) != count:
        raise SceneError(f"{where}: key {key!r} needs {count} comma-separated indices")
    for i in idx:
        if not 1 <= i <= dim:
            raise SceneError(f"{where}: index {i} in {key!r} out of range 1..{dim}")
    return tuple(i - 1 for i in idx)


def parse_chart(block, where="chart"):
    if not isinstance(block, dict) or "coords" not in block:
        raise SceneError(f"{where}: needs 'coords'")
    coords = block["coords"]
    if not isinstance(coords, list) or not all(isinstance(c, str) for c in coords):
        raise SceneError(f"{where}.coords must be a list of names")
    domain = block.get("domain", [[-1.0, 1.0]] * len(coords))
    try:
        domain = [(float(lo), float(hi)) for lo, hi in domain]
    except (TypeError, ValueError):
        raise SceneError(f"{where}.domain must be a list of [lo, hi] pairs") from None
    if not all(math.isfinite(v) for pair in domain for v in pair):
        raise SceneError(f"{where}.domain must be finite")
    try:
        return Chart(tuple(coords), tuple(domain))
    except (GeometryError, ExprError) as exc:
        raise SceneError(f"{where}: {exc}") from None


def parse_gamma(block, chart, where):
    if not isinstance(block, dict):
        raise SceneError(f"{where}: expected an object")
    entries = block.get("gamma", {})
    if not isinstance(entries, dict):
        raise SceneError(f"{where}.gamma must be an object")
    d = chart.dim
    out = {}
    for key, src in entries.items():
        idx = _indices(key, 3, d, f"{where}.gamma")
        out[idx] = _expr(src, chart.coords, f"{where}.gamma[{key}]")
    return ConnectionCoeffs.from_entries(chart, out, symmetric=bool(block.get("symmetric", False)))


def parse_two_form(block, chart, where="two_form"):
    if not isinstance(block, dict):
        raise SceneError(f"{where}: expected an object")
    entries = block.get("omega", {})
    if not isinstance(entries, dict):
        raise SceneError(f"{where}.omega must be an object")
    out = {}
    for key, src in entries.items():
        i, j = _indices(key, 2, chart.dim, f"{where}.omega")
        if not i < j:
            raise SceneError(f"{where}.omega: key {key!r} must have i < j")
        out[(i, j)] = _expr(src, chart.coords, f"{where}.omega[{key}]")
    kind = block.get("kind")
    rank = block.get("rank")
    if rank is not None and (not isinstance(rank, int) or isinstance(rank, bool)):
        raise SceneError(f"{where}.rank must be an integer")
    try:
        return TwoFormField.from_upper(chart, out, kind=kind, rank=rank)
    except FormError as exc:
        raise SceneError(f"{where}: {exc}") from None


def scene_from_dict(doc):
    if not isinstance(doc, dict):
        raise SceneError("scene must be a JSON object")
    extra = set(doc) - TOP_LEVEL_KEYS
    if extra:
        raise SceneError(f"unknown top-level keys {sorted(extra)}")
    sc = Scene()
    if "chart" in doc:
        sc.chart = parse_chart(doc["chart"])
    for key in ("connection", "two_form"):
        if key in doc and sc.chart is None:
            raise SceneError(f"'{key}' requires a 'chart'")
    if "connection" in doc:
        sc.connection = parse_gamma(doc["connection"], sc.chart, "connection")
        sc.torsion_free = bool(doc["connection"].get("torsion_free", True))
    if "two_form" in doc:
        sc.two_form = parse_two_form(doc["two_form"], sc.chart)
    if "cotangent" in doc:
        block = doc["cotangent"]
        if not isinstance(block, dict):
            raise SceneError("cotangent: expected an object")
        sc.base_connection = block.get("base_connection")
        sc.fiber_domain = block.get("fiber_domain")
    if "reduction" in doc:
        block = doc["reduction"]
        if not isinstance(block, dict) or not {"n", "h"} <= set(block):
            raise SceneError("reduction: needs integers 'n' and 'h'")
        for k in ("n", "h"):
            if not isinstance(block[k], int) or isinstance(block[k], bool):
                raise SceneError(f"reduction.{k} must be an integer")
        xi = block.get("xi")
        if xi is not None:
            try:
                xi = [float(v) for v in xi]
            except (TypeError, ValueError):
                raise SceneError("reduction.xi must be a list of numbers") from None
        sc.reduction = {"n": block["n"], "h": block["h"], "xi": xi}
    if "presymplectic" in doc:
        block = doc["presymplectic"]
        if not isinstance(block, dict) or not isinstance(block.get("p"), int) or isinstance(block.get("p"), bool):
            raise SceneError("presymplectic: needs an integer 'p'")
        if sc.chart is None or sc.two_form is None:
            raise SceneError("presymplectic scenes need 'chart' and 'two_form'")
        K = parse_gamma(block["K"], sc.chart, "presymplectic.K") if "K" in block else None
        sc.presymplectic = {"p": block["p"], "K": K}
    if "seed" in doc:
        if not isinstance(doc["seed"], int) or isinstance(doc["seed"], bool) or doc["seed"] < 0:
            raise SceneError("seed must be a non-negative integer")
        sc.seed = doc["seed"]
    if "tolerances" in doc:
        tol = doc["tolerances"]
        if not isinstance(tol, dict) or set(tol) - set(DEFAULT_TOLERANCES):
            raise SceneError(f"tolerances may only set {sorted(DEFAULT_TOLERANCES)}")
        for k, v in tol.items():
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                raise SceneError(f"tolerances.{k} must be a positive number")
            sc.tolerances[k] = float(v)
        sc.explicit_tolerances = True
    return sc


def load_scene(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SceneError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: invalid JSON ({exc})") from None
    return scene_from_dict(doc)


# ---------------------------------------------------------------------------
# dumping

def chart_to_dict(chart):
    return {"coords": list(chart.coords), "domain": [[lo, hi] for lo, hi in chart.domain]}


def gamma_to_dict(conn):
    d = conn.dim
    out = {}
    for k, j, i in np.ndindex(d, d, d):
        e = conn.gamma[k, j, i]
        if e is not ZERO:
            out[f"{k + 1},{j + 1},{i + 1}"] = serialize(e)
    return out


def connection_to_dict(conn, torsion_free=True):
    block = {"gamma": gamma_to_dict(conn), "torsion_free": bool(torsion_free)}
    if conn.symmetric:
        block["symmetric"] = True
    return block


def two_form_to_dict(w):
    d = w.dim
    out = {}
    for i in range(d):
        for j in range(i + 1, d):
            e = w.omega[i, j]
            if e is not ZERO:
                out[f"{i + 1},{j + 1}"] = serialize(e)
    block = {"omega": out}
    if w.kind is not None:
        block["kind"] = w.kind
    if w.rank is not None:
        block["rank"] = w.rank
    return block


def scene_document(chart, connection=None, two_form=None, torsion_free=True, seed=None, extra=None):
    doc = {"chart": chart_to_dict(chart)}
    if connection is not None:
        doc["connection"] = connection_to_dict(connection, torsion_free)
    if two_form is not None:
        doc["two_form"] = two_form_to_dict(two_form)
    if extra:
        doc.update(extra)
    if seed is not None:
        doc["seed"] = seed
    return doc


def dumps(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_document(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(doc))
