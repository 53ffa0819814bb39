"""Problem files: loading, schema and invariant validation, object construction.

A problem file is ``{"format_version", "kind", "payload"}`` where ``kind`` is
one of ``program``, ``market``, ``stopping``, ``bolza`` or ``consumption``.
Validation returns diagnostics carrying a JSON pointer into the file.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping

import jsonschema
import numpy as np

from .duality import ShadowPriceProgram, StochasticProgram, TimeSeparableProgram
from .market import MarketModel
from .polyhedral import PolyhedralFunction
from .stopping import StoppingProblem
from .tree import AdaptedProcess, ScenarioProcess, ScenarioTree

FORMAT_VERSION = "1.0"
KINDS = ("program", "market", "stopping", "bolza", "consumption")


@dataclass
class Diagnostic:
    severity: str          # "error" or "warning"
    pointer: str           # JSON pointer into the problem file
    message: str

    def to_json(self) -> dict:
        return {"severity": self.severity, "pointer": self.pointer, "message": self.message}

    def __str__(self) -> str:
        where = self.pointer or "/"
        return f"{self.severity}: {where}: {self.message}"


class ValidationError(Exception):
    """Raised when an input fails validation; carries all diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic], source: str = ""):
        self.diagnostics = diagnostics
        self.source = source
        errs = [d for d in diagnostics if d.severity == "error"]
        prefix = f"{source}: " if source else ""
        super().__init__(prefix + "; ".join(str(d) for d in errs))


# ---------------------------------------------------------------------------
# JSON helpers


def read_json(path: str | Path) -> tuple[Any, bytes]:
    """Parse a JSON file; malformed input raises :class:`ValidationError` with line/column."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ValidationError([Diagnostic("error", "", f"cannot read file: {e.strerror}")], str(path)) from None
    try:
        return json.loads(raw.decode("utf-8")), raw
    except UnicodeDecodeError as e:
        raise ValidationError([Diagnostic("error", "", f"not UTF-8 text: {e}")], str(path)) from None
    except json.JSONDecodeError as e:
        msg = f"malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}"
        raise ValidationError([Diagnostic("error", "", msg)], str(path)) from None


def digest(*blobs: bytes) -> str:
    h = hashlib.sha256()
    for b in blobs:
        h.update(b)
    return "sha256:" + h.hexdigest()


def jsonable(obj: Any) -> Any:
    """Convert numpy values and non-finite floats to plain JSON (``"inf"``, ``"-inf"``, ``"nan"``)."""
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if hasattr(obj, "to_json"):
        return jsonable(obj.to_json())
    return obj


def number(v: Any) -> float:
    """Inverse of :func:`jsonable` for scalars."""
    if isinstance(v, str):
        return float(v)
    return float(v)


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    return json.loads(resources.files("stochdual").joinpath("schemas", name).read_text(encoding="utf-8"))


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def schema_diagnostics(data: Any, schema_name: str) -> list[Diagnostic]:
    schema = load_schema(schema_name)
    v = jsonschema.Draft202012Validator(schema)
    out = []
    for err in sorted(v.iter_errors(data), key=lambda e: list(map(str, e.absolute_path))):
        out.append(Diagnostic("error", _pointer(err.absolute_path), f"schema: {err.message}"))
    return out


# ---------------------------------------------------------------------------
# builders


class _Ctx:
    """Collects diagnostics while building; each step names its JSON pointer."""

    def __init__(self):
        self.diags: list[Diagnostic] = []

    def run(self, pointer: str, fn: Callable[[], Any]) -> Any:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return fn()
        except (ValueError, KeyError, TypeError, IndexError) as e:
            msg = e.args[0] if e.args else type(e).__name__
            self.diags.append(Diagnostic("error", pointer, str(msg)))
            return None

    def warn(self, pointer: str, msg: str) -> None:
        self.diags.append(Diagnostic("warning", pointer, msg))

    @property
    def failed(self) -> bool:
        return any(d.severity == "error" for d in self.diags)


def node_vectors(tree: ScenarioTree, data: Mapping, dim: int | list[int], what: str,
                 leaves_only: bool = False) -> dict[int, np.ndarray]:
    """Node-id keyed vectors; every (leaf) node must be present with the right length."""
    ids = [tree.ids[k] for k in (tree.leaves if leaves_only else range(len(tree)))]
    known = {str(i) for i in tree.ids}
    for key in data:
        if str(key) not in known:
            raise KeyError(f"{what} refers to unknown node {key}")
    out = {}
    for nid in ids:
        key = str(nid)
        if key not in data:
            raise KeyError(f"{what} has no value at node {nid}")
        v = np.atleast_1d(np.asarray(data[key], dtype=float)).reshape(-1)
        want = dim if isinstance(dim, int) else dim[tree.stage[tree.idx(nid)]]
        if v.size != want:
            raise ValueError(f"{what} at node {nid} has length {v.size}, expected {want}")
        out[nid] = v
    return out


def _functions(tree: ScenarioTree, data: Mapping, what: str) -> dict[int, PolyhedralFunction]:
    out = {}
    for key, fj in data.items():
        nid = int(key)
        tree.idx(nid)
        try:
            out[nid] = PolyhedralFunction.from_json(fj)
        except (ValueError, KeyError) as e:
            raise ValueError(f"{what} at node {nid}: {e.args[0] if e.args else e}") from None
    return out


def _adapted(tree: ScenarioTree, data: Mapping, dim: int, what: str) -> AdaptedProcess:
    vals = node_vectors(tree, data, dim, what)
    return AdaptedProcess(tree, [dim] * (tree.horizon + 1), vals, what)


def _leaf_matrix(tree: ScenarioTree, data: Mapping, dim: int, what: str) -> np.ndarray:
    vals = node_vectors(tree, data, dim, what, leaves_only=True)
    return np.array([vals[tree.ids[k]] for k in tree.leaves]).reshape(tree.leaves.size, dim)


def _build_tree(ctx: _Ctx, payload: Mapping, base: str) -> ScenarioTree | None:
    return ctx.run(base + "/tree", lambda: ScenarioTree.from_json(payload["tree"]))


def _build_program(ctx: _Ctx, p: Mapping, base: str):
    tree = _build_tree(ctx, p, base)
    if tree is None:
        return None
    form = p.get("form", "general")
    nd = p["n_dims"]
    if len(nd) != tree.horizon + 1:
        ctx.diags.append(Diagnostic("error", base + "/n_dims", f"need {tree.horizon + 1} entries, got {len(nd)}"))
        return None
    if form == "general":
        terms = ctx.run(base + "/terms", lambda: _functions(tree, p.get("terms", {}), "term"))
        u = None
        if "u" in p:
            u = ctx.run(base + "/u", lambda: ScenarioProcess.from_json(tree, p["u"]))
        if ctx.failed:
            return None
        return ctx.run(base, lambda: StochasticProgram(tree, nd, p["m_dims"], terms, u, p.get("name", "")))
    if form == "time_separable":
        m = int(p["m"])
        f0 = ctx.run(base + "/f0", lambda: _functions(tree, p.get("f0", {}), "objective"))
        A = {int(k): np.asarray(v, dtype=float) for k, v in p.get("A", {}).items()}
        b = {int(k): np.asarray(v, dtype=float) for k, v in p.get("b", {}).items()}
        u = ctx.run(base + "/u", lambda: _leaf_matrix(tree, p["u"], m, "u")) if "u" in p else None
        if ctx.failed:
            return None
        return ctx.run(base, lambda: TimeSeparableProgram(tree, nd, m, f0, A, b, u))
    if form == "shadow_price":
        n = int(sum(nd))
        h = ctx.run(base + "/h", lambda: _functions(tree, p["h"], "objective"))
        u = ctx.run(base + "/u", lambda: _leaf_matrix(tree, p["u"], n, "u")) if "u" in p else None
        if ctx.failed:
            return None
        return ctx.run(base, lambda: ShadowPriceProgram(tree, nd, h, u))
    ctx.diags.append(Diagnostic("error", base + "/form", f"unknown program form {form!r}"))
    return None


@dataclass
class MarketInput:
    model: MarketModel
    claim: AdaptedProcess | None = None
    premium: AdaptedProcess | None = None


def _build_market(ctx: _Ctx, p: Mapping, base: str) -> MarketInput | None:
    tree = _build_tree(ctx, p, base)
    if tree is None:
        return None
    n0 = len(ctx.diags)
    model = ctx.run(base, lambda: MarketModel.from_json(p, tree))
    if model is None:
        for d in ctx.diags[n0:]:
            m = re.match(r"node (-?\d+): .*\b(C|D)\b", d.message)
            if m:
                sec = m.group(2) if m.group(2) in p else ("cash_delivery" if "cash_delivery" in p else m.group(2) + "_default")
                d.pointer = f"{base}/{sec}/{m.group(1)}" if sec in ("C", "D", "cash_delivery") else f"{base}/{sec}"
        return None
    for w in model.warnings:
        ctx.warn(base + "/D", w)
    claim = premium = None
    if "claim" in p:
        claim = ctx.run(base + "/claim", lambda: _adapted(tree, p["claim"], model.d, "claim"))
    if "premium" in p:
        premium = ctx.run(base + "/premium", lambda: _adapted(tree, p["premium"], model.d, "premium"))
    if ctx.failed:
        return None
    return MarketInput(model, claim, premium)


def _build_stopping(ctx: _Ctx, p: Mapping, base: str) -> StoppingProblem | None:
    tree = _build_tree(ctx, p, base)
    if tree is None:
        return None
    return ctx.run(base + "/reward", lambda: StoppingProblem.from_json(p, tree))


@dataclass
class BolzaInput:
    tree: ScenarioTree
    d: int
    L: dict[int, PolyhedralFunction]
    u: AdaptedProcess | None = None
    y: AdaptedProcess | None = None


def _build_bolza(ctx: _Ctx, p: Mapping, base: str) -> BolzaInput | None:
    tree = _build_tree(ctx, p, base)
    if tree is None:
        return None
    d = int(p["d"])
    L = ctx.run(base + "/L", lambda: _functions(tree, p["L"], "Bolza term"))
    if L is not None:
        for nid, f in L.items():
            if f.dim != 2 * d:
                ctx.diags.append(Diagnostic("error", f"{base}/L/{nid}", f"Bolza term has dim {f.dim}, expected {2 * d}"))
    u = ctx.run(base + "/u", lambda: _adapted(tree, p["u"], d, "u")) if "u" in p else None
    y = ctx.run(base + "/y", lambda: _adapted(tree, p["y"], d, "y")) if "y" in p else None
    if ctx.failed:
        return None
    return BolzaInput(tree, d, L, u, y)


@dataclass
class ConsumptionInput:
    model: MarketModel
    utility: dict[int, PolyhedralFunction]
    endowment: AdaptedProcess | None = None


def _build_consumption(ctx: _Ctx, p: Mapping, base: str) -> ConsumptionInput | None:
    mi = _build_market(ctx, p["market"], base + "/market")
    if mi is None:
        return None
    model = mi.model
    F = ctx.run(base + "/utility", lambda: _functions(model.tree, p["utility"], "utility"))
    if F is not None:
        for nid, f in F.items():
            if f.dim != model.d:
                ctx.diags.append(Diagnostic("error", f"{base}/utility/{nid}", f"utility has dim {f.dim}, expected {model.d}"))
    w = None
    if "endowment" in p:
        w = ctx.run(base + "/endowment", lambda: _adapted(model.tree, p["endowment"], model.d, "endowment"))
    if ctx.failed:
        return None
    return ConsumptionInput(model, F, w)


_BUILDERS = {
    "program": _build_program,
    "market": _build_market,
    "stopping": _build_stopping,
    "bolza": _build_bolza,
    "consumption": _build_consumption,
}


def build(data: Any) -> tuple[Any, list[Diagnostic]]:
    """Validate a parsed problem file and construct its object.

    Returns ``(object or None, diagnostics)``; the object is ``None`` exactly
    when some diagnostic is an error.
    """
    diags = schema_diagnostics(data, "problem.schema.json")
    if diags:
        return None, diags
    if data["format_version"] != FORMAT_VERSION:
        return None, [Diagnostic("error", "/format_version", f"unsupported format version {data['format_version']!r}")]
    ctx = _Ctx()
    obj = _BUILDERS[data["kind"]](ctx, data["payload"], "/payload")
    if ctx.failed:
        obj = None
    return obj, ctx.diags


def validate(problem: Any) -> list[Diagnostic]:
    """Full invariant sweep of a problem file (path or parsed JSON); empty when well formed."""
    if isinstance(problem, (str, Path)):
        try:
            problem, _ = read_json(problem)
        except ValidationError as e:
            return e.diagnostics
    return build(problem)[1]


def load_problem(path: str | Path, kinds: tuple[str, ...] | None = None) -> tuple[Any, str, list[Diagnostic], bytes]:
    """Read, validate and build a problem file; raises :class:`ValidationError` on errors.

    Returns ``(object, kind, warnings, raw bytes)``.
    """
    data, raw = read_json(path)
    if kinds and isinstance(data, Mapping) and "kind" not in data and "format_version" not in data:
        # bare payload: wrap it in the envelope of the first accepted kind
        data = {"format_version": FORMAT_VERSION, "kind": kinds[0], "payload": data}
    obj, diags = build(data)
    if obj is None:
        raise ValidationError(diags, str(path))
    kind = data["kind"]
    if kinds and kind not in kinds:
        raise ValidationError([Diagnostic("error", "/kind", f"expected kind in {list(kinds)}, got {kind!r}")], str(path))
    return obj, kind, [d for d in diags if d.severity == "warning"], raw


def problem_file(kind: str, payload: Mapping) -> dict:
    return {"format_version": FORMAT_VERSION, "kind": kind, "payload": jsonable(payload)}
