"""Scenario documents.

Grammar (line oriented, UTF-8)::

    document := line*
    line     := blank | comment | section | entry
    comment  := '#' text
    section  := '[' name ']'
    entry    := key '=' value        (a trailing '# ...' is a comment)

Entries before the first section belong to the top level. Keys are unique
within a section except ``term`` (``[diffusivity]``) and ``tuple``
(``[verify]``), which may repeat. Values are numbers, Python-style list
literals (``[[1, 0], [0, 1]]``) or bare strings. See README.md for the keys of
each section.
"""
from __future__ import annotations

import ast
import math
import operator
import re
from dataclasses import dataclass, field as dc_field

import numpy as np

from .diffusivity import (
    ConstantModel, Mollifier, PiecewiseConstantModel, SmoothModel, SpdMatrix, TimeFunction,
    eval_a,
)
from .errors import AnisoHeatError, ExponentMismatch, NotSpd, ParseError, ValidationError
from .estimates import check_young
from .kernel import KernelParams, kernel_eval
from .propagator import Field, SpatialGrid

REPEATABLE = {("diffusivity", "term"), ("verify", "tuple")}
KNOWN = {
    "": {"seed", "name"},
    "grid": {"dim", "points", "half_width"},
    "diffusivity": {"kind", "matrix", "breakpoints", "values", "term", "rotation"},
    "initial": {"kind", "sigma0", "amplitude", "center", "height", "radius", "index", "expr"},
    "source": {"kind", "sigma", "amplitude", "rate", "expr"},
    "times": {"values"},
    "verify": {"tuple", "energy_q"},
    "net": {"epsilons", "mollifier", "second_mollifier", "seminorms"},
    "certify": {"samples", "seed_offset"},
    "solver": {"panels", "tol", "max_panels"},
}
_SECTION = re.compile(r"\[\s*([A-Za-z_][\w]*)\s*\]")
_ENTRY = re.compile(r"([A-Za-z_][\w]*)\s*=\s*(.*)")


@dataclass
class Entry:
    value: str
    line: int


def parse_document(text):
    """Split a document into ``{section: {key: Entry | [Entry, ...]}}``."""
    doc = {"": {}}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        m = _SECTION.fullmatch(line)
        if m:
            section = m.group(1)
            if section not in KNOWN:
                raise ParseError(f"unknown section [{section}]", lineno)
            if section in doc:
                raise ParseError(f"duplicate section [{section}]", lineno)
            doc[section] = {}
            continue
        m = _ENTRY.fullmatch(line)
        if not m:
            raise ParseError(f"expected 'key = value' or '[section]', got {raw.strip()!r}", lineno)
        key, value = m.group(1), m.group(2).strip()
        if key not in KNOWN[section]:
            where = f"[{section}]" if section else "top level"
            raise ParseError(f"unknown key {key!r} in {where}", lineno)
        if not value:
            raise ParseError(f"empty value for {key!r}", lineno)
        bucket = doc[section]
        if (section, key) in REPEATABLE:
            bucket.setdefault(key, []).append(Entry(value, lineno))
        elif key in bucket:
            raise ParseError(f"duplicate key {key!r}", lineno)
        else:
            bucket[key] = Entry(value, lineno)
    return doc


def _strip_comment(line):
    depth = 0
    for i, ch in enumerate(line):
        if ch in "[(":
            depth += 1
        elif ch in "])":
            depth -= 1
        elif ch == "#" and depth == 0:
            return line[:i]
    return line


def _literal(entry):
    try:
        return ast.literal_eval(entry.value)
    except (ValueError, SyntaxError):
        raise ParseError(f"malformed literal {entry.value!r}", entry.line) from None


def _number(entry, kind=float):
    val = _literal(entry)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ParseError(f"expected a number, got {entry.value!r}", entry.line)
    if kind is int:
        if not float(val).is_integer():
            raise ParseError(f"expected an integer, got {entry.value!r}", entry.line)
        return int(val)
    return float(val)


def _numbers(entry):
    val = _literal(entry)
    if isinstance(val, (int, float)):
        val = [val]
    try:
        return [float(v) for v in val]
    except (TypeError, ValueError):
        raise ParseError(f"expected a list of numbers, got {entry.value!r}", entry.line) from None


def _spd(entry, dim=None):
    try:
        m = SpdMatrix(np.array(_literal(entry), dtype=float))
    except NotSpd as exc:
        raise ValidationError(str(exc), entry.line, reason="NotSpd") from None
    except (TypeError, ValueError):
        raise ParseError(f"malformed matrix literal {entry.value!r}", entry.line) from None
    if dim is not None and m.dim != dim:
        raise ValidationError(f"matrix is {m.dim}x{m.dim}, grid dimension is {dim}", entry.line)
    return m


def _require(bucket, key, section):
    if key not in bucket:
        raise ValidationError(f"missing key {key!r} in [{section}]")
    return bucket[key]


# ---------------------------------------------------------------------------
# closed-form expressions in x and t
# ---------------------------------------------------------------------------

_FUNCS = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "sqrt": np.sqrt, "abs": np.abs,
          "tanh": np.tanh}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


class Expression:
    """Arithmetic over ``x`` (alias ``x1``), ``y`` (``x2``), ``z`` (``x3``),
    ``t``, the constants ``pi``/``e`` and ``exp sin cos sqrt abs tanh``."""

    def __init__(self, text, line=None):
        self.text = text
        try:
            self.tree = ast.parse(text, mode="eval")
        except SyntaxError:
            raise ParseError(f"malformed expression {text!r}", line) from None
        self._check(self.tree.body, line)

    def _check(self, node, line):
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left, line)
            self._check(node.right, line)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            self._check(node.operand, line)
        elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            if len(node.args) != 1 or node.keywords:
                raise ParseError(f"{node.func.id}() takes one argument", line)
            self._check(node.args[0], line)
        elif isinstance(node, ast.Name):
            if node.id not in _CONSTS and node.id not in ("x", "y", "z", "x1", "x2", "x3", "t"):
                raise ParseError(f"unknown name {node.id!r} in expression", line)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            pass
        else:
            raise ParseError(f"unsupported construct in expression {self.text!r}", line)

    def __call__(self, points, t=0.0):
        env = dict(_CONSTS, t=t)
        for i, names in enumerate((("x", "x1"), ("y", "x2"), ("z", "x3"))):
            if i < points.shape[-1]:
                for nm in names:
                    env[nm] = points[..., i]
        return np.broadcast_to(self._eval(self.tree.body, env), points.shape[:-1]).astype(float)

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, env)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](self._eval(node.args[0], env))
        if isinstance(node, ast.Name):
            if node.id not in env:
                raise ValueError(f"{node.id!r} is not defined for this grid dimension")
            return env[node.id]
        return float(node.value)


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerifyTuple:
    p: float
    q: float
    r: float
    alpha: float | None = None


@dataclass
class NetSpec:
    epsilons: tuple
    mollifier: Mollifier
    second_mollifier: Mollifier | None
    seminorms: tuple


@dataclass
class Scenario:
    grid: SpatialGrid
    model: object
    initial: Field
    source: object
    times: list
    seed: int = 42
    name: str = "scenario"
    verify: list = dc_field(default_factory=list)
    energy_q: list = dc_field(default_factory=lambda: [1.5, 2.0, 4.0])
    net: NetSpec | None = None
    certify_samples: int = 20
    panels: int = 16
    tol: float | None = 1e-8
    max_panels: int = 64


def _build_model(sec, dim):
    kind = _require(sec, "kind", "diffusivity")
    if kind.value == "constant":
        return ConstantModel(_spd(_require(sec, "matrix", "diffusivity"), dim))
    if kind.value == "piecewise":
        bps = _require(sec, "breakpoints", "diffusivity")
        vals = _require(sec, "values", "diffusivity")
        raw = _literal(vals)
        mats = []
        for m in raw:
            mats.append(_spd(Entry(repr(m), vals.line), dim))
        try:
            return PiecewiseConstantModel(_numbers(bps), mats)
        except ValueError as exc:
            raise ValidationError(str(exc), bps.line) from None
    if kind.value == "smooth":
        terms = []
        for entry in _require(sec, "term", "diffusivity"):
            head, sep, tail = entry.value.rpartition("*")
            if not sep:
                raise ParseError("term must read '<time function> * <matrix>'", entry.line)
            try:
                fn = TimeFunction.parse(head)
            except ValueError as exc:
                raise ParseError(str(exc), entry.line) from None
            mat = np.array(_literal(Entry(tail.strip(), entry.line)), dtype=float)
            if mat.shape != (dim, dim):
                raise ValidationError(f"term matrix must be {dim}x{dim}", entry.line)
            terms.append((fn, mat))
        rotation = None
        if "rotation" in sec:
            rotation = _literal(sec["rotation"])
        try:
            model = SmoothModel(terms, rotation)
        except (ValueError, NotSpd) as exc:
            raise ValidationError(str(exc), sec["kind"].line, reason=getattr(exc, "code", None)) from None
        try:
            eval_a(model, 0.0)
        except NotSpd as exc:
            raise ValidationError(str(exc), sec["kind"].line, reason="NotSpd") from None
        return model
    raise ValidationError(f"unknown diffusivity kind {kind.value!r}", kind.line)


def _build_initial(sec, grid):
    kind = _require(sec, "kind", "initial")
    if kind.value == "gaussian":
        sigma = _spd(_require(sec, "sigma0", "initial"), grid.dim)
        amp = _number(sec["amplitude"]) if "amplitude" in sec else 1.0
        center = np.array(_numbers(sec["center"]) if "center" in sec else [0.0] * grid.dim)
        kp = KernelParams(sigma)
        return Field(grid, amp * kernel_eval(grid.coordinates - center, kp))
    if kind.value == "plateau":
        height = _number(sec["height"]) if "height" in sec else 1.0
        radius = _number(_require(sec, "radius", "initial"))
        inside = np.max(np.abs(grid.coordinates), axis=-1) < radius
        return Field(grid, np.where(inside, height, 0.0))
    if kind.value == "one_hot":
        idx = (tuple(int(i) for i in _numbers(sec["index"])) if "index" in sec
               else (grid.points // 2,) * grid.dim)
        if len(idx) != grid.dim or any(not 0 <= i < grid.points for i in idx):
            raise ValidationError(f"index {idx} outside the grid", sec.get("index", kind).line)
        vals = np.zeros(grid.shape)
        vals[idx] = 1.0 / grid.cell_volume
        return Field(grid, vals)
    if kind.value == "expression":
        entry = _require(sec, "expr", "initial")
        expr = Expression(entry.value, entry.line)
        try:
            return Field(grid, expr(grid.coordinates))
        except ValueError as exc:
            raise ValidationError(str(exc), entry.line) from None
    raise ValidationError(f"unknown initial kind {kind.value!r}", kind.line)


def _build_source(sec, grid):
    if not sec:
        return None
    kind = _require(sec, "kind", "source")
    if kind.value == "zero":
        return None
    if kind.value == "gaussian_modulated":
        sigma = _spd(_require(sec, "sigma", "source"), grid.dim)
        amp = _number(sec["amplitude"]) if "amplitude" in sec else 1.0
        rate = _number(sec["rate"]) if "rate" in sec else 0.0
        shape = kernel_eval(grid.coordinates, KernelParams(sigma))

        def gaussian_source(s):
            return Field(grid, amp * math.exp(-rate * s) * shape)

        return gaussian_source
    if kind.value == "expression":
        entry = _require(sec, "expr", "source")
        expr = Expression(entry.value, entry.line)
        try:
            expr(grid.coordinates, 0.0)
        except ValueError as exc:
            raise ValidationError(str(exc), entry.line) from None

        def expression_source(s):
            return Field(grid, expr(grid.coordinates, s))

        return expression_source
    raise ValidationError(f"unknown source kind {kind.value!r}", kind.line)


def _parse_tuple(entry):
    parts = [p for p in re.split(r"[,\s]+", entry.value.strip("()[] ")) if p]
    if len(parts) not in (3, 4):
        raise ParseError("tuple must read 'p, q, r[, alpha]'", entry.line)
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ParseError(f"non-numeric tuple {entry.value!r}", entry.line) from None
    tup = VerifyTuple(*vals)
    try:
        check_young(tup.p, tup.q, tup.r)
    except ExponentMismatch as exc:
        raise ValidationError(str(exc), entry.line, reason="ExponentMismatch") from None
    return tup


def _parse_epsilons(entry):
    m = re.fullmatch(r"geometric\s*\((.*)\)", entry.value)
    if m:
        try:
            hi, lo, count = (float(v) for v in m.group(1).split(","))
        except ValueError:
            raise ParseError("geometric(eps_max, eps_min, count) expected", entry.line) from None
        return tuple(float(e) for e in np.geomspace(hi, lo, int(count)))
    return tuple(_numbers(entry))


def _mollifier(entry):
    try:
        return Mollifier.parse(entry.value)
    except AnisoHeatError as exc:
        raise ValidationError(str(exc), entry.line, reason=exc.code) from None
    except ValueError as exc:
        raise ParseError(str(exc), entry.line) from None


def parse_scenario(text):
    """Parse and validate a scenario document."""
    doc = parse_document(text)
    top = doc[""]
    grid_sec = doc.get("grid")
    if grid_sec is None:
        raise ValidationError("missing section [grid]")
    try:
        grid = SpatialGrid(_number(_require(grid_sec, "dim", "grid"), int),
                           _number(_require(grid_sec, "points", "grid"), int),
                           _number(_require(grid_sec, "half_width", "grid")))
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ValidationError(str(exc), grid_sec.get("dim", Entry("", None)).line) from None

    if "diffusivity" not in doc:
        raise ValidationError("missing section [diffusivity]")
    model = _build_model(doc["diffusivity"], grid.dim)
    if "initial" not in doc:
        raise ValidationError("missing section [initial]")
    initial = _build_initial(doc["initial"], grid)
    source = _build_source(doc.get("source", {}), grid)

    times_entry = _require(doc.get("times", {}), "values", "times")
    times = _numbers(times_entry)
    if not times or times[0] < 0 or any(b <= a for a, b in zip(times, times[1:])):
        raise ValidationError("times must be nonnegative and strictly increasing", times_entry.line)

    sc = Scenario(grid=grid, model=model, initial=initial, source=source, times=times)
    if "seed" in top:
        sc.seed = _number(top["seed"], int)
    if "name" in top:
        sc.name = top["name"].value
    verify = doc.get("verify", {})
    sc.verify = [_parse_tuple(e) for e in verify.get("tuple", [])]
    if "energy_q" in verify:
        sc.energy_q = _numbers(verify["energy_q"])
        if any(q < 1 for q in sc.energy_q):
            raise ValidationError("energy exponents must be >= 1", verify["energy_q"].line,
                                  reason="BadExponent")

    if "net" in doc:
        net = doc["net"]
        eps = _parse_epsilons(net["epsilons"]) if "epsilons" in net else None
        moll = _mollifier(net["mollifier"]) if "mollifier" in net else Mollifier.bump(2)
        second = _mollifier(net["second_mollifier"]) if "second_mollifier" in net else None
        seminorms = (tuple(s.strip() for s in net["seminorms"].value.split(","))
                     if "seminorms" in net else ("l2", "h1"))
        for s in seminorms:
            if s not in ("l2", "h1"):
                raise ValidationError(f"unknown seminorm {s!r}", net["seminorms"].line)
        sc.net = NetSpec(eps, moll, second, seminorms)

    cert = doc.get("certify", {})
    if "samples" in cert:
        sc.certify_samples = _number(cert["samples"], int)
    solver = doc.get("solver", {})
    if "panels" in solver:
        sc.panels = _number(solver["panels"], int)
    if "tol" in solver:
        sc.tol = None if solver["tol"].value == "none" else _number(solver["tol"])
    if "max_panels" in solver:
        sc.max_panels = _number(solver["max_panels"], int)
    return sc
