"""Manifest files: named manifolds, fields, vector fields, warped planes, plans.

Layout::

    version = 1
    manifold h2 {
      coords = x, y, z;
      let F = (2 - x^2 - y^2)/2;
      metric = [[1/F^2, 0, 0], [0, 1/F^2, 0], [0, 0, 1]];
      domain = x^2 + y^2 < 2;
      box = x:-2:2, y:-2:2, z:0:1;
    }
    field f on h2 { expr = x^2 + y^2; }
    vfield X on h2 { components = (-y, x, 0); }
    warp w { f = r*(1+r^2); range = 0.5:2; }
    plan fine { samples = 5000; seed = 1; }

Statements end with ``;``; ``#`` starts a comment.  The constant ``pi`` is
predefined.  Every expression is parsed when the file is loaded, and errors
carry ``file:line:col``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import expr as ex
from .equilibrium import SamplePlan
from .geometry import GeometryError, Manifold, ScalarField, VectorField
from .stability import WarpedPlane

__all__ = ["Manifest", "ManifestError", "load_manifest", "parse_manifest",
           "builtin_names", "resolve_manifest"]

KINDS = ("manifold", "field", "vfield", "warp", "plan")
CONSTANTS = {"pi": ex.const(math.pi)}


class ManifestError(ValueError):
    def __init__(self, message: str, source: str = "<manifest>", line: int = 0, col: int = 0):
        self.source, self.line, self.col = source, line, col
        self.message = message
        super().__init__(f"{source}:{line}:{col}: {message}")


@dataclass
class Manifest:
    source: str
    manifolds: dict[str, Manifold] = field(default_factory=dict)
    fields: dict[str, ScalarField] = field(default_factory=dict)
    vfields: dict[str, VectorField] = field(default_factory=dict)
    warps: dict[str, WarpedPlane] = field(default_factory=dict)
    plans: dict[str, SamplePlan] = field(default_factory=dict)
    field_boxes: dict[str, dict[str, tuple[float, float]]] = field(default_factory=dict)
    centers: dict[str, tuple[float, ...]] = field(default_factory=dict)
    rmax: dict[str, float] = field(default_factory=dict)
    spans: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)

    def manifold_of(self, field_name: str) -> str:
        f = self.fields[field_name]
        return next(k for k, m in self.manifolds.items() if m is f.manifold)


# -- scanning -----------------------------------------------------------------

@dataclass
class _Text:
    value: str
    offset: int          # offset of value[0] in the file


@dataclass
class _Stmt:
    key: str
    value: _Text
    offset: int


@dataclass
class _Block:
    kind: str
    name: str
    target: str | None
    offset: int
    stmts: list[_Stmt]


_HEADER = re.compile(r"\s*([A-Za-z_]\w*)\s+([A-Za-z_]\w*)(?:\s+on\s+([A-Za-z_]\w*))?\s*\{")
_VERSION = re.compile(r"\s*version\s*=\s*(\S+?)\s*(;|\n|$)")
_KEY = re.compile(r"\s*(let\s+[A-Za-z_]\w*|[A-Za-z_]\w*)\s*=")


class _Scanner:
    def __init__(self, text: str, source: str):
        # comments become blanks so offsets stay valid
        self.text = re.sub(r"#[^\n]*", lambda m: " " * len(m.group()), text)
        self.source = source
        self.pos = 0

    def where(self, offset: int) -> tuple[int, int]:
        line = self.text.count("\n", 0, offset) + 1
        col = offset - (self.text.rfind("\n", 0, offset) + 1) + 1
        return line, col

    def error(self, message: str, offset: int) -> ManifestError:
        return ManifestError(message, self.source, *self.where(offset))

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def scan(self) -> tuple[str, list[_Block]]:
        self.skip_ws()
        m = _VERSION.match(self.text, self.pos)
        if not m:
            raise self.error("manifest must start with 'version = 1'", self.pos)
        if m.group(1) != "1":
            raise self.error(f"unsupported manifest version {m.group(1)!r}", m.start(1))
        self.pos = m.end()
        blocks = []
        while True:
            self.skip_ws()
            if self.pos >= len(self.text):
                return m.group(1), blocks
            blocks.append(self.block())

    def block(self) -> _Block:
        start = self.pos
        m = _HEADER.match(self.text, self.pos)
        if not m:
            raise self.error("expected '<kind> <name> [on <manifold>] {'", start)
        kind, name, target = m.group(1), m.group(2), m.group(3)
        if kind not in KINDS:
            raise self.error(f"unknown section kind {kind!r}", start)
        self.pos = m.end()
        stmts = []
        while True:
            self.skip_ws()
            if self.pos >= len(self.text):
                raise self.error(f"unterminated {kind} {name!r}", start)
            if self.text[self.pos] == "}":
                self.pos += 1
                return _Block(kind, name, target, start, stmts)
            stmts.append(self.statement())

    def statement(self) -> _Stmt:
        start = self.pos
        m = _KEY.match(self.text, self.pos)
        if not m:
            raise self.error("expected '<key> = <value>;'", start)
        self.pos = m.end()
        depth, i = 0, self.pos
        while i < len(self.text):
            ch = self.text[i]
            if ch in "([":
                depth += 1
            elif ch in ")]":
                depth -= 1
            elif ch == ";" and depth == 0:
                break
            elif ch == "}" and depth == 0:
                raise self.error("missing ';'", i)
            i += 1
        else:
            raise self.error("missing ';'", start)
        raw = self.text[self.pos:i]
        lead = len(raw) - len(raw.lstrip())
        value = _Text(raw.strip(), self.pos + lead)
        self.pos = i + 1
        return _Stmt(" ".join(m.group(1).split()), value, start)


def _split_top(t: _Text, sep: str = ",") -> list[_Text]:
    parts, depth, last = [], 0, 0
    for i, ch in enumerate(t.value):
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif ch == sep and depth == 0:
            parts.append((last, i))
            last = i + 1
    parts.append((last, len(t.value)))
    out = []
    for a, b in parts:
        raw = t.value[a:b]
        lead = len(raw) - len(raw.lstrip())
        out.append(_Text(raw.strip(), t.offset + a + lead))
    return out


def _unwrap(t: _Text, open_: str, close: str, sc: _Scanner) -> _Text:
    if not (t.value.startswith(open_) and t.value.endswith(close)):
        raise sc.error(f"expected {open_}...{close}", t.offset)
    inner = t.value[1:-1]
    lead = len(inner) - len(inner.lstrip())
    return _Text(inner.strip(), t.offset + 1 + lead)


# -- building -----------------------------------------------------------------

class _Builder:
    def __init__(self, sc: _Scanner):
        self.sc = sc
        self.m = Manifest(sc.source)

    def expr(self, t: _Text, coords, lets) -> ex.Expression:
        try:
            return ex.parse(t.value, coords, {**CONSTANTS, **lets})
        except ex.ParseError as err:
            raise self.sc.error(err.message + _expected(err), t.offset + err.pos) from None

    def predicate(self, t: _Text, coords, lets) -> ex.Predicate:
        try:
            return ex.parse_predicate(t.value, coords, {**CONSTANTS, **lets})
        except ex.ParseError as err:
            raise self.sc.error(err.message + _expected(err), t.offset + err.pos) from None

    def number(self, t: _Text) -> float:
        v = ex.evaluate(self.expr(t, (), {}), {})
        if not math.isfinite(v):
            raise self.sc.error("value is not finite", t.offset)
        return v

    def integer(self, t: _Text) -> int:
        try:
            return int(t.value)
        except ValueError:
            raise self.sc.error(f"expected an integer, got {t.value!r}", t.offset) from None

    def box(self, t: _Text, coords) -> dict[str, tuple[float, float]]:
        out = {}
        for part in _split_top(t):
            pieces = part.value.split(":")
            if len(pieces) != 3 or pieces[0].strip() not in coords:
                raise self.sc.error("box entries look like '<coord>:<lo>:<hi>'", part.offset)
            name = pieces[0].strip()
            lo_off = part.offset + len(pieces[0]) + 1
            hi_off = lo_off + len(pieces[1]) + 1
            lo = self.number(_Text(pieces[1].strip(), lo_off))
            hi = self.number(_Text(pieces[2].strip(), hi_off))
            if not lo < hi:
                raise self.sc.error(f"empty box side for {name}", part.offset)
            out[name] = (lo, hi)
        return out

    def declare(self, kind: str, b: _Block):
        key = (kind, b.name)
        if key in self.m.spans:
            line, col = self.m.spans[key]
            here = self.sc.where(b.offset)
            raise self.sc.error(f"duplicate {kind} {b.name!r} (first defined at "
                                f"{self.sc.source}:{line}:{col}, again at "
                                f"{self.sc.source}:{here[0]}:{here[1]})", b.offset)
        self.m.spans[key] = self.sc.where(b.offset)

    def stmts(self, b: _Block, allowed: set[str]) -> dict[str, _Stmt]:
        seen: dict[str, _Stmt] = {}
        for s in b.stmts:
            base = "let" if s.key.startswith("let ") else s.key
            if base not in allowed:
                raise self.sc.error(f"unknown key {s.key!r} in {b.kind}", s.offset)
            if base != "let" and s.key in seen:
                raise self.sc.error(f"key {s.key!r} given twice", s.offset)
            seen.setdefault(s.key, s)
        return seen

    def target(self, b: _Block) -> Manifold:
        if b.target is None:
            raise self.sc.error(f"{b.kind} {b.name!r} needs 'on <manifold>'", b.offset)
        if b.target not in self.m.manifolds:
            raise self.sc.error(f"unknown manifold {b.target!r}", b.offset)
        return self.m.manifolds[b.target]

    def manifold(self, b: _Block):
        s = self.stmts(b, {"dim", "coords", "let", "metric", "domain", "box", "center",
                           "rmax"})
        for req in ("coords", "metric"):
            if req not in s:
                raise self.sc.error(f"manifold {b.name!r} lacks '{req}'", b.offset)
        coords = []
        for c in _split_top(s["coords"].value):
            if not re.fullmatch(r"[A-Za-z_]\w*", c.value):
                raise self.sc.error(f"bad coordinate name {c.value!r}", c.offset)
            if c.value in ex.FUNCTIONS or c.value in CONSTANTS:
                raise self.sc.error(f"coordinate name {c.value!r} is reserved", c.offset)
            coords.append(c.value)
        if "dim" in s and self.integer(s["dim"].value) != len(coords):
            raise self.sc.error("dim does not match the number of coordinates",
                                s["dim"].value.offset)
        lets: dict[str, ex.Expression] = {}
        for st in b.stmts:
            if st.key.startswith("let "):
                name = st.key[4:]
                if name in coords or name in lets or name in CONSTANTS:
                    raise self.sc.error(f"let name {name!r} already in use", st.offset)
                lets[name] = self.expr(st.value, coords, lets)
        rows = _split_top(_unwrap(s["metric"].value, "[", "]", self.sc))
        metric = [[self.expr(e, coords, lets) for e in _split_top(_unwrap(r, "[", "]", self.sc))]
                  for r in rows]
        domain = (self.predicate(s["domain"].value, coords, lets) if "domain" in s
                  else ex.Predicate())
        box = self.box(s["box"].value, coords) if "box" in s else None
        try:
            M = Manifold(coords, metric, domain, {**CONSTANTS, **lets}, box, b.name)
        except GeometryError as err:
            raise self.sc.error(str(err), s["metric"].value.offset) from None
        self.m.manifolds[b.name] = M
        if "center" in s:
            parts = _split_top(s["center"].value)
            if len(parts) != len(coords):
                raise self.sc.error("center needs one value per coordinate",
                                    s["center"].value.offset)
            self.m.centers[b.name] = tuple(self.number(p) for p in parts)
        if "rmax" in s:
            self.m.rmax[b.name] = self.number(s["rmax"].value)

    def field(self, b: _Block):
        M = self.target(b)
        s = self.stmts(b, {"expr", "domain", "box"})
        if "expr" not in s:
            raise self.sc.error(f"field {b.name!r} lacks 'expr'", b.offset)
        e = self.expr(s["expr"].value, M.coords, M.lets)
        dom = (self.predicate(s["domain"].value, M.coords, M.lets) if "domain" in s
               else ex.Predicate())
        self.m.fields[b.name] = ScalarField(M, e, dom, b.name)
        if "box" in s:
            self.m.field_boxes[b.name] = self.box(s["box"].value, M.coords)

    def vfield(self, b: _Block):
        M = self.target(b)
        s = self.stmts(b, {"components"})
        if "components" not in s:
            raise self.sc.error(f"vfield {b.name!r} lacks 'components'", b.offset)
        comps = _split_top(_unwrap(s["components"].value, "(", ")", self.sc))
        if len(comps) != M.dim:
            raise self.sc.error(f"vfield needs {M.dim} components, got {len(comps)}",
                                s["components"].value.offset)
        self.m.vfields[b.name] = VectorField(
            M, tuple(self.expr(c, M.coords, M.lets) for c in comps), b.name)

    def warp(self, b: _Block):
        if b.target is not None:
            raise self.sc.error("warp sections take no 'on' clause", b.offset)
        s = self.stmts(b, {"f", "range"})
        for req in ("f", "range"):
            if req not in s:
                raise self.sc.error(f"warp {b.name!r} lacks '{req}'", b.offset)
        f = self.expr(s["f"].value, ("r",), {})
        t = s["range"].value
        if t.value.count(":") != 1:
            raise self.sc.error("range looks like '<lo>:<hi>'", t.offset)
        a, c = t.value.split(":")
        lo = self.number(_Text(a.strip(), t.offset))
        hi = self.number(_Text(c.strip(), t.offset + len(a) + 1))
        try:
            self.m.warps[b.name] = WarpedPlane(f, lo, hi, b.name)
        except ValueError as err:
            raise self.sc.error(str(err), b.offset) from None

    def plan(self, b: _Block):
        s = self.stmts(b, {"samples", "seed", "tol", "eps_crit", "box"})
        kw = {}
        if "samples" in s:
            kw["samples"] = self.integer(s["samples"].value)
        if "seed" in s:
            kw["seed"] = self.integer(s["seed"].value)
        for key in ("tol", "eps_crit"):
            if key in s:
                kw[key] = self.number(s[key].value)
        if "box" in s:
            M = self.target(b)
            kw["box"] = self.box(s["box"].value, M.coords)
        try:
            self.m.plans[b.name] = SamplePlan(**kw)
        except ValueError as err:
            raise self.sc.error(str(err), b.offset) from None


def _expected(err: ex.ParseError) -> str:
    return f" (expected {', '.join(err.expected)})" if err.expected else ""


def parse_manifest(text: str, source: str = "<manifest>") -> Manifest:
    sc = _Scanner(text, source)
    _, blocks = sc.scan()
    b = _Builder(sc)
    for blk in blocks:
        b.declare(blk.kind, blk)
        getattr(b, blk.kind)(blk)
    return b.m


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ManifestError(f"cannot read manifest: {err.strerror}", str(path), 0, 0) from None
    return parse_manifest(text, str(path))


def builtin_names() -> list[str]:
    pkg = resources.files("equipart") / "fixtures"
    return sorted(p.name[:-4] for p in pkg.iterdir() if p.name.endswith(".eqm"))


def resolve_manifest(name_or_path: str) -> Manifest:
    """Load a manifest from a path, or a shipped fixture by bare name."""
    p = Path(name_or_path)
    if p.exists():
        return load_manifest(p)
    if name_or_path in builtin_names():
        res = resources.files("equipart") / "fixtures" / f"{name_or_path}.eqm"
        return parse_manifest(res.read_text(encoding="utf-8"), f"{name_or_path}.eqm")
    raise ManifestError(f"no manifest file or built-in fixture named {name_or_path!r}",
                        name_or_path, 0, 0)
