"""Expression trees over named coordinates.

A tiny analytic-expression language: parse text into immutable trees, take
exact symbolic partial derivatives, apply local simplifications and evaluate
on scalars or numpy arrays.  Evaluation goes through Python source generated
once per expression (with common subexpressions shared), so batched evaluation
over thousands of points costs a single pass of numpy ufunc calls.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := "-" factor | power
    power  := atom ("^" factor)?
    atom   := number | ident | ident "(" expr ")" | "(" expr ")"

so ``-x^2`` is ``-(x^2)`` and ``2^-1`` is allowed.  Functions: sin, cos, exp,
log, sqrt, acos, atan.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "Expression", "Const", "Var", "Unary", "Binary", "Predicate",
    "ExpressionError", "ParseError", "UnknownIdentifierError", "ArityError",
    "DomainError", "FUNCTIONS",
    "parse", "parse_predicate", "differentiate", "simplify", "substitute",
    "evaluate", "evaluate_many", "compile_exprs", "to_text", "variables",
    "const", "var", "add", "sub", "mul", "div", "power", "neg", "func",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "acos", "atan")


class ExpressionError(ValueError):
    pass


class ParseError(ExpressionError):
    """Syntax error at character offset ``pos`` of the parsed text."""

    def __init__(self, message: str, pos: int, expected: Sequence[str] = ()):
        self.pos = pos
        self.expected = tuple(expected)
        detail = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at position {pos}{detail}")
        self.message = message


class UnknownIdentifierError(ParseError):
    pass


class ArityError(ParseError):
    pass


class DomainError(ExpressionError):
    """Raised when evaluation leaves the domain of log/sqrt/acos/pow/division."""

    def __init__(self, message: str, subtree: "Expression"):
        self.subtree = subtree
        super().__init__(f"{message} in subexpression {to_text(subtree)}")


# -- tree ---------------------------------------------------------------------

class Expression:
    """Base class of expression nodes.  Nodes are immutable and hashable."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __pow__(self, other):
        return power(self, _lift(other))

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_text(self)

    def children(self) -> tuple["Expression", ...]:
        return ()


@dataclass(frozen=True)
class Const(Expression):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Var(Expression):
    name: str


@dataclass(frozen=True)
class Unary(Expression):
    op: str  # "neg" or a function name
    arg: Expression

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class Binary(Expression):
    op: str  # one of + - * / ^
    left: Expression
    right: Expression

    def children(self):
        return (self.left, self.right)


ZERO = Const(0.0)
ONE = Const(1.0)


def _lift(x) -> Expression:
    if isinstance(x, Expression):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Const(float(x))
    raise TypeError(f"cannot use {type(x).__name__} in an expression")


def const(value: float) -> Const:
    return Const(value)


def var(name: str) -> Var:
    return Var(name)


def _postorder(roots: Iterable[Expression]) -> list[Expression]:
    """Unique nodes (by identity) of the DAG, children before parents."""
    seen: set[int] = set()
    out: list[Expression] = []
    for root in roots:
        if id(root) in seen:
            continue
        stack: list[tuple[Expression, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                out.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for child in reversed(node.children()):
                if id(child) not in seen:
                    stack.append((child, False))
    return out


def variables(e: Expression) -> set[str]:
    return {n.name for n in _postorder([e]) if isinstance(n, Var)}


# -- scalar kernels shared by folding and evaluation --------------------------

def _ipow(a, k: int):
    """a**k for integer k by binary exponentiation (negative bases allowed)."""
    if k == 0:
        return np.ones_like(a) if isinstance(a, np.ndarray) else 1.0
    if k < 0:
        return 1.0 / _ipow(a, -k)
    result = None
    base = a
    while k:
        if k & 1:
            result = base if result is None else result * base
        k >>= 1
        if k:
            base = base * base
    return result


def _int_exponent(e: Expression) -> int | None:
    if isinstance(e, Const) and e.value.is_integer() and abs(e.value) <= 2**31:
        return int(e.value)
    return None


_NP_FUNC = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "acos": np.arccos, "atan": np.arctan,
}


def _fold_unary(op: str, v: float) -> float | None:
    if op == "neg":
        return -v
    if op == "log" and v <= 0 or op == "sqrt" and v < 0 or op == "acos" and abs(v) > 1:
        return None
    with np.errstate(all="ignore"):
        out = float(_NP_FUNC[op](np.float64(v)))
    return out if math.isfinite(out) else None


def _fold_binary(op: str, a: float, b: float) -> float | None:
    a64, b64 = np.float64(a), np.float64(b)
    with np.errstate(all="ignore"):
        if op == "+":
            out = a64 + b64
        elif op == "-":
            out = a64 - b64
        elif op == "*":
            out = a64 * b64
        elif op == "/":
            if b == 0:
                return None
            out = a64 / b64
        else:
            k = _int_exponent(Const(b))
            if k is not None:
                if a == 0 and k < 0:
                    return None
                out = _ipow(a64, k)
            else:
                if a <= 0:
                    return None
                out = np.exp(b64 * np.log(a64))
    out = float(out)
    return out if math.isfinite(out) else None


# -- smart constructors (local rewrites only) ---------------------------------

def _is(e: Expression, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        v = _fold_binary("+", a.value, b.value)
        if v is not None:
            return Const(v)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return Binary("+", a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        v = _fold_binary("-", a.value, b.value)
        if v is not None:
            return Const(v)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return Binary("-", a, b)


def mul(a: Expression, b: Expression) -> Expression:
    if isinstance(b, Const) and not isinstance(a, Const):
        a, b = b, a
    if isinstance(a, Const):
        if isinstance(b, Const):
            v = _fold_binary("*", a.value, b.value)
            if v is not None:
                return Const(v)
        if a.value == 0.0:
            return ZERO
        if a.value == 1.0:
            return b
        if a.value == -1.0:
            return neg(b)
        if isinstance(b, Binary) and b.op == "*" and isinstance(b.left, Const):
            v = _fold_binary("*", a.value, b.left.value)
            if v is not None:
                return mul(Const(v), b.right)
    return Binary("*", a, b)


def div(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        v = _fold_binary("/", a.value, b.value)
        if v is not None:
            return Const(v)
    if _is(b, 1.0):
        return a
    if _is(a, 0.0) and not _is(b, 0.0):
        return ZERO
    return Binary("/", a, b)


def power(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        v = _fold_binary("^", a.value, b.value)
        if v is not None:
            return Const(v)
    if _is(b, 0.0):
        return ONE
    if _is(b, 1.0):
        return a
    if _is(a, 1.0):
        return ONE
    return Binary("^", a, b)


def neg(a: Expression) -> Expression:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def func(name: str, a: Expression) -> Expression:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    if isinstance(a, Const):
        v = _fold_unary(name, a.value)
        if v is not None:
            return Const(v)
    return Unary(name, a)


def _rebuild(node: Expression, kids: Sequence[Expression]) -> Expression:
    if isinstance(node, Unary):
        return neg(kids[0]) if node.op == "neg" else func(node.op, kids[0])
    if isinstance(node, Binary):
        return _BINARY_BUILDERS[node.op](kids[0], kids[1])
    return node


_BINARY_BUILDERS: dict[str, Callable[[Expression, Expression], Expression]] = {
    "+": add, "-": sub, "*": mul, "/": div, "^": power,
}


def _transform(roots: Sequence[Expression],
               leaf: Callable[[Expression], Expression]) -> list[Expression]:
    memo: dict[int, Expression] = {}
    for node in _postorder(roots):
        kids = node.children()
        if not kids:
            memo[id(node)] = leaf(node)
        else:
            memo[id(node)] = _rebuild(node, [memo[id(k)] for k in kids])
    return [memo[id(r)] for r in roots]


def simplify(e: Expression) -> Expression:
    """Constant folding plus the identities 0+x, x-0, 0*x, 1*x, x/1, x^0, x^1."""
    return _transform([e], lambda n: n)[0]


def substitute(e: Expression, mapping: Mapping[str, Expression]) -> Expression:
    """Replace variables by expressions (simultaneously)."""
    return _transform(
        [e], lambda n: mapping.get(n.name, n) if isinstance(n, Var) else n)[0]


# -- differentiation ----------------------------------------------------------

def differentiate(e: Expression, v: str) -> Expression:
    """Exact partial derivative of ``e`` with respect to variable ``v``."""
    d: dict[int, Expression] = {}
    for node in _postorder([e]):
        if isinstance(node, Const):
            out = ZERO
        elif isinstance(node, Var):
            out = ONE if node.name == v else ZERO
        elif isinstance(node, Unary):
            u, du = node.arg, d[id(node.arg)]
            if _is(du, 0.0):
                out = ZERO
            elif node.op == "neg":
                out = neg(du)
            elif node.op == "sin":
                out = mul(func("cos", u), du)
            elif node.op == "cos":
                out = neg(mul(func("sin", u), du))
            elif node.op == "exp":
                out = mul(node, du)
            elif node.op == "log":
                out = div(du, u)
            elif node.op == "sqrt":
                out = div(du, mul(Const(2.0), node))
            elif node.op == "acos":
                out = neg(div(du, func("sqrt", sub(ONE, power(u, Const(2.0))))))
            elif node.op == "atan":
                out = div(du, add(ONE, power(u, Const(2.0))))
            else:  # pragma: no cover
                raise AssertionError(node.op)
        else:
            a, b = node.left, node.right
            da, db = d[id(a)], d[id(b)]
            if node.op == "+":
                out = add(da, db)
            elif node.op == "-":
                out = sub(da, db)
            elif node.op == "*":
                out = add(mul(da, b), mul(a, db))
            elif node.op == "/":
                if _is(db, 0.0):
                    out = div(da, b)
                else:
                    out = div(sub(mul(da, b), mul(a, db)), power(b, Const(2.0)))
            else:
                if isinstance(b, Const):
                    out = mul(mul(b, power(a, Const(b.value - 1.0))), da)
                else:
                    # d(a^b) = a^b (b' log a + b a'/a)
                    out = mul(node, add(mul(db, func("log", a)), div(mul(b, da), a)))
        d[id(node)] = out
    return d[id(e)]


# -- printing -----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def to_text(e: Expression) -> str:
    """Render ``e`` in the DSL; ``parse(to_text(e))`` evaluates identically."""
    text: dict[int, tuple[str, int]] = {}
    for node in _postorder([e]):
        if isinstance(node, Const):
            s = _fmt_number(abs(node.value))
            if node.value < 0 or (node.value == 0 and math.copysign(1, node.value) < 0):
                text[id(node)] = (f"(-{s})", 5)
            else:
                text[id(node)] = (s, 5)
        elif isinstance(node, Var):
            text[id(node)] = (node.name, 5)
        elif isinstance(node, Unary):
            s, p = text[id(node.arg)]
            if node.op == "neg":
                text[id(node)] = ("-" + (s if p >= 3 else f"({s})"), 3)
            else:
                text[id(node)] = (f"{node.op}({s})", 5)
        else:
            (ls, lp), (rs, rp) = text[id(node.left)], text[id(node.right)]
            p = _PREC[node.op]
            if node.op == "^":
                ls = ls if lp > 4 else f"({ls})"
                rs = rs if rp >= 3 else f"({rs})"
                text[id(node)] = (f"{ls}^{rs}", 4)
            else:
                ls = ls if lp >= p else f"({ls})"
                rs = rs if rp > p else f"({rs})"
                text[id(node)] = (f"{ls} {node.op} {rs}", p)
    return text[id(e)][0]


# -- tokenizer / parser -------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str  # num, ident, op, end
    text: str
    pos: int


_SYMBOLS = ("<=", ">=", "<", ">", "&", "+", "-", "*", "/", "^", "(", ")", ",")


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == ".":
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    while k < n and text[k].isdigit():
                        k += 1
                    j = k
                else:
                    raise ParseError("malformed exponent in number", j, ("digit",))
            tokens.append(_Token("num", text[i:j], i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("ident", text[i:j], i))
            i = j
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(_Token("op", sym, i))
                i += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, names: Iterable[str],
                 lets: Mapping[str, Expression] | None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.names = set(names)
        self.lets = dict(lets or {})

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def accept(self, sym: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == sym:
            self.i += 1
            return True
        return False

    def expect(self, sym: str):
        if not self.accept(sym):
            raise ParseError(f"unexpected {self._describe()}", self.tok.pos, (repr(sym),))

    def _describe(self) -> str:
        t = self.tok
        return "end of input" if t.kind == "end" else f"token {t.text!r}"

    def expr(self) -> Expression:
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.take().text
            right = self.term()
            left = Binary(op, left, right)
        return left

    def term(self) -> Expression:
        left = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.take().text
            right = self.factor()
            left = Binary(op, left, right)
        return left

    def factor(self) -> Expression:
        if self.accept("-"):
            return Unary("neg", self.factor())
        base = self.atom()
        if self.accept("^"):
            return Binary("^", base, self.factor())
        return base

    def atom(self) -> Expression:
        t = self.tok
        if t.kind == "num":
            self.take()
            return Const(float(t.text))
        if t.kind == "ident":
            self.take()
            if t.text in FUNCTIONS:
                if not self.accept("("):
                    raise ArityError(f"function {t.text} takes 1 argument, got 0",
                                     self.tok.pos, ("'('",))
                if self.tok.kind == "op" and self.tok.text == ")":
                    raise ArityError(f"function {t.text} takes 1 argument, got 0",
                                     self.tok.pos, ("expression",))
                arg = self.expr()
                if self.tok.kind == "op" and self.tok.text == ",":
                    count = 1
                    while self.accept(","):
                        self.expr()
                        count += 1
                    raise ArityError(f"function {t.text} takes 1 argument, got {count}",
                                     t.pos)
                self.expect(")")
                return Unary(t.text, arg)
            if t.text in self.lets:
                return self.lets[t.text]
            if t.text in self.names:
                return Var(t.text)
            raise UnknownIdentifierError(f"unknown identifier {t.text!r}", t.pos)
        if self.accept("("):
            inner = self.expr()
            self.expect(")")
            return inner
        raise ParseError(f"unexpected {self._describe()}", t.pos,
                         ("number", "identifier", "'('", "'-'"))

    def finish(self):
        if self.tok.kind != "end":
            raise ParseError(f"unexpected {self._describe()}", self.tok.pos,
                             ("operator", "end of input"))


def parse(text: str, vars: Iterable[str],
          lets: Mapping[str, Expression] | None = None) -> Expression:
    """Parse ``text`` into an expression tree over ``vars``.

    ``lets`` maps extra names to already-built expressions, which are spliced
    in (shared, not copied).
    """
    p = _Parser(text, vars, lets)
    e = p.expr()
    p.finish()
    return e


@dataclass(frozen=True)
class Predicate:
    """Conjunction of comparisons ``lhs op rhs``; an empty predicate is true."""

    clauses: tuple[tuple[Expression, str, Expression], ...] = ()
    text: str = field(default="", compare=False)

    def evaluate_many(self, env: Mapping[str, np.ndarray]) -> np.ndarray:
        size = np.broadcast(*[np.asarray(v) for v in env.values()]).shape if env else ()
        mask = np.ones(size, dtype=bool)
        if not self.clauses:
            return mask
        values = evaluate_many([e for c in self.clauses for e in (c[0], c[2])],
                               env, strict=False)
        with np.errstate(invalid="ignore"):
            for k, (_, op, _) in enumerate(self.clauses):
                lhs, rhs = values[2 * k], values[2 * k + 1]
                mask &= _COMPARE[op](lhs, rhs)
        return mask

    def __call__(self, point: Mapping[str, float]) -> bool:
        env = {k: np.asarray([float(v)]) for k, v in point.items()}
        return bool(self.evaluate_many(env)[0])

    def intersect(self, other: "Predicate") -> "Predicate":
        text = " & ".join(t for t in (self.text, other.text) if t)
        return Predicate(self.clauses + other.clauses, text)


_COMPARE = {"<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal}


def parse_predicate(text: str, vars: Iterable[str],
                    lets: Mapping[str, Expression] | None = None) -> Predicate:
    """Parse ``a < b & c >= d ...``.  Blank text gives the always-true predicate."""
    if not text.strip():
        return Predicate((), "")
    p = _Parser(text, vars, lets)
    clauses = []
    while True:
        lhs = p.expr()
        t = p.tok
        if not (t.kind == "op" and t.text in _COMPARE):
            raise ParseError(f"unexpected {p._describe()}", t.pos,
                             ("'<'", "'<='", "'>'", "'>='"))
        p.take()
        rhs = p.expr()
        clauses.append((lhs, t.text, rhs))
        if not p.accept("&"):
            break
    p.finish()
    return Predicate(tuple(clauses), text.strip())


# -- evaluation ---------------------------------------------------------------

def _domain_fail(node: Expression, message: str):
    raise DomainError(message, node)


class _Compiled:
    """Generated numpy code evaluating several expressions with shared nodes."""

    def __init__(self, roots: Sequence[Expression], strict: bool):
        nodes = _postorder(roots)
        lines = ["def _eval(env):"]
        names: dict[int, str] = {}
        for k, node in enumerate(nodes):
            t = f"t{k}"
            names[id(node)] = t
            if isinstance(node, Const):
                lines.append(f"    {t} = {node.value!r}")
            elif isinstance(node, Var):
                lines.append(f"    {t} = env[{node.name!r}]")
            elif isinstance(node, Unary):
                a = names[id(node.arg)]
                if node.op == "neg":
                    lines.append(f"    {t} = -{a}")
                    continue
                if strict and node.op == "log":
                    lines.append(f"    if not _np.all({a} > 0): _fail(_nodes[{k}], "
                                 "'log of nonpositive value')")
                elif strict and node.op == "sqrt":
                    lines.append(f"    if not _np.all({a} >= 0): _fail(_nodes[{k}], "
                                 "'sqrt of negative value')")
                elif strict and node.op == "acos":
                    lines.append(f"    if not _np.all(_np.abs({a}) <= 1): _fail(_nodes[{k}], "
                                 "'acos argument outside [-1, 1]')")
                lines.append(f"    {t} = _f_{node.op}({a})")
            else:
                a, b = names[id(node.left)], names[id(node.right)]
                if node.op in "+-*":
                    lines.append(f"    {t} = {a} {node.op} {b}")
                elif node.op == "/":
                    if strict:
                        lines.append(f"    if not _np.all({b} != 0): _fail(_nodes[{k}], "
                                     "'division by zero')")
                    lines.append(f"    {t} = {a} / {b}")
                else:
                    kexp = _int_exponent(node.right)
                    if kexp is not None:
                        if strict and kexp < 0:
                            lines.append(f"    if not _np.all({a} != 0): _fail(_nodes[{k}], "
                                         "'zero to a negative power')")
                        lines.append(f"    {t} = _ipow({a}, {kexp})")
                    else:
                        if strict:
                            lines.append(f"    if not _np.all({a} > 0): _fail(_nodes[{k}], "
                                         "'non-integer power of nonpositive base')")
                        lines.append(f"    {t} = _f_exp({b} * _f_log({a}))")
        outs = ", ".join(names[id(r)] for r in roots)
        lines.append(f"    return ({outs},)")
        scope = {"_np": np, "_ipow": _ipow, "_fail": _domain_fail, "_nodes": nodes}
        scope.update({f"_f_{k}": f for k, f in _NP_FUNC.items()})
        exec(compile("\n".join(lines), "<equipart-expr>", "exec"), scope)
        self._fn = scope["_eval"]
        self.strict = strict
        self.size = len(nodes)

    def __call__(self, env: Mapping[str, np.ndarray]) -> tuple:
        # strict mode checks domains explicitly; warnings would only be noise
        with np.errstate(all="ignore"):
            return self._fn(env)


def compile_exprs(exprs: Sequence[Expression], strict: bool = True) -> Callable:
    """Compile expressions to one function ``env -> tuple of values``.

    ``env`` maps variable names to floats or equally shaped arrays.  With
    ``strict`` a domain violation anywhere raises :class:`DomainError`;
    otherwise NaN/inf propagate.
    """
    return _Compiled(list(exprs), strict)


_CACHE_ATTR = "_compiled_cache"


def _compiled_single(e: Expression, strict: bool) -> _Compiled:
    cache = e.__dict__.get(_CACHE_ATTR)
    if cache is None:
        cache = {}
        object.__setattr__(e, _CACHE_ATTR, cache)
    fn = cache.get(strict)
    if fn is None:
        fn = cache[strict] = _Compiled([e], strict)
    return fn


def evaluate_many(exprs, env: Mapping[str, np.ndarray], strict: bool = True):
    """Evaluate one expression (or a list of them) on arrays of coordinates."""
    env = {k: np.asarray(v, dtype=float) for k, v in env.items()}
    if isinstance(exprs, Expression):
        out = _compiled_single(exprs, strict)(env)[0]
        return _broadcast_like(out, env)
    out = compile_exprs(exprs, strict)(env)
    return [_broadcast_like(o, env) for o in out]


def _broadcast_like(value, env: Mapping[str, np.ndarray]) -> np.ndarray:
    shape = np.broadcast(*env.values()).shape if env else ()
    value = np.asarray(value, dtype=float)
    if value.shape != shape:
        value = np.broadcast_to(value, shape).copy()
    return value


def evaluate(e: Expression, point: Mapping[str, float]) -> float:
    """Evaluate at a single point given as a name -> value mapping."""
    missing = variables(e) - set(point)
    if missing:
        raise ExpressionError(f"point does not bind {sorted(missing)}")
    env = {k: np.float64(v) for k, v in point.items()}
    return float(_compiled_single(e, True)(env)[0])


def iter_nodes(e: Expression) -> Iterator[Expression]:
    yield from _postorder([e])
