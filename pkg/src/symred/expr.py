"""Scalar expressions over chart coordinates.

Nodes are hash-consed: two structurally equal expressions are the same Python
object.  Equality and hashing are therefore identity-based and O(1), which
keeps derivative memoization and common-subexpression sharing cheap.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | base ('^' INT)?
    base   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
"""
from __future__ import annotations

import math
import re
import threading
import weakref
from functools import lru_cache

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")

_IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")


class ExprError(Exception):
    pass


class ParseError(ExprError):
    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(expected))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownFunctionError(ParseError):
    pass


class EvaluationError(ExprError):
    pass


class UnboundVariableError(EvaluationError):
    pass


class DomainError(EvaluationError):
    pass


# ---------------------------------------------------------------------------
# nodes

_TABLE = weakref.WeakValueDictionary()
_LOCK = threading.Lock()


class Expr:
    __slots__ = ("__weakref__",)
    _fields = ()

    def __new__(cls, *args):
        key = (cls,) + cls._normalize(*args)
        with _LOCK:
            node = _TABLE.get(key)
            if node is None:
                node = object.__new__(cls)
                for name, value in zip(cls._fields, key[1:]):
                    object.__setattr__(node, name, value)
                _TABLE[key] = node
        return node

    @staticmethod
    def _normalize(*args):
        return args

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def __reduce__(self):
        return (type(self), tuple(getattr(self, f) for f in self._fields))

    def __repr__(self):
        args = ", ".join(repr(getattr(self, f)) for f in self._fields)
        return f"{type(self).__name__}({args})"

    def __str__(self):
        return serialize(self)

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        return power(self, n)


class Const(Expr):
    __slots__ = ("value",)
    _fields = ("value",)
    __match_args__ = ("value",)

    @staticmethod
    def _normalize(value):
        v = float(value)
        if not math.isfinite(v):
            raise ValueError(f"constant must be finite, got {value!r}")
        return (v + 0.0,)  # folds -0.0 into 0.0


class Var(Expr):
    __slots__ = ("name",)
    _fields = ("name",)
    __match_args__ = ("name",)

    @staticmethod
    def _normalize(name):
        if not isinstance(name, str) or not _IDENT_RE.match(name):
            raise ValueError(f"invalid identifier {name!r}")
        if name in FUNCTIONS:
            raise ValueError(f"{name!r} is reserved for a function")
        return (name,)


class Neg(Expr):
    __slots__ = ("arg",)
    _fields = ("arg",)
    __match_args__ = ("arg",)


class _Binary(Expr):
    __slots__ = ("left", "right")
    _fields = ("left", "right")
    __match_args__ = ("left", "right")


class Add(_Binary):
    __slots__ = ()


class Sub(_Binary):
    __slots__ = ()


class Mul(_Binary):
    __slots__ = ()


class Div(_Binary):
    __slots__ = ()


class Pow(Expr):
    __slots__ = ("base", "exponent")
    _fields = ("base", "exponent")
    __match_args__ = ("base", "exponent")

    @staticmethod
    def _normalize(base, exponent):
        if isinstance(exponent, bool) or int(exponent) != exponent or exponent < 0:
            raise ValueError(f"exponent must be a non-negative integer, got {exponent!r}")
        return (base, int(exponent))


class Call(Expr):
    __slots__ = ("func", "arg")
    _fields = ("func", "arg")
    __match_args__ = ("func", "arg")

    @staticmethod
    def _normalize(func, arg):
        if func not in FUNCTIONS:
            raise ValueError(f"unknown function {func!r}")
        return (func, arg)


ZERO = Const(0.0)
ONE = Const(1.0)

_keep_alive = (ZERO, ONE, Const(-1.0), Const(2.0), Const(0.5))


def as_expr(value):
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    return Const(value)


def is_zero(e):
    return e is ZERO


def is_const(e):
    return type(e) is Const


def children(e):
    t = type(e)
    if t is Neg or t is Call:
        return (e.arg,)
    if t is Pow:
        return (e.base,)
    if issubclass(t, _Binary):
        return (e.left, e.right)
    return ()


# ---------------------------------------------------------------------------
# folding constructors

def neg(a):
    if type(a) is Const:
        return Const(-a.value)
    if type(a) is Neg:
        return a.arg
    return Neg(a)


def add(a, b):
    if type(a) is Const and type(b) is Const:
        return Const(a.value + b.value)
    if a is ZERO:
        return b
    if b is ZERO:
        return a
    if type(b) is Neg:
        return sub(a, b.arg)
    return Add(a, b)


def sub(a, b):
    if type(a) is Const and type(b) is Const:
        return Const(a.value - b.value)
    if b is ZERO:
        return a
    if a is b:
        return ZERO
    if a is ZERO:
        return neg(b)
    if type(b) is Neg:
        return add(a, b.arg)
    return Sub(a, b)


def mul(a, b):
    ta, tb = type(a), type(b)
    if ta is Const and tb is Const:
        return Const(a.value * b.value)
    if a is ZERO or b is ZERO:
        return ZERO
    if a is ONE:
        return b
    if b is ONE:
        return a
    if tb is Const and ta is not Const:
        a, b = b, a
        ta, tb = tb, ta
    if ta is Const:
        if a.value == -1.0:
            return neg(b)
        if tb is Mul and type(b.left) is Const:
            return mul(Const(a.value * b.left.value), b.right)
        if tb is Neg:
            return mul(Const(-a.value), b.arg)
    if ta is Neg and tb is Neg:
        return mul(a.arg, b.arg)
    if ta is Neg:
        return neg(mul(a.arg, b))
    if tb is Neg:
        return neg(mul(a, b.arg))
    return Mul(a, b)


def div(a, b):
    if b is ONE:
        return a
    if a is ZERO and b is not ZERO:
        return ZERO
    if type(a) is Const and type(b) is Const and b.value != 0.0:
        return Const(a.value / b.value)
    if type(b) is Const and b.value == -1.0:
        return neg(a)
    if type(a) is Neg:
        return neg(div(a.arg, b))
    if type(b) is Neg:
        return neg(div(a, b.arg))
    return Div(a, b)


def power(a, n):
    n = int(n)
    if n < 0:
        return div(ONE, power(a, -n))
    if n == 0:
        return ONE
    if n == 1:
        return a
    if type(a) is Const:
        try:
            return Const(a.value ** n)
        except (OverflowError, ValueError):
            return Pow(a, n)
    if type(a) is Pow:
        return power(a.base, a.exponent * n)
    return Pow(a, n)


_FOLD = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
}


def call(func, a):
    if type(a) is Const:
        try:
            return Const(_FOLD[func](a.value))
        except (ValueError, OverflowError):
            pass
    return Call(func, a)


def sin(a):
    return call("sin", as_expr(a))


def cos(a):
    return call("cos", as_expr(a))


def exp(a):
    return call("exp", as_expr(a))


def log(a):
    return call("log", as_expr(a))


def sqrt(a):
    return call("sqrt", as_expr(a))


def sum_exprs(terms):
    """Left-folded sum, dropping zeros; the empty sum is 0."""
    total = ZERO
    for t in terms:
        total = add(total, t)
    return total


# ---------------------------------------------------------------------------
# simplification, substitution, free variables

def simplify_basic(e):
    """Constant folding plus the neutral/annihilator identities.

    Only local rewrites: x+0, x-0, 0-x, x*1, x*0, 0/x, x/1, x^1, x^0,
    double negation and folding of operations on constants.
    """
    memo = {}

    def go(node):
        hit = memo.get(node)
        if hit is not None:
            return hit
        t = type(node)
        if t is Const or t is Var:
            out = node
        elif t is Neg:
            out = neg(go(node.arg))
        elif t is Add:
            out = add(go(node.left), go(node.right))
        elif t is Sub:
            out = sub(go(node.left), go(node.right))
        elif t is Mul:
            out = mul(go(node.left), go(node.right))
        elif t is Div:
            out = div(go(node.left), go(node.right))
        elif t is Pow:
            out = power(go(node.base), node.exponent)
        else:
            out = call(node.func, go(node.arg))
        memo[node] = out
        return out

    return go(e)


def substitute(e, mapping):
    """Simultaneously replace variables by expressions."""
    mapping = {k: as_expr(v) for k, v in mapping.items()}
    if not mapping:
        return e
    memo = {}

    def go(node):
        hit = memo.get(node)
        if hit is not None:
            return hit
        t = type(node)
        if t is Const:
            out = node
        elif t is Var:
            out = mapping.get(node.name, node)
        elif t is Neg:
            out = neg(go(node.arg))
        elif t is Add:
            out = add(go(node.left), go(node.right))
        elif t is Sub:
            out = sub(go(node.left), go(node.right))
        elif t is Mul:
            out = mul(go(node.left), go(node.right))
        elif t is Div:
            out = div(go(node.left), go(node.right))
        elif t is Pow:
            out = power(go(node.base), node.exponent)
        else:
            out = call(node.func, go(node.arg))
        memo[node] = out
        return out

    return go(e)


@lru_cache(maxsize=1 << 16)
def free_vars(e):
    if type(e) is Var:
        return frozenset((e.name,))
    out = frozenset()
    for c in children(e):
        out = out | free_vars(c)
    return out


def depends_on(e, name):
    return name in free_vars(e)


# ---------------------------------------------------------------------------
# differentiation

@lru_cache(maxsize=1 << 17)
def differentiate(e, var):
    """Partial derivative of ``e`` with respect to the coordinate ``var``."""
    if var not in free_vars(e):
        return ZERO
    t = type(e)
    if t is Var:
        return ONE
    if t is Neg:
        return neg(differentiate(e.arg, var))
    if t is Add:
        return add(differentiate(e.left, var), differentiate(e.right, var))
    if t is Sub:
        return sub(differentiate(e.left, var), differentiate(e.right, var))
    if t is Mul:
        a, b = e.left, e.right
        return add(mul(differentiate(a, var), b), mul(a, differentiate(b, var)))
    if t is Div:
        a, b = e.left, e.right
        da, db = differentiate(a, var), differentiate(b, var)
        return sub(div(da, b), div(mul(a, db), power(b, 2)))
    if t is Pow:
        b, n = e.base, e.exponent
        return mul(mul(Const(n), power(b, n - 1)), differentiate(b, var))
    u = e.arg
    du = differentiate(u, var)
    f = e.func
    if f == "sin":
        return mul(call("cos", u), du)
    if f == "cos":
        return neg(mul(call("sin", u), du))
    if f == "exp":
        return mul(e, du)
    if f == "log":
        return div(du, u)
    return div(du, mul(Const(2.0), e))  # sqrt


def gradient(e, names):
    return [differentiate(e, n) for n in names]


# ---------------------------------------------------------------------------
# serialization

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}
_OPS = {Add: " + ", Sub: " - ", Mul: "*", Div: "/"}


def _format_number(v):
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _prec(e):
    t = type(e)
    if t is Const:
        return 3 if e.value < 0 else 5
    return _PREC.get(t, 5)


def serialize(e):
    """Text form that parses back to the same tree."""

    def wrap(node, min_prec):
        s = go(node)
        return f"({s})" if _prec(node) < min_prec else s

    def go(node):
        t = type(node)
        if t is Const:
            return _format_number(node.value)
        if t is Var:
            return node.name
        if t is Call:
            return f"{node.func}({go(node.arg)})"
        if t is Neg:
            if type(node.arg) is Const and node.arg.value >= 0:
                return f"-({go(node.arg)})"
            return "-" + wrap(node.arg, 3)
        if t is Pow:
            return f"{wrap(node.base, 5)}^{node.exponent}"
        p = _PREC[t]
        return wrap(node.left, p) + _OPS[t] + wrap(node.right, p + 1)

    return go(e)


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    n = len(src)
    while True:
        while pos < n and src[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN_RE.match(src, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {src[pos]!r}", _byte_offset(src, pos))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


def _byte_offset(src, pos):
    return len(src[:pos].encode("utf-8"))


_START = {"NUMBER", "IDENT", "'('", "'-'"}


class _Parser:
    def __init__(self, src):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self, k=0):
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def fail(self, expected, message=None):
        kind, text, pos = self.peek()
        what = "end of input" if kind == "end" else repr(text)
        raise ParseError(message or f"unexpected {what}", _byte_offset(self.src, pos), expected)

    def is_op(self, text, k=0):
        kind, tok, _ = self.peek(k)
        return kind == "op" and tok == text

    def expr(self):
        node = self.term()
        while self.is_op("+") or self.is_op("-"):
            op = self.peek()[1]
            self.i += 1
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.is_op("*") or self.is_op("/"):
            op = self.peek()[1]
            self.i += 1
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor(self):
        if self.is_op("-"):
            self.i += 1
            # a bare literal after unary minus is a negative constant
            if self.peek()[0] == "num" and not self.is_op("^", 1):
                value = float(self.peek()[1])
                self.i += 1
                return Const(-value)
            return Neg(self.factor())
        node = self.base()
        if self.is_op("^"):
            self.i += 1
            kind, text, _ = self.peek()
            if kind != "num" or not text.isdigit():
                self.fail({"INT"}, "exponent must be an integer literal")
            self.i += 1
            node = Pow(node, int(text))
        return node

    def base(self):
        kind, text, pos = self.peek()
        if kind == "num":
            self.i += 1
            return Const(float(text))
        if kind == "ident":
            self.i += 1
            if self.is_op("("):
                if text not in FUNCTIONS:
                    raise UnknownFunctionError(
                        f"unknown function {text!r}", _byte_offset(self.src, pos), FUNCTIONS
                    )
                self.i += 1
                arg = self.expr()
                if not self.is_op(")"):
                    self.fail({"')'", "'+'", "'-'", "'*'", "'/'", "'^'"})
                self.i += 1
                return Call(text, arg)
            if text in FUNCTIONS:
                self.fail({"'('"}, f"function {text!r} needs an argument")
            return Var(text)
        if kind == "op" and text == "(":
            self.i += 1
            node = self.expr()
            if not self.is_op(")"):
                self.fail({"')'", "'+'", "'-'", "'*'", "'/'", "'^'"})
            self.i += 1
            return node
        self.fail(_START)


def parse(src):
    """Parse text into an expression tree (no simplification applied)."""
    p = _Parser(src)
    node = p.expr()
    if p.peek()[0] != "end":
        p.fail({"'+'", "'-'", "'*'", "'/'", "'^'", "end of input"})
    return node


# ---------------------------------------------------------------------------
# evaluation

class Program:
    """A batch of expressions lowered to a flat instruction list.

    Shared subexpressions are evaluated once.  ``run`` works on arrays of
    points, one row per point, columns ordered as ``names``.
    """

    def __init__(self, exprs, names):
        self.names = tuple(names)
        index = {n: i for i, n in enumerate(self.names)}
        slot = {}
        code = []
        for root in exprs:
            stack = [(root, False)]
            while stack:
                node, ready = stack.pop()
                if node in slot:
                    continue
                kids = children(node)
                if not ready:
                    stack.append((node, True))
                    stack.extend((c, False) for c in kids if c not in slot)
                    continue
                t = type(node)
                if t is Var:
                    if node.name not in index:
                        raise UnboundVariableError(f"unbound variable {node.name!r}")
                    ins = ("var", index[node.name])
                elif t is Const:
                    ins = ("const", node.value)
                elif t is Pow:
                    ins = ("pow", slot[node.base], node.exponent)
                elif t is Call:
                    ins = (node.func, slot[node.arg])
                elif t is Neg:
                    ins = ("neg", slot[node.arg])
                else:
                    ins = (t.__name__.lower(), slot[node.left], slot[node.right])
                slot[node] = len(code)
                code.append(ins)
        self.code = code
        self.outputs = [slot[e] for e in exprs]

    def run(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        n = pts.shape[0]
        vals = [None] * len(self.code)
        try:
            with np.errstate(divide="raise", invalid="raise", over="ignore"):
                for k, ins in enumerate(self.code):
                    op = ins[0]
                    if op == "var":
                        v = pts[:, ins[1]]
                    elif op == "const":
                        v = np.float64(ins[1])
                    elif op == "add":
                        v = vals[ins[1]] + vals[ins[2]]
                    elif op == "sub":
                        v = vals[ins[1]] - vals[ins[2]]
                    elif op == "mul":
                        v = vals[ins[1]] * vals[ins[2]]
                    elif op == "div":
                        den = vals[ins[2]]
                        if np.any(den == 0.0):
                            raise DomainError("division by zero")
                        v = vals[ins[1]] / den
                    elif op == "neg":
                        v = -vals[ins[1]]
                    elif op == "pow":
                        v = vals[ins[1]] ** ins[2]
                    elif op == "sin":
                        v = np.sin(vals[ins[1]])
                    elif op == "cos":
                        v = np.cos(vals[ins[1]])
                    elif op == "exp":
                        v = np.exp(vals[ins[1]])
                    elif op == "log":
                        a = vals[ins[1]]
                        if np.any(a <= 0.0):
                            raise DomainError("log of non-positive value")
                        v = np.log(a)
                    else:
                        a = vals[ins[1]]
                        if np.any(a < 0.0):
                            raise DomainError("sqrt of negative value")
                        v = np.sqrt(a)
                    vals[k] = v
        except FloatingPointError as exc:
            raise DomainError(str(exc)) from None
        out = np.empty((n, len(self.outputs)))
        for col, s in enumerate(self.outputs):
            out[:, col] = vals[s]
        return out


@lru_cache(maxsize=4096)
def _program(exprs, names):
    return Program(exprs, names)


def compile_exprs(exprs, names):
    return _program(tuple(exprs), tuple(names))


def evaluate(e, point):
    """Evaluate at a point given as a mapping from coordinate name to value."""
    e = as_expr(e)
    missing = sorted(free_vars(e) - set(point))
    if missing:
        raise UnboundVariableError(f"unbound variable(s): {', '.join(missing)}")
    names = tuple(sorted(free_vars(e)))
    row = np.array([[float(point[n]) for n in names]]) if names else np.zeros((1, 0))
    return float(compile_exprs((e,), names).run(row)[0, 0])


def evaluate_many(exprs, names, points):
    """Evaluate a sequence of expressions at many points -> (N, len(exprs))."""
    return compile_exprs(exprs, names).run(points)


def evaluate_array(arr, names, points):
    """Evaluate an object array of expressions -> float array (N, *arr.shape)."""
    arr = np.asarray(arr, dtype=object)
    flat = [as_expr(x) for x in arr.ravel()]
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if not flat:
        return np.zeros((pts.shape[0],) + arr.shape)
    vals = evaluate_many(flat, names, pts)
    return vals.reshape((pts.shape[0],) + arr.shape)


def expr_array(shape, fill=ZERO):
    arr = np.empty(shape, dtype=object)
    arr.fill(fill)
    return arr


def freeze(arr):
    arr = np.asarray(arr, dtype=object)
    arr.flags.writeable = False
    return arr
