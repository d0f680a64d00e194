"""Symbolic expression kernel.

Everything downstream (frames, curvature, brackets, residuals) is built from
the small expression language implemented here: exact rational and floating
constants, tangent-bundle coordinates x1..xn / y1..yn, scalar parameters,
opaque unary functions with formal derivatives (f, f', f''), the unary
functions sin / cos / exp / ln / sqrt, and +, -, *, /, ^ with rational
exponents.

The design is deliberately closer to a normal-form calculator than to a full
CAS.  ``simplify`` rewrites any tree into a canonical sum of terms, where each
term is a rational (or float) coefficient times a product of atomic bases
raised to rational exponents.  Products and integer powers of sums are
expanded, structurally equal bases have their exponents combined (so f/f
cancels), and sums appearing under a negative or fractional power are kept as
atomic bases after content normalization.  Trigonometric and log identities
are out of scope on purpose; what the canonical form cannot settle is handed
to the numeric sampler behind the tri-state ``is_zero``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import EvalDomainError, ParseError, UnboundParameterError, ValidationError

__all__ = [
    "Expr", "Const", "Var", "Param", "Call", "FuncApp", "Neg", "Add", "Mul", "Div", "Pow",
    "Tri", "Context", "Point", "SampleConfig",
    "parse", "simplify", "diff", "evaluate", "is_zero", "format_expr",
    "as_expr", "const", "var", "sum_exprs", "tri_all", "sample_points",
    "compile_exprs", "opaque_assignments",
]

BUILTIN_FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")

_COORD_RE = re.compile(r"^([xy])([1-9][0-9]*)$")


class Tri(Enum):
    """Verdict of a zero test: proven zero, proven nonzero, or undecided."""

    PROVEN_ZERO = "proven_zero"
    PROVEN_NONZERO = "proven_nonzero"
    UNKNOWN = "unknown"

    def __str__(self) -> str:
        return self.value


def tri_all(verdicts: Iterable[Tri]) -> Tri:
    """Combine componentwise verdicts: any nonzero wins, else unknown taints."""
    out = Tri.PROVEN_ZERO
    for v in verdicts:
        if v is Tri.PROVEN_NONZERO:
            return Tri.PROVEN_NONZERO
        if v is Tri.UNKNOWN:
            out = Tri.UNKNOWN
    return out


# ---------------------------------------------------------------------------
# nodes


class Expr:
    """Immutable expression node. Subclasses set _key in __init__."""

    __slots__ = ("_key", "_hash")

    def _set_key(self, key: tuple) -> None:
        object.__setattr__(self, "_key", key)
        object.__setattr__(self, "_hash", hash(key))

    def __eq__(self, other) -> bool:
        return isinstance(other, Expr) and self._key == other._key

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return format_expr(self)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {format_expr(self)}>"

    def sortkey(self) -> tuple:
        raise NotImplementedError

    # operator sugar; results are raw trees, canonicalize with simplify()
    def __add__(self, other):
        return Add((self, as_expr(other)))

    def __radd__(self, other):
        return Add((as_expr(other), self))

    def __sub__(self, other):
        return Add((self, Neg(as_expr(other))))

    def __rsub__(self, other):
        return Add((as_expr(other), Neg(self)))

    def __mul__(self, other):
        return Mul((self, as_expr(other)))

    def __rmul__(self, other):
        return Mul((as_expr(other), self))

    def __truediv__(self, other):
        return Div(self, as_expr(other))

    def __rtruediv__(self, other):
        return Div(as_expr(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, r):
        if isinstance(r, int):
            r = Fraction(r)
        if not isinstance(r, Fraction):
            raise TypeError("exponent must be an int or Fraction")
        return Pow(self, r)


class Const(Expr):
    """Exact rational (Fraction) or floating literal."""

    __slots__ = ("value",)

    def __init__(self, value):
        if isinstance(value, int):
            value = Fraction(value)
        if not isinstance(value, (Fraction, float)):
            raise TypeError(f"bad constant {value!r}")
        object.__setattr__(self, "value", value)
        if isinstance(value, Fraction):
            self._set_key(("const", "q", value.numerator, value.denominator))
        else:
            self._set_key(("const", "f", repr(value)))

    def sortkey(self) -> tuple:
        tag = 0 if isinstance(self.value, Fraction) else 1
        return (0, float(self.value), tag, str(self.value))


ZERO = Const(0)
ONE = Const(1)


class Var(Expr):
    """A coordinate: axis 'x' (base) or 'y' (fiber), 1-based index."""

    __slots__ = ("axis", "index")

    def __init__(self, axis: str, index: int):
        if axis not in ("x", "y") or index < 1:
            raise ValueError(f"bad coordinate {axis}{index}")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "index", index)
        self._set_key(("var", axis, index))

    @property
    def name(self) -> str:
        return f"{self.axis}{self.index}"

    def sortkey(self) -> tuple:
        return (1, 0 if self.axis == "x" else 1, self.index)


class Param(Expr):
    """Declared scalar parameter, referenced by name."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        self._set_key(("param", name))

    def sortkey(self) -> tuple:
        return (2, self.name)


class Call(Expr):
    """Builtin unary function application."""

    __slots__ = ("fname", "arg")

    def __init__(self, fname: str, arg: Expr):
        if fname not in BUILTIN_FUNCTIONS:
            raise ValueError(f"unsupported function {fname!r}")
        object.__setattr__(self, "fname", fname)
        object.__setattr__(self, "arg", arg)
        self._set_key(("call", fname, arg._key))

    def sortkey(self) -> tuple:
        return (3, self.fname, self.arg.sortkey())


class FuncApp(Expr):
    """Opaque function application f(arg); order counts formal primes."""

    __slots__ = ("fname", "order", "arg")

    def __init__(self, fname: str, order: int, arg: Expr):
        object.__setattr__(self, "fname", fname)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "arg", arg)
        self._set_key(("funcapp", fname, order, arg._key))

    def sortkey(self) -> tuple:
        return (4, self.fname, self.order, self.arg.sortkey())


class Pow(Expr):
    """base raised to an exact rational exponent."""

    __slots__ = ("base", "exponent")

    def __init__(self, base: Expr, exponent):
        if isinstance(exponent, int):
            exponent = Fraction(exponent)
        if not isinstance(exponent, Fraction):
            raise TypeError("exponent must be an int or Fraction")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exponent", exponent)
        self._set_key(("pow", base._key, exponent.numerator, exponent.denominator))

    def sortkey(self) -> tuple:
        return (5, self.base.sortkey(), float(self.exponent))


class Neg(Expr):
    __slots__ = ("child",)

    def __init__(self, child: Expr):
        object.__setattr__(self, "child", child)
        self._set_key(("neg", child._key))

    def sortkey(self) -> tuple:
        return (6, self.child.sortkey())


class Add(Expr):
    """n-ary sum; canonical forms keep terms sorted and flattened."""

    __slots__ = ("children",)

    def __init__(self, children: Sequence[Expr]):
        children = tuple(children)
        if len(children) < 2:
            raise ValueError("Add needs at least two children")
        object.__setattr__(self, "children", children)
        self._set_key(("add",) + tuple(c._key for c in children))

    def sortkey(self) -> tuple:
        return (7, tuple(c.sortkey() for c in self.children))


class Mul(Expr):
    """n-ary product; canonical forms put an optional constant first."""

    __slots__ = ("children",)

    def __init__(self, children: Sequence[Expr]):
        children = tuple(children)
        if len(children) < 2:
            raise ValueError("Mul needs at least two children")
        object.__setattr__(self, "children", children)
        self._set_key(("mul",) + tuple(c._key for c in children))

    def sortkey(self) -> tuple:
        return (8, tuple(c.sortkey() for c in self.children))


class Div(Expr):
    __slots__ = ("num", "den")

    def __init__(self, num: Expr, den: Expr):
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        self._set_key(("div", num._key, den._key))

    def sortkey(self) -> tuple:
        return (9, self.num.sortkey(), self.den.sortkey())


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, Fraction, float)):
        return Const(v)
    raise TypeError(f"cannot coerce {v!r} to Expr")


def sum_exprs(parts) -> Expr:
    """Sum that tolerates zero or one summand."""
    parts = tuple(parts)
    if not parts:
        return ZERO
    if len(parts) == 1:
        return parts[0]
    return Add(parts)


def const(v) -> Const:
    return Const(v)


def var(axis: str, index: int) -> Var:
    return Var(axis, index)


# ---------------------------------------------------------------------------
# declaration context and evaluation points


@dataclass
class FunctionDecl:
    """An opaque unary function. body, when given, is an Expr in x1 alone."""

    name: str
    body: Expr | None = None


@dataclass
class Context:
    """Declared dimension, scalar parameters, opaque functions.

    Scalar parameters may carry a bound numeric value (used by samplers and
    as an evaluation fallback).  Opaque functions may carry a concrete body,
    written in terms of the formal argument x1; without one they stay formal
    and can only be evaluated by the sampling machinery.
    """

    dim: int
    params: dict[str, float | None] = field(default_factory=dict)
    funcs: dict[str, FunctionDecl] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError(f"dimension must be positive, got {self.dim}")
        for name in list(self.params) + list(self.funcs):
            if _COORD_RE.match(name) or name in BUILTIN_FUNCTIONS:
                raise ValidationError(f"parameter name {name!r} is reserved")
        self._deriv_cache: dict[tuple[str, int], Expr] = {}

    def declare_function(self, name: str, body: Expr | None = None) -> None:
        self.funcs[name] = FunctionDecl(name, body)

    def func_derivative(self, name: str, order: int) -> Expr | None:
        """order-th derivative of a bound function body, or None if unbound."""
        decl = self.funcs.get(name)
        if decl is None or decl.body is None:
            return None
        key = (name, order)
        if key not in self._deriv_cache:
            e = decl.body
            for _ in range(order):
                e = diff(e, Var("x", 1))
            self._deriv_cache[key] = e
        return self._deriv_cache[key]

    def coordinates(self) -> list[Var]:
        n = self.dim
        return [Var("x", i) for i in range(1, n + 1)] + [Var("y", a) for a in range(1, n + 1)]


@dataclass
class Point:
    """Numeric state: base coords, fiber coords, scalar parameter values."""

    x: tuple[float, ...]
    y: tuple[float, ...]
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.x = tuple(float(v) for v in self.x)
        self.y = tuple(float(v) for v in self.y)
        if len(self.x) != len(self.y):
            raise ValidationError("x and y must have the same length")

    @property
    def n(self) -> int:
        return len(self.x)

    def as_array(self) -> np.ndarray:
        return np.array(self.x + self.y, dtype=float)

    @classmethod
    def from_array(cls, z: np.ndarray, params: dict[str, float] | None = None) -> "Point":
        z = np.asarray(z, dtype=float)
        n = z.size // 2
        return cls(tuple(z[:n]), tuple(z[n:]), dict(params or {}))


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"(?P<num>[0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*'*)"
    r"|(?P<op>[-+*/^()])"
)


@dataclass
class _Token:
    kind: str   # num | ident | op | end
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    out: list[_Token] = []
    i = 0
    while i < len(text):
        if text[i].isspace():
            i += 1
            continue
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise ParseError(f"unexpected character {text[i]!r}", position=i)
        kind = m.lastgroup
        out.append(_Token(kind, m.group(), i))
        i = m.end()
    out.append(_Token("end", "", len(text)))
    return out


class _Parser:
    """Recursive-descent parser for the expression grammar.

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := base ("^" signed_rational)?
    base   := number | ident | ident "(" expr ")" | "(" expr ")" | "-" factor

    "^" binds tighter than unary minus.  The exponent is lexed with maximal
    munch, so y1^1/2 is y1^(1/2); divide by a parenthesized 2 to get the
    other reading.
    """

    def __init__(self, text: str, ctx: Context):
        self.text = text
        self.ctx = ctx
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, ahead: int = 0) -> _Token:
        j = min(self.i + ahead, len(self.toks) - 1)
        return self.toks[j]

    def next(self) -> _Token:
        t = self.toks[self.i]
        if t.kind != "end":
            self.i += 1
        return t

    def expect_op(self, op: str) -> None:
        t = self.next()
        if t.kind != "op" or t.text != op:
            raise ParseError(f"expected {op!r}, found {t.text!r}", position=t.pos)

    def parse(self) -> Expr:
        e = self.expr()
        t = self.peek()
        if t.kind != "end":
            raise ParseError(f"unexpected trailing input {t.text!r}", position=t.pos)
        return e

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.next().text
            t = self.term()
            terms.append(t if op == "+" else Neg(t))
        return terms[0] if len(terms) == 1 else Add(tuple(terms))

    def term(self) -> Expr:
        e = self.factor()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.next().text
            rhs = self.factor()
            e = Mul((e, rhs)) if op == "*" else Div(e, rhs)
        return e

    def factor(self) -> Expr:
        e = self.base()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.next()
            e = Pow(e, self.signed_rational())
        return e

    def signed_rational(self) -> Fraction:
        sign = 1
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.next()
            sign = -1
        t = self.next()
        if t.kind != "num" or not t.text.isdigit():
            raise ParseError("exponent must be an integer or rational", position=t.pos)
        num = int(t.text)
        den = 1
        if (self.peek().kind == "op" and self.peek().text == "/"
                and self.peek(1).kind == "num" and self.peek(1).text.isdigit()):
            self.next()
            den = int(self.next().text)
            if den == 0:
                raise ParseError("zero denominator in exponent", position=t.pos)
        return Fraction(sign * num, den)

    def base(self) -> Expr:
        t = self.next()
        if t.kind == "num":
            if t.text.isdigit():
                return Const(Fraction(int(t.text)))
            return Const(float(t.text))
        if t.kind == "op" and t.text == "-":
            return Neg(self.factor())
        if t.kind == "op" and t.text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        if t.kind == "ident":
            return self.ident(t)
        raise ParseError(f"unexpected token {t.text!r}", position=t.pos)

    def ident(self, t: _Token) -> Expr:
        name = t.text.rstrip("'")
        order = len(t.text) - len(name)
        m = _COORD_RE.match(name)
        if m:
            if order:
                raise ParseError(f"cannot take a prime of coordinate {name!r}", position=t.pos)
            axis, idx = m.group(1), int(m.group(2))
            if idx > self.ctx.dim:
                raise ParseError(
                    f"coordinate {name!r} out of range for dimension {self.ctx.dim}",
                    position=t.pos)
            return Var(axis, idx)
        if name in BUILTIN_FUNCTIONS:
            if order:
                raise ParseError(f"primes are not allowed on {name!r}", position=t.pos)
            self.expect_op("(")
            arg = self.expr()
            self.expect_op(")")
            return Call(name, arg)
        if name in self.ctx.funcs:
            self.expect_op("(")
            arg = self.expr()
            self.expect_op(")")
            return FuncApp(name, order, arg)
        if name in self.ctx.params:
            if order:
                raise ParseError(f"cannot take a prime of scalar parameter {name!r}", position=t.pos)
            return Param(name)
        raise ParseError(f"unknown identifier {name!r}", position=t.pos)


def parse(text: str, ctx: Context) -> Expr:
    """Parse DSL text into a raw expression tree (not yet canonical)."""
    return _Parser(text, ctx).parse()


# ---------------------------------------------------------------------------
# canonical simplification
#
# Normal form: dict mapping a monomial (sorted tuple of (base, exponent)
# pairs) to a coefficient.  Coefficients are Fractions unless a float has
# contaminated the term.  Bases are canonical Exprs: Var, Param, Call,
# FuncApp, Const (for things like 2^(1/2)), or a canonical Add/Mul/Pow kept
# atomic because expanding it is unsound or unhelpful.

_Mono = tuple  # tuple[tuple[Expr, Fraction], ...]
_NF = dict     # dict[_Mono, Fraction | float]

_EXPAND_CAP = 16


def _cmul(a, b):
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a * b
    return float(a) * float(b)


def _cadd(a, b):
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a + b
    return float(a) + float(b)


def _cinv(a):
    if isinstance(a, Fraction):
        return Fraction(a.denominator, a.numerator)
    return 1.0 / a


def _acc(nf: _NF, mono: _Mono, coeff) -> None:
    cur = nf.get(mono)
    if cur is None:
        if coeff != 0:
            nf[mono] = coeff
        return
    s = _cadd(cur, coeff)
    if s == 0:
        del nf[mono]
    else:
        nf[mono] = s


def _iroot(v: int, q: int) -> int | None:
    """Exact integer q-th root of v >= 0, or None."""
    if v < 0:
        return None
    if v in (0, 1):
        return v
    r = round(v ** (1.0 / q))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand ** q == v:
            return cand
    return None


def _frac_pow_exact(c: Fraction, r: Fraction):
    """c**r as an exact Fraction, or None when no exact value exists."""
    if r.denominator == 1:
        k = int(r)
        if k >= 0:
            return c ** k
        if c == 0:
            raise EvalDomainError("zero raised to a negative power")
        return Fraction(c.denominator, c.numerator) ** (-k)
    sign = 1
    num, den = c.numerator, c.denominator
    if num < 0:
        if r.denominator % 2 == 0:
            return None
        sign, num = -1, -num
    rn = _iroot(num, r.denominator)
    rd = _iroot(den, r.denominator)
    if rn is None or rd is None:
        return None
    root = Fraction(sign * rn, rd)
    return _frac_pow_exact(root, Fraction(r.numerator))


def _normalize_pairs(pairs: dict, coeff):
    """Fold constant bases into the coefficient, drop zero exponents, sort."""
    kept = []
    for base, exp in pairs.items():
        if exp == 0:
            continue
        if isinstance(base, Const):
            v = base.value
            if isinstance(v, Fraction):
                folded = _frac_pow_exact(v, exp)
                if folded is not None:
                    coeff = _cmul(coeff, folded)
                    continue
            else:
                if v > 0 or exp.denominator == 1:
                    coeff = _cmul(coeff, float(v) ** float(exp))
                    continue
        kept.append((base, exp))
    kept.sort(key=lambda be: be[0].sortkey())
    return tuple(kept), coeff


def _pairs_add(pairs: dict, base: Expr, exp: Fraction) -> None:
    cur = pairs.get(base)
    pairs[base] = exp if cur is None else cur + exp


def _mono_mul(m1: _Mono, m2: _Mono, c):
    merged: dict = {}
    for base, exp in m1 + m2:
        _pairs_add(merged, base, exp)
    return _normalize_pairs(merged, c)


def _nf_scale(nf: _NF, c) -> _NF:
    if c == 0:
        return {}
    return {m: _cmul(v, c) for m, v in nf.items()}


def _nf_add(a: _NF, b: _NF) -> _NF:
    out = dict(a)
    for m, c in b.items():
        _acc(out, m, c)
    return out


def _nf_mul(a: _NF, b: _NF) -> _NF:
    out: _NF = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            m, c = _mono_mul(m1, m2, _cmul(c1, c2))
            _acc(out, m, c)
    return out


def _mono_sortkey(m: _Mono) -> tuple:
    return tuple((base.sortkey(), (exp.numerator, exp.denominator)) for base, exp in m)


def _content_split(nf: _NF):
    """Split off the leading coefficient so the remaining sum leads with 1."""
    lead = min(nf, key=_mono_sortkey)
    c = nf[lead]
    return c, _nf_scale(nf, _cinv(c))


def _nf_invert(nf: _NF) -> _NF:
    if not nf:
        raise EvalDomainError("division by an expression that simplifies to zero")
    if len(nf) == 1:
        (mono, c), = nf.items()
        pairs = {base: -exp for base, exp in mono}
        m, cc = _normalize_pairs(pairs, _cinv(c))
        return {m: cc}
    c, unit = _content_split(nf)
    base = _emit(unit)
    return {((base, Fraction(-1)),): _cinv(c)}


def _nf_pow(nf: _NF, r: Fraction) -> _NF:
    if r == 0:
        return {(): Fraction(1)}
    if not nf:
        if r < 0:
            raise EvalDomainError("zero raised to a negative power")
        return {}
    if r.denominator == 1:
        k = int(r)
        if k < 0:
            return _nf_pow(_nf_invert(nf), Fraction(-k))
        if len(nf) == 1:
            (mono, c), = nf.items()
            pairs = {base: exp * k for base, exp in mono}
            cc = c ** k if isinstance(c, Fraction) else float(c) ** k
            m, cc = _normalize_pairs(pairs, cc)
            return {m: cc}
        if k <= _EXPAND_CAP:
            out = {(): Fraction(1)}
            b = nf
            e = k
            while e:
                if e & 1:
                    out = _nf_mul(out, b)
                e >>= 1
                if e:
                    b = _nf_mul(b, b)
            return out
        c, unit = _content_split(nf)
        base = _emit(unit)
        cc = c ** k if isinstance(c, Fraction) else float(c) ** k
        return {((base, Fraction(k)),): cc}
    # fractional exponent
    if len(nf) == 1:
        (mono, c), = nf.items()
        if not mono:
            m, cc = _normalize_pairs({Const(c): r}, Fraction(1))
            return {m: cc}
        if c < 0:
            # keep the sign inside an atomic base; splitting it is unsound
            base = _emit({mono: c})
            return {((base, r),): Fraction(1)}
        # a positive constant factor splits off soundly; a lone base with
        # exponent 1 (or an already-fractional exponent, which forces the
        # base nonnegative) combines; anything else stays atomic because
        # (x^2)^(1/2) is |x|, not x
        pairs: dict = {}
        if len(mono) == 1 and (mono[0][1] == 1 or mono[0][1].denominator > 1):
            _pairs_add(pairs, mono[0][0], mono[0][1] * r)
        else:
            _pairs_add(pairs, _emit({mono: Fraction(1)}), r)
        if c != 1:
            _pairs_add(pairs, Const(c), r)
        m, cc = _normalize_pairs(pairs, Fraction(1))
        return {m: cc}
    c, unit = _content_split(nf)
    mag = abs(c)
    if mag != c:
        unit = _nf_scale(unit, Fraction(-1) if isinstance(c, Fraction) else -1.0)
    base = _emit(unit)
    pairs = {}
    _pairs_add(pairs, base, r)
    if mag != 1:
        _pairs_add(pairs, Const(mag), r)
    m, cc = _normalize_pairs(pairs, Fraction(1))
    return {m: cc}


def _fold_call(fname: str, arg: Expr) -> Expr | None:
    if not isinstance(arg, Const):
        return None
    v = arg.value
    if isinstance(v, Fraction):
        table = {
            ("sin", Fraction(0)): ZERO, ("cos", Fraction(0)): ONE,
            ("exp", Fraction(0)): ONE, ("ln", Fraction(1)): ZERO,
        }
        return table.get((fname, v))
    try:
        fn = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "ln": math.log}[fname]
        return Const(fn(float(v)))
    except (ValueError, OverflowError, KeyError):
        return None


def _atom(base: Expr) -> _NF:
    return {((base, Fraction(1)),): Fraction(1)}


def _nf(e: Expr) -> _NF:
    if isinstance(e, Const):
        return {} if e.value == 0 else {(): e.value}
    if isinstance(e, (Var, Param)):
        return _atom(e)
    if isinstance(e, Neg):
        return _nf_scale(_nf(e.child), Fraction(-1))
    if isinstance(e, Add):
        out: _NF = {}
        for c in e.children:
            out = _nf_add(out, _nf(c))
        return out
    if isinstance(e, Mul):
        out = {(): Fraction(1)}
        for c in e.children:
            out = _nf_mul(out, _nf(c))
        return out
    if isinstance(e, Div):
        return _nf_mul(_nf(e.num), _nf_invert(_nf(e.den)))
    if isinstance(e, Pow):
        return _nf_pow(_nf(e.base), e.exponent)
    if isinstance(e, Call):
        if e.fname == "sqrt":
            return _nf_pow(_nf(e.arg), Fraction(1, 2))
        arg = _emit(_nf(e.arg))
        folded = _fold_call(e.fname, arg)
        if folded is not None:
            return _nf(folded)
        return _atom(Call(e.fname, arg))
    if isinstance(e, FuncApp):
        return _atom(FuncApp(e.fname, e.order, _emit(_nf(e.arg))))
    raise TypeError(f"cannot normalize {e!r}")


def _emit_term(mono: _Mono, coeff) -> Expr:
    factors = [base if exp == 1 else Pow(base, exp) for base, exp in mono]
    if not factors:
        return Const(coeff)
    if coeff == 1:
        return factors[0] if len(factors) == 1 else Mul(tuple(factors))
    return Mul((Const(coeff), *factors))


def _emit(nf: _NF) -> Expr:
    if not nf:
        return ZERO
    items = sorted(nf.items(), key=lambda mc: _mono_sortkey(mc[0]))
    terms = [_emit_term(m, c) for m, c in items]
    return terms[0] if len(terms) == 1 else Add(tuple(terms))


def simplify(e: Expr) -> Expr:
    """Rewrite into the canonical form. Idempotent and deterministic."""
    return _emit(_nf(e))


def is_zero_expr(e: Expr) -> bool:
    """Structural test: does e canonicalize to the constant 0."""
    return not _nf(e)


# ---------------------------------------------------------------------------
# differentiation


def diff(e: Expr, v: Var) -> Expr:
    """Partial derivative with respect to a coordinate, canonicalized."""
    return simplify(_diff(simplify(e), v))


def _diff(e: Expr, v: Var) -> Expr:
    if isinstance(e, Const) or isinstance(e, Param):
        return ZERO
    if isinstance(e, Var):
        return ONE if e == v else ZERO
    if isinstance(e, Neg):
        return Neg(_diff(e.child, v))
    if isinstance(e, Add):
        return Add(tuple(_diff(c, v) for c in e.children))
    if isinstance(e, Mul):
        parts = []
        for i, c in enumerate(e.children):
            rest = e.children[:i] + e.children[i + 1:]
            parts.append(Mul((_diff(c, v), *rest)) if rest else _diff(c, v))
        return Add(tuple(parts)) if len(parts) > 1 else parts[0]
    if isinstance(e, Div):
        u, w = e.num, e.den
        return Div(Add((Mul((_diff(u, v), w)), Neg(Mul((u, _diff(w, v)))))), Pow(w, Fraction(2)))
    if isinstance(e, Pow):
        r = e.exponent
        return Mul((Const(r), Pow(e.base, r - 1), _diff(e.base, v)))
    if isinstance(e, Call):
        u = e.arg
        du = _diff(u, v)
        if e.fname == "sin":
            return Mul((Call("cos", u), du))
        if e.fname == "cos":
            return Neg(Mul((Call("sin", u), du)))
        if e.fname == "exp":
            return Mul((Call("exp", u), du))
        if e.fname == "ln":
            return Div(du, u)
        if e.fname == "sqrt":
            return Mul((Const(Fraction(1, 2)), Pow(u, Fraction(-1, 2)), du))
        raise ValidationError(f"cannot differentiate through {e.fname!r}")
    if isinstance(e, FuncApp):
        return Mul((FuncApp(e.fname, e.order + 1, e.arg), _diff(e.arg, v)))
    raise TypeError(f"cannot differentiate {e!r}")


# ---------------------------------------------------------------------------
# numeric evaluation


def _resolve_param(name: str, p: Point, ctx: Context | None) -> float:
    if name in p.params:
        return float(p.params[name])
    if ctx is not None:
        bound = ctx.params.get(name)
        if bound is not None:
            return float(bound)
    raise UnboundParameterError(f"parameter {name!r} has no bound value")


def _check_finite(v: float, what: str) -> float:
    if not math.isfinite(v):
        raise EvalDomainError(f"{what} produced a non-finite value")
    return v


def evaluate(e: Expr, p: Point, ctx: Context | None = None,
             opaque: Mapping[tuple, float] | None = None) -> float:
    """Evaluate at a point in IEEE double precision.

    Domain violations raise EvalDomainError instead of returning nan or inf.
    Opaque functions need a bound body in ctx, unless `opaque` supplies
    sampled values keyed by (name, order, rounded argument).
    """
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Var):
        seq = p.x if e.axis == "x" else p.y
        if e.index > len(seq):
            raise EvalDomainError(f"coordinate {e.name} out of range for point of dimension {p.n}")
        return seq[e.index - 1]
    if isinstance(e, Param):
        return _resolve_param(e.name, p, ctx)
    if isinstance(e, Neg):
        return -evaluate(e.child, p, ctx, opaque)
    if isinstance(e, Add):
        return _check_finite(math.fsum(evaluate(c, p, ctx, opaque) for c in e.children), "sum")
    if isinstance(e, Mul):
        out = 1.0
        for c in e.children:
            out *= evaluate(c, p, ctx, opaque)
        return _check_finite(out, "product")
    if isinstance(e, Div):
        den = evaluate(e.den, p, ctx, opaque)
        if den == 0.0:
            raise EvalDomainError("division by zero")
        return _check_finite(evaluate(e.num, p, ctx, opaque) / den, "quotient")
    if isinstance(e, Pow):
        b = evaluate(e.base, p, ctx, opaque)
        r = e.exponent
        if r.denominator == 1:
            k = int(r)
            if b == 0.0 and k < 0:
                raise EvalDomainError("zero raised to a negative power")
            try:
                return _check_finite(b ** k, "power")
            except OverflowError as exc:
                raise EvalDomainError("overflow in power") from exc
        if b < 0.0:
            raise EvalDomainError("fractional power of a negative base")
        if b == 0.0 and r < 0:
            raise EvalDomainError("zero raised to a negative power")
        try:
            return _check_finite(math.pow(b, float(r)), "power")
        except (ValueError, OverflowError) as exc:
            raise EvalDomainError("domain error in power") from exc
    if isinstance(e, Call):
        a = evaluate(e.arg, p, ctx, opaque)
        try:
            if e.fname == "sin":
                return math.sin(a)
            if e.fname == "cos":
                return math.cos(a)
            if e.fname == "exp":
                return _check_finite(math.exp(a), "exp")
            if e.fname == "ln":
                if a <= 0.0:
                    raise EvalDomainError("ln of a nonpositive value")
                return math.log(a)
            if e.fname == "sqrt":
                if a < 0.0:
                    raise EvalDomainError("sqrt of a negative value")
                return math.sqrt(a)
        except OverflowError as exc:
            raise EvalDomainError(f"overflow in {e.fname}") from exc
        raise ValidationError(f"cannot evaluate {e.fname!r}")
    if isinstance(e, FuncApp):
        a = evaluate(e.arg, p, ctx, opaque)
        body = ctx.func_derivative(e.fname, e.order) if ctx is not None else None
        if body is not None:
            inner = Point((a,), (0.0,), dict(p.params))
            return evaluate(body, inner, ctx, opaque)
        if opaque is not None:
            key = (e.fname, e.order, round(a, 9))
            if key in opaque:
                return opaque[key]
        raise UnboundParameterError(f"opaque function {e.fname!r} has no bound body")
    raise TypeError(f"cannot evaluate {e!r}")


def evaluate_with_magnitude(e: Expr, p: Point, ctx: Context | None = None,
                            opaque: Mapping[tuple, float] | None = None) -> tuple[float, float]:
    """Value plus a cancellation scale (sum of |term| over top-level terms)."""
    if isinstance(e, Add):
        vals = [evaluate(c, p, ctx, opaque) for c in e.children]
        return math.fsum(vals), math.fsum(abs(v) for v in vals)
    v = evaluate(e, p, ctx, opaque)
    return v, abs(v)


# ---------------------------------------------------------------------------
# sampling and the tri-state zero test


@dataclass
class SampleConfig:
    """Controls for numeric sampling.

    box is the closed interval used for every coordinate and for unbound
    scalar parameters; coord_boxes overrides it per coordinate name.  Points
    closer than locus_guard to a declared singular locus (measured by the
    locus expression's value) are rejected and redrawn.
    """

    points: int = 32
    box: tuple[float, float] = (-2.0, 2.0)
    coord_boxes: dict[str, tuple[float, float]] = field(default_factory=dict)
    locus_guard: float = 0.5
    tol: float = 1e-9
    seed: int = 20260823
    max_tries: int = 400


def _draw_point(ctx: Context, rng: np.random.Generator, cfg: SampleConfig) -> Point:
    def draw(name: str) -> float:
        lo, hi = cfg.coord_boxes.get(name, cfg.box)
        return float(rng.uniform(lo, hi))

    n = ctx.dim
    x = tuple(draw(f"x{i}") for i in range(1, n + 1))
    y = tuple(draw(f"y{a}") for a in range(1, n + 1))
    params = {}
    for name, bound in ctx.params.items():
        params[name] = float(bound) if bound is not None else float(rng.uniform(*cfg.box))
    return Point(x, y, params)


def sample_points(ctx: Context, cfg: SampleConfig | None = None,
                  loci: Sequence[Expr] = (), count: int | None = None,
                  rng: np.random.Generator | None = None) -> list[Point]:
    """Draw points from the box, rejecting any too close to a singular locus."""
    cfg = cfg or SampleConfig()
    rng = rng or np.random.default_rng(cfg.seed)
    want = count if count is not None else cfg.points
    out: list[Point] = []
    tries = 0
    limit = max(cfg.max_tries, 10 * want)
    while len(out) < want and tries < limit:
        tries += 1
        p = _draw_point(ctx, rng, cfg)
        ok = True
        for g in loci:
            try:
                if abs(evaluate(g, p, ctx)) < cfg.locus_guard:
                    ok = False
                    break
            except EvalDomainError:
                ok = False
                break
        if ok:
            out.append(p)
    if len(out) < want:
        raise ValidationError(
            f"could not draw {want} sample points clear of the singular loci "
            f"in {limit} tries")
    return out


def _collect_funcapps(e: Expr, found: set) -> None:
    if isinstance(e, FuncApp):
        found.add(e)
        _collect_funcapps(e.arg, found)
    elif isinstance(e, (Neg,)):
        _collect_funcapps(e.child, found)
    elif isinstance(e, (Add, Mul)):
        for c in e.children:
            _collect_funcapps(c, found)
    elif isinstance(e, Div):
        _collect_funcapps(e.num, found)
        _collect_funcapps(e.den, found)
    elif isinstance(e, Pow):
        _collect_funcapps(e.base, found)
    elif isinstance(e, Call):
        _collect_funcapps(e.arg, found)


def opaque_assignments(exprs: Sequence[Expr], p: Point, ctx: Context,
                       rng: np.random.Generator,
                       cfg: "SampleConfig | None" = None) -> dict:
    """Sample values for unbound opaque-function applications at one point.

    Each distinct (name, order, argument value) gets an independent draw, so
    a verdict of nonzero means nonzero for some admissible choice of the
    formal functions.  Draws avoid a band around zero so that expressions
    like f'(x1)*x2 are not accidentally annihilated by the sample itself.
    One assignment dict covers every expression passed in, keeping the
    sampled functions consistent across a whole matrix of components.
    """
    apps: set = set()
    for e in exprs:
        _collect_funcapps(e, apps)
    out: dict = {}
    for app in sorted(apps, key=lambda a: a.sortkey()):
        if ctx.func_derivative(app.fname, app.order) is not None:
            continue
        try:
            a = evaluate(app.arg, p, ctx, out)
        except EvalDomainError:
            continue
        key = (app.fname, app.order, round(a, 9))
        if key not in out:
            mag = float(rng.uniform(0.25, 2.0))
            out[key] = mag if rng.uniform() < 0.5 else -mag
    return out


def _opaque_values(e: Expr, p: Point, ctx: Context,
                   rng: np.random.Generator, cfg: SampleConfig) -> dict:
    return opaque_assignments((e,), p, ctx, rng, cfg)


def _nf_expand_sums(nf: _NF) -> _NF:
    """Distribute sum-bases held atomically with small positive integer powers."""
    out: _NF = {}
    for mono, c in nf.items():
        atoms = []
        parts = []
        for base, exp in mono:
            if isinstance(base, (Add, Mul)) and exp.denominator == 1 and 0 < exp <= _EXPAND_CAP:
                parts.append(_nf_pow(_nf(base), exp))
            else:
                atoms.append((base, exp))
        term_nf: _NF = {tuple(atoms): c}
        for part in parts:
            term_nf = _nf_mul(term_nf, part)
        out = _nf_add(out, term_nf)
    return out


def _cleared_denominators(nf: _NF) -> _NF:
    """Multiply through by enough of each negative-exponent base to clear it."""
    min_exp: dict = {}
    for mono in nf:
        for base, exp in mono:
            if exp < 0:
                cur = min_exp.get(base)
                if cur is None or exp < cur:
                    min_exp[base] = exp
    if not min_exp:
        return nf
    clear_mono, cc = _normalize_pairs({b: -e for b, e in min_exp.items()}, Fraction(1))
    return _nf_expand_sums(_nf_mul(nf, {clear_mono: cc}))


def is_zero(e: Expr, ctx: Context, cfg: SampleConfig | None = None,
            loci: Sequence[Expr] = ()) -> Tri:
    """Tri-state zero test.

    Proven zero comes only from canonical simplification (directly, or after
    clearing shared denominators, which is sound because the cleared factors
    vanish only on excluded loci).  Proven nonzero needs a sampled point
    where |value| exceeds the tolerance relative to the term magnitude.
    Anything else stays unknown.
    """
    nf = _nf(e)
    if not nf:
        return Tri.PROVEN_ZERO
    if not _cleared_denominators(nf):
        return Tri.PROVEN_ZERO
    cfg = cfg or SampleConfig()
    rng = np.random.default_rng(cfg.seed)
    s = _emit(nf)
    good = 0
    for _ in range(max(cfg.max_tries, 4 * cfg.points)):
        if good >= cfg.points:
            break
        p = _draw_point(ctx, rng, cfg)
        try:
            skip = False
            for g in loci:
                if abs(evaluate(g, p, ctx)) < cfg.locus_guard:
                    skip = True
                    break
            if skip:
                continue
            opaque = _opaque_values(s, p, ctx, rng, cfg)
            v, mag = evaluate_with_magnitude(s, p, ctx, opaque)
        except EvalDomainError:
            continue
        good += 1
        if abs(v) > cfg.tol * max(1.0, mag):
            return Tri.PROVEN_NONZERO
    return Tri.UNKNOWN


# ---------------------------------------------------------------------------
# printing


def _rat_str(r: Fraction) -> str:
    return str(r.numerator) if r.denominator == 1 else f"{r.numerator}/{r.denominator}"


def _needs_parens_as_base(e: Expr) -> bool:
    if isinstance(e, (Add, Mul, Div, Neg, Pow)):
        return True
    if isinstance(e, Const):
        v = e.value
        if isinstance(v, Fraction):
            return v < 0 or v.denominator != 1
        return v < 0
    return False


def _fmt_base(e: Expr) -> str:
    s = format_expr(e)
    return f"({s})" if _needs_parens_as_base(e) else s


def _fmt_powered(base: Expr, exp: Fraction) -> str:
    if exp == 1:
        return _fmt_base(base)
    return f"{_fmt_base(base)}^{_rat_str(exp)}"


def _term_parts(e: Expr):
    """Split a product-like node into (sign, numerator parts, denominator parts)."""
    sign = 1
    num: list[str] = []
    den: list[str] = []

    def feed_const(v):
        nonlocal sign
        if isinstance(v, Fraction):
            if v < 0:
                sign = -sign
                v = -v
            if v.numerator != 1:
                num.insert(0, str(v.numerator))
            if v.denominator != 1:
                den.append(str(v.denominator))
        else:
            if v < 0:
                sign = -sign
                v = -v
            num.insert(0, repr(v))

    def feed(f: Expr):
        nonlocal sign
        if isinstance(f, Const):
            feed_const(f.value)
        elif isinstance(f, Neg):
            sign = -sign
            feed(f.child)
        elif isinstance(f, Pow) and f.exponent < 0:
            den.append(_fmt_powered(f.base, -f.exponent))
        elif isinstance(f, Div):
            feed(f.num)
            s = format_expr(f.den)
            den.append(f"({s})" if _needs_parens_as_base(f.den) else s)
        elif isinstance(f, Mul):
            for c in f.children:
                feed(c)
        elif isinstance(f, Pow):
            num.append(_fmt_powered(f.base, f.exponent))
        else:
            src = format_expr(f)
            num.append(f"({src})" if isinstance(f, Add) else src)

    feed(e)
    return sign, num, den


def _fmt_term(e: Expr) -> tuple[int, str]:
    sign, num, den = _term_parts(e)
    head = "*".join(num) if num else "1"
    for d in den:
        head += f"/{d}"
    return sign, head


def format_expr(e: Expr) -> str:
    """Deterministic text form; canonical trees re-parse to themselves."""
    if isinstance(e, Add):
        sign, head = _fmt_term(e.children[0])
        out = ("-" if sign < 0 else "") + head
        for c in e.children[1:]:
            sign, part = _fmt_term(c)
            out += (" - " if sign < 0 else " + ") + part
        return out
    if isinstance(e, (Mul, Div, Neg, Const)) or (isinstance(e, Pow) and e.exponent < 0):
        sign, head = _fmt_term(e)
        return ("-" if sign < 0 else "") + head
    if isinstance(e, Pow):
        return _fmt_powered(e.base, e.exponent)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Call):
        return f"{e.fname}({format_expr(e.arg)})"
    if isinstance(e, FuncApp):
        primes = "'" * e.order
        return e.fname + primes + "(" + format_expr(e.arg) + ")"
    raise TypeError(f"cannot format {e!r}")


# ---------------------------------------------------------------------------
# compilation to plain Python for hot loops


def _py_src(e: Expr, ctx: Context | None) -> str:
    if isinstance(e, Const):
        v = e.value
        if isinstance(v, Fraction):
            return f"({v.numerator}/{v.denominator})" if v.denominator != 1 else f"({v.numerator})"
        return f"({v!r})"
    if isinstance(e, Var):
        return f"_v_{e.axis}{e.index}"
    if isinstance(e, Param):
        return f"_p[{e.name!r}]"
    if isinstance(e, Neg):
        return f"(-{_py_src(e.child, ctx)})"
    if isinstance(e, Add):
        return "(" + "+".join(_py_src(c, ctx) for c in e.children) + ")"
    if isinstance(e, Mul):
        return "(" + "*".join(_py_src(c, ctx) for c in e.children) + ")"
    if isinstance(e, Div):
        return f"({_py_src(e.num, ctx)}/{_py_src(e.den, ctx)})"
    if isinstance(e, Pow):
        r = e.exponent
        if r.denominator == 1:
            return f"({_py_src(e.base, ctx)}**({int(r)}))"
        return f"_fpow({_py_src(e.base, ctx)}, {float(r)!r})"
    if isinstance(e, Call):
        fn = {"sin": "math.sin", "cos": "math.cos", "exp": "math.exp",
              "ln": "_ln", "sqrt": "_sqrt"}[e.fname]
        return f"{fn}({_py_src(e.arg, ctx)})"
    if isinstance(e, FuncApp):
        return f"_fn[({e.fname!r}, {e.order})]({_py_src(e.arg, ctx)}, _p)"
    raise TypeError(f"cannot compile {e!r}")


def _fpow(b: float, r: float) -> float:
    if b < 0.0:
        raise EvalDomainError("fractional power of a negative base")
    return math.pow(b, r)


def _ln(v: float) -> float:
    if v <= 0.0:
        raise EvalDomainError("ln of a nonpositive value")
    return math.log(v)


def _sqrt(v: float) -> float:
    if v < 0.0:
        raise EvalDomainError("sqrt of a negative value")
    return math.sqrt(v)


def compile_exprs(exprs: Sequence[Expr], ctx: Context) -> Callable[[np.ndarray, Mapping[str, float]], tuple]:
    """Compile expressions into one fast callable (state_array, params) -> tuple.

    Opaque functions must have bound bodies; their needed derivatives are
    compiled once up front.  Raised float errors (ZeroDivisionError and
    friends) are translated back into EvalDomainError by the wrapper.
    """
    n = ctx.dim
    apps: set = set()
    for e in exprs:
        _collect_funcapps(e, apps)
    fn_table: dict[tuple[str, int], Callable[[float], float]] = {}
    for app in apps:
        key = (app.fname, app.order)
        if key in fn_table:
            continue
        body = ctx.func_derivative(app.fname, app.order)
        if body is None:
            raise UnboundParameterError(
                f"opaque function {app.fname!r} needs a bound body to compile")
        inner_ctx = Context(1, params=dict(ctx.params))
        inner = compile_exprs([simplify(body)], inner_ctx)
        fn_table[key] = (lambda f: (lambda t, p: f((t, 0.0), p)[0]))(inner)

    lines = ["def _compiled(_z, _p, _fn):"]
    for i in range(1, n + 1):
        lines.append(f"    _v_x{i} = _z[{i - 1}]")
    for a in range(1, n + 1):
        lines.append(f"    _v_y{a} = _z[{n + a - 1}]")
    body = ", ".join(_py_src(simplify(e), ctx) for e in exprs)
    lines.append(f"    return ({body},)")
    ns: dict = {"math": math, "_fpow": _fpow, "_ln": _ln, "_sqrt": _sqrt}
    exec("\n".join(lines), ns)
    raw = ns["_compiled"]

    def call(z: np.ndarray, params: Mapping[str, float] | None = None) -> tuple:
        try:
            out = raw(z, params or {}, fn_table)
        except ZeroDivisionError as exc:
            raise EvalDomainError("division by zero") from exc
        except OverflowError as exc:
            raise EvalDomainError("overflow") from exc
        except KeyError as exc:
            raise UnboundParameterError(f"parameter {exc.args[0]!r} has no bound value") from exc
        for v in out:
            if not math.isfinite(v):
                raise EvalDomainError("non-finite value in compiled evaluation")
        return out

    return call
