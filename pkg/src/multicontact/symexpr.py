"""Exact scalar expressions over chart coordinates.

Expressions are plain :class:`sympy.Expr` trees.  This module adds the
pieces the rest of the package relies on: a small infix grammar with
positioned errors, a canonical form for rational expressions, a tri-state
zero test backed by a randomized numeric probe, and numeric evaluation
with user-supplied implementations of opaque parameter functions.

Opaque parameter functions (``gamma(t)``, ``g_0(x_0, x_1)``...) are undefined
sympy functions.  Their partial derivatives stay opaque ``Derivative`` nodes,
and differentiating with respect to a symbol they do not depend on gives 0.
"""
from __future__ import annotations

import enum
import math
import re
from collections.abc import Callable, Iterable, Mapping

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef

Expr = sp.Expr

__all__ = [
    "Expr",
    "ZeroTest",
    "ParseError",
    "UndeclaredSymbolError",
    "EvaluationError",
    "symbol",
    "param_function",
    "parse",
    "differentiate",
    "simplify",
    "is_zero",
    "evaluate",
    "compile_expr",
    "substitute_params",
    "set_probe_seed",
    "PROBE_POINTS",
    "PROBE_EPS",
]

PROBE_POINTS = 8
PROBE_EPS = 1e-9
_MAX_PROBE_ATTEMPTS = 40

_probe_seed = 20240917


def set_probe_seed(seed: int) -> None:
    """Set the seed used by :func:`is_zero` probes (process-wide)."""
    global _probe_seed
    _probe_seed = int(seed)


class ZeroTest(enum.Enum):
    ZERO = "zero"
    NONZERO = "nonzero"
    UNKNOWN = "unknown"


class ParseError(ValueError):
    def __init__(self, message: str, text: str = "", position: int | None = None):
        self.text = text
        self.position = position
        if position is not None:
            message = f"{message} at position {position}"
            if text:
                message += f"\n  {text}\n  {' ' * position}^"
        super().__init__(message)


class UndeclaredSymbolError(ParseError):
    def __init__(self, name: str, text: str = "", position: int | None = None):
        self.name = name
        super().__init__(f"undeclared symbol {name!r}", text, position)


class EvaluationError(ValueError):
    def __init__(self, message: str, subexpression: sp.Basic | None = None):
        self.subexpression = subexpression
        if subexpression is not None:
            message = f"{message}: {subexpression}"
        super().__init__(message)


def symbol(name: str) -> sp.Symbol:
    """The real symbol used for a coordinate or constant called ``name``."""
    return sp.Symbol(name, real=True)


def param_function(name: str) -> sp.core.function.UndefinedFunction:
    """The opaque smooth function called ``name``."""
    return sp.Function(name, real=True)


# ----------------------------------------------------------------------------
# parsing

_ELEMENTARY = {
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "sinh": sp.sinh,
    "cosh": sp.cosh,
    "tanh": sp.tanh,
}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[bad]!r}", text, bad)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, symbols: Mapping[str, sp.Symbol], functions: Mapping[str, int]):
        self.text = text
        self.symbols = symbols
        self.functions = functions
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {found}", self.text, pos)

    def parse(self) -> sp.Expr:
        if self.peek()[0] == "end":
            raise ParseError("empty expression", self.text, 0)
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", self.text, pos)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            e = e * rhs if op == "*" else e / rhs
        return e

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return -self.unary()
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] in ("^", "**"):
            self.take()
            return base ** self.unary()
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return sp.Rational(val)
        if kind == "name":
            if self.peek()[1] == "(":
                return self.call(val, pos)
            if val in self.symbols:
                return self.symbols[val]
            if val == "pi":
                return sp.pi
            if val in _ELEMENTARY or val in self.functions:
                raise ParseError(f"function {val!r} used without arguments", self.text, pos)
            raise UndeclaredSymbolError(val, self.text, pos)
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {found}", self.text, pos)

    def call(self, name, pos):
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        self.expect(")")
        if name in _ELEMENTARY:
            if len(args) != 1:
                raise ParseError(f"{name} takes one argument", self.text, pos)
            return _ELEMENTARY[name](args[0])
        if name in self.functions:
            arity = self.functions[name]
            if arity is not None and arity != len(args):
                raise ParseError(
                    f"parameter function {name!r} takes {arity} argument(s), got {len(args)}",
                    self.text,
                    pos,
                )
            return param_function(name)(*args)
        raise UndeclaredSymbolError(name, self.text, pos)


def _scope_symbols(scope) -> dict[str, sp.Symbol]:
    if scope is None:
        return {}
    if hasattr(scope, "symbol_table"):
        return dict(scope.symbol_table())
    if isinstance(scope, Mapping):
        return {str(k): (v if isinstance(v, sp.Symbol) else symbol(str(k))) for k, v in scope.items()}
    return {str(n): symbol(str(n)) for n in scope}


def parse(
    text: str,
    chart=None,
    constants: Iterable[str] = (),
    functions: Mapping[str, int | None] | Iterable[str] = (),
) -> sp.Expr:
    """Parse ``text`` into an expression.

    Identifiers must be chart coordinates, declared ``constants`` or calls of
    declared parameter ``functions`` (name -> arity, ``None`` for any).
    Decimal literals are read as exact rationals.
    """
    symbols = _scope_symbols(chart)
    for c in constants:
        symbols.setdefault(c, symbol(c))
    if not isinstance(functions, Mapping):
        functions = {f: None for f in functions}
    return _Parser(text, symbols, functions).parse()


# ----------------------------------------------------------------------------
# canonical form


def _rewrite_trig(e: sp.Expr) -> sp.Expr:
    def is_cos_power(x):
        return x.is_Pow and isinstance(x.base, sp.cos) and x.exp.is_Integer and x.exp >= 2

    def to_sin(x):
        arg = x.base.args[0]
        n = int(x.exp)
        return (1 - sp.sin(arg) ** 2) ** (n // 2) * sp.cos(arg) ** (n % 2)

    return e.replace(is_cos_power, to_sin)


def simplify(e) -> sp.Expr:
    """Canonical form: expanded numerator over expanded denominator.

    Also applies the only rewrites the package allows itself:
    ``cos^2 -> 1 - sin^2`` and ``exp(a)*exp(b) -> exp(a+b)``.
    """
    e = sp.sympify(e)
    if e.is_Number or e.is_Symbol:
        return e
    e = sp.expand(e)
    if e.has(sp.cos):
        e = sp.expand(_rewrite_trig(e))
    if e.has(sp.exp):
        e = sp.expand(sp.powsimp(e, combine="exp"))
    return sp.cancel(e)


def differentiate(e, v) -> sp.Expr:
    """Exact partial derivative of ``e`` with respect to the symbol ``v``."""
    if isinstance(v, str):
        v = symbol(v)
    d = sp.diff(e, v)
    if d == 0:
        return sp.S.Zero
    return simplify(d)


# ----------------------------------------------------------------------------
# zero test


def _probe_atoms(e: sp.Expr) -> list[sp.Basic]:
    atoms = set(e.atoms(sp.Derivative))
    undef = {a for a in e.atoms(AppliedUndef)}
    atoms |= undef
    atoms |= {s for s in e.free_symbols}
    return sorted(atoms, key=sp.default_sort_key)


def _sample(rng: np.random.Generator, size: int) -> np.ndarray:
    mag = rng.uniform(0.5, 2.0, size)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return mag * sign


def _probe_value(e: sp.Expr, atoms, values) -> complex | None:
    repl = {a: sp.Float(float(v)) for a, v in zip(atoms, values)}
    try:
        r = e.xreplace(repl)
        if r.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
            return None
        z = complex(r.evalf())
    except (TypeError, ValueError, ZeroDivisionError, OverflowError):
        return None
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        return None
    if abs(z.imag) > 1e-12 * max(1.0, abs(z.real)):
        # left the real domain (log or sqrt of a negative sample)
        return None
    return z


def is_zero(e, seed: int | None = None) -> ZeroTest:
    """Tri-state zero test.

    ZERO only when the canonical form reduces to 0; NONZERO when a probe at
    one of :data:`PROBE_POINTS` random points exceeds :data:`PROBE_EPS`;
    UNKNOWN otherwise.  Opaque function values and their derivatives are
    probed as independent numbers.
    """
    e = sp.sympify(e)
    if e == 0:
        return ZeroTest.ZERO
    if e.is_Number:
        return ZeroTest.NONZERO
    c = simplify(e)
    if c == 0:
        return ZeroTest.ZERO
    if c.is_Number:
        return ZeroTest.NONZERO
    atoms = _probe_atoms(c)
    rng = np.random.default_rng(_probe_seed if seed is None else seed)
    good = 0
    for _ in range(_MAX_PROBE_ATTEMPTS):
        z = _probe_value(c, atoms, _sample(rng, len(atoms)))
        if z is None:
            continue
        if abs(z) > PROBE_EPS:
            return ZeroTest.NONZERO
        good += 1
        if good >= PROBE_POINTS:
            break
    return ZeroTest.UNKNOWN


# ----------------------------------------------------------------------------
# numeric evaluation

ParamImpl = Callable[..., float] | sp.Lambda | sp.Expr | str | float | int


def _as_lambda(name: str, impl, arity: int) -> sp.Lambda | None:
    if isinstance(impl, sp.Lambda):
        return impl
    if isinstance(impl, (int, float, sp.Expr, str)):
        # constant or expression in the placeholder arguments _0, _1, ...
        args = tuple(symbol(f"_{k}") for k in range(arity))
        if isinstance(impl, str):
            body = parse(impl, {a.name: a for a in args})
        else:
            body = sp.sympify(impl)
        return sp.Lambda(tuple(args), body)
    return None


def substitute_params(e: sp.Expr, params: Mapping[str, ParamImpl] | None) -> sp.Expr:
    """Replace opaque functions that have symbolic implementations.

    Derivative nodes of substituted functions are evaluated exactly.
    Callable implementations are left in place.
    """
    if not params:
        return e
    repl = {}
    for f in {a.func for a in e.atoms(AppliedUndef)}:
        name = f.__name__
        if name not in params:
            continue
        arity = next(len(a.args) for a in e.atoms(AppliedUndef) if a.func == f)
        lam = _as_lambda(name, params[name], arity)
        if lam is not None:
            repl[f] = lam
    if not repl:
        return e
    out = e
    for f, lam in repl.items():
        out = out.replace(f, lam)
    return out.doit()


def _find_bad_subexpression(e: sp.Expr, repl: Mapping) -> sp.Basic | None:
    for sub in sp.postorder_traversal(e):
        if not isinstance(sub, sp.Expr) or sub.is_Atom:
            continue
        try:
            v = sub.xreplace(repl)
            if v.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
                return sub
            z = complex(v.evalf())
            if abs(z.imag) > 1e-12 * max(1.0, abs(z.real)):
                return sub
        except (TypeError, ValueError, ZeroDivisionError):
            continue
    return None


def evaluate(
    e,
    bindings: Mapping,
    params: Mapping[str, ParamImpl] | None = None,
) -> float:
    """Evaluate ``e`` to a float.

    ``bindings`` maps symbols (or their names) to numbers.  ``params`` maps
    opaque function names to implementations: a Python callable, a number, an
    expression string in ``_0, _1, ...``, or a :class:`sympy.Lambda`.
    """
    e = sp.sympify(e)
    e = substitute_params(e, params)
    params = params or {}
    for d in e.atoms(sp.Derivative):
        raise EvaluationError("no implementation for derivative", d)
    fcalls = sorted(e.atoms(AppliedUndef), key=lambda a: -sp.count_ops(a))
    vals = {}
    for s in e.free_symbols:
        key = s if s in bindings else s.name
        if key not in bindings:
            raise EvaluationError(f"unbound symbol {s.name!r}")
        vals[s] = sp.Float(float(bindings[key]))
    for call in fcalls:
        name = call.func.__name__
        impl = params.get(name)
        if impl is None or isinstance(impl, sp.Basic) or not callable(impl):
            raise EvaluationError("no implementation for parameter function", call)
        args = [float(sp.sympify(a).xreplace(vals)) for a in call.args]
        vals[call] = sp.Float(float(impl(*args)))
    r = e.xreplace(vals)
    bad = r.has(sp.zoo, sp.nan, sp.oo, -sp.oo)
    z = None
    if not bad:
        try:
            z = complex(r.evalf())
        except (TypeError, ValueError):
            bad = True
    if bad or z is None or abs(z.imag) > 1e-12 * max(1.0, abs(z.real)) or not math.isfinite(z.real):
        raise EvaluationError("domain error in", _find_bad_subexpression(e, vals) or e)
    return float(z.real)


def compile_expr(e, args: Iterable, params: Mapping[str, ParamImpl] | None = None):
    """Vectorised numpy callable ``f(*args)`` for ``e``."""
    e = substitute_params(sp.sympify(e), params)
    for d in e.atoms(sp.Derivative):
        raise EvaluationError("no implementation for derivative", d)
    modules = []
    callables = {k: v for k, v in (params or {}).items() if callable(v) and not isinstance(v, sp.Basic)}
    if callables:
        modules.append(callables)
    modules.append("numpy")
    args = [symbol(a) if isinstance(a, str) else a for a in args]
    if not e.free_symbols and not e.atoms(AppliedUndef):
        if isinstance(e, sp.MatrixBase):
            arr = np.array(e.tolist(), dtype=float)
            return lambda *a: arr.copy()
        const = float(e)
        return lambda *a: np.full(np.broadcast(*a).shape, const) if a else const
    return sp.lambdify(args, e, modules=modules)
