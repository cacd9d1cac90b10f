"""Charts and exterior calculus on them.

Forms and multivector fields are stored sparsely as ``{index tuple: coefficient}``
with strictly increasing index tuples over the chart's coordinate list.

Contraction of a decomposable multivector follows the nested order
``i(X_1 ^ ... ^ X_k) a = i(X_k) ... i(X_1) a``, so for instance
``i(d/dx1)(dx0 ^ dx1) = -dx0`` and ``i(d/dx0 ^ d/dx1)(dx0 ^ dx1) = 1``.
"""
from __future__ import annotations

import enum
import itertools
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import sympy as sp

from . import symexpr
from .symexpr import ZeroTest

__all__ = [
    "Role",
    "Coordinate",
    "Chart",
    "ChartError",
    "Form",
    "VectorField",
    "MultiVector",
    "Section",
    "wedge",
    "d",
    "contract",
    "lie_bracket",
    "dbar",
    "pullback",
    "pullback_by_map",
    "prolong_contract",
    "volume_form",
    "dvol",
    "form_from_text",
]


class ChartError(ValueError):
    pass


class Role(enum.Enum):
    BASE = "base"
    FIELD = "field"
    VELOCITY = "velocity"
    MOMENTUM = "momentum"
    CONTACT = "contact"
    GAUGE = "gauge"
    GENERIC = "generic"


@dataclass(frozen=True)
class Coordinate:
    """A named coordinate with its role.

    ``field`` is the field index (FIELD, VELOCITY, MOMENTUM), ``base`` the base
    index (BASE, VELOCITY, MOMENTUM, CONTACT).
    """

    name: str
    role: Role
    field: int | None = None
    base: int | None = None

    @property
    def symbol(self) -> sp.Symbol:
        return symexpr.symbol(self.name)


def _base_suffix(name: str) -> str:
    m = re.match(r"^x_?(\d+)$", name)
    return m.group(1) if m else name


def _field_suffix(name: str) -> str | None:
    m = re.match(r"^y_?(\d+)$", name)
    return m.group(1) if m else None


class Chart:
    """Ordered coordinates with roles, plus declared parameters.

    ``constants`` are scalar parameter names; ``functions`` maps opaque
    parameter-function names to their arity.
    """

    def __init__(
        self,
        coordinates: Sequence[Coordinate],
        constants: Iterable[str] = (),
        functions: Mapping[str, int] | None = None,
    ):
        self.coordinates = tuple(coordinates)
        self.constants = tuple(constants)
        self.functions = dict(functions or {})
        names = [c.name for c in self.coordinates]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ChartError(f"duplicate coordinate names: {dup}")
        clash = set(names) & (set(self.constants) | set(self.functions))
        if clash:
            raise ChartError(f"parameters shadow coordinates: {sorted(clash)}")
        base = [c for c in self.coordinates if c.role is Role.BASE]
        self.m = len(base)
        if self.m == 0:
            raise ChartError("a chart needs at least one base coordinate")
        if sorted(c.base for c in base) != list(range(self.m)):
            raise ChartError("base coordinates must carry indices 0..m-1")
        contact = [c for c in self.coordinates if c.role is Role.CONTACT]
        if contact and sorted(c.base for c in contact) != list(range(self.m)):
            raise ChartError(f"expected exactly {self.m} contact coordinates indexed 0..m-1")
        for c in self.coordinates:
            if c.role in (Role.VELOCITY, Role.MOMENTUM):
                if c.base is None or not 0 <= c.base < self.m:
                    raise ChartError(f"{c.name}: base index outside [0, {self.m})")
                if c.field is None:
                    raise ChartError(f"{c.name}: missing field index")
        self._index = {c.name: k for k, c in enumerate(self.coordinates)}
        self.symbols = tuple(c.symbol for c in self.coordinates)
        self._sym_index = {s: k for k, s in enumerate(self.symbols)}

    # -- lookup ---------------------------------------------------------
    def __len__(self):
        return len(self.coordinates)

    def __eq__(self, other):
        return isinstance(other, Chart) and self.coordinates == other.coordinates

    def __hash__(self):
        return hash(self.coordinates)

    def __repr__(self):
        return f"Chart({', '.join(self.names)})"

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.coordinates)

    @property
    def dim(self) -> int:
        return len(self.coordinates)

    def index(self, key) -> int:
        if isinstance(key, (int,)) and not isinstance(key, bool):
            return key
        if isinstance(key, sp.Symbol):
            try:
                return self._sym_index[key]
            except KeyError:
                raise ChartError(f"{key} is not a coordinate of {self!r}") from None
        try:
            return self._index[key]
        except KeyError:
            raise ChartError(f"{key!r} is not a coordinate of {self!r}") from None

    def symbol(self, key) -> sp.Symbol:
        return self.symbols[self.index(key)]

    def indices(self, *roles: Role) -> list[int]:
        return [k for k, c in enumerate(self.coordinates) if c.role in roles]

    @property
    def base_indices(self) -> list[int]:
        return sorted(self.indices(Role.BASE), key=lambda k: self.coordinates[k].base)

    @property
    def base_symbols(self) -> list[sp.Symbol]:
        return [self.symbols[k] for k in self.base_indices]

    @property
    def vertical_indices(self) -> list[int]:
        return [k for k, c in enumerate(self.coordinates) if c.role is not Role.BASE]

    @property
    def n(self) -> int:
        return len(self.indices(Role.FIELD))

    def _find(self, role: Role, field=None, base=None) -> int:
        for k, c in enumerate(self.coordinates):
            if c.role is role and (field is None or c.field == field) and (base is None or c.base == base):
                return k
        raise ChartError(f"no {role.value} coordinate with field={field} base={base}")

    def base(self, mu: int) -> int:
        return self._find(Role.BASE, base=mu)

    def field_coord(self, i: int) -> int:
        return self._find(Role.FIELD, field=i)

    def velocity(self, i: int, mu: int) -> int:
        return self._find(Role.VELOCITY, field=i, base=mu)

    def momentum(self, i: int, mu: int) -> int:
        return self._find(Role.MOMENTUM, field=i, base=mu)

    def contact(self, mu: int) -> int:
        return self._find(Role.CONTACT, base=mu)

    def has_role(self, role: Role) -> bool:
        return any(c.role is role for c in self.coordinates)

    def symbol_table(self) -> dict[str, sp.Symbol]:
        table = {c.name: c.symbol for c in self.coordinates}
        for c in self.constants:
            table[c] = symexpr.symbol(c)
        return table

    def parse(self, text: str) -> sp.Expr:
        return symexpr.parse(text, self, functions=self.functions)

    def with_parameters(self, constants: Iterable[str] = (), functions: Mapping[str, int] | None = None) -> "Chart":
        fs = dict(self.functions)
        fs.update(functions or {})
        return Chart(self.coordinates, tuple(dict.fromkeys(self.constants + tuple(constants))), fs)

    # -- constructors ---------------------------------------------------
    @classmethod
    def _names(cls, base, fields):
        m = len(base)
        bsuf = [_base_suffix(b) for b in base]
        x_style = all(_base_suffix(b) != b for b in base)
        contact = ["s" if (m == 1 and not x_style) else f"s_{b}" for b in bsuf]
        velocity, momentum = {}, {}
        for i, f in enumerate(fields):
            fsuf = _field_suffix(f)
            for mu, b in enumerate(bsuf):
                velocity[i, mu] = f"{f}_{b}"
                if fsuf is not None:
                    momentum[i, mu] = f"p_{fsuf}_{b}"
                elif len(fields) == 1:
                    momentum[i, mu] = "p" if (m == 1 and not x_style) else f"p_{b}"
                else:
                    momentum[i, mu] = f"p_{f}" if (m == 1 and not x_style) else f"p_{f}_{b}"
        return contact, velocity, momentum

    @classmethod
    def lagrangian(
        cls,
        base: Sequence[str],
        fields: Sequence[str],
        gauge: Sequence[str] = (),
        constants: Iterable[str] = (),
        functions: Mapping[str, int] | None = None,
    ) -> "Chart":
        """Natural chart ``(x^mu, y^i, y^i_mu, s^mu)`` (plus optional gauge coordinates)."""
        contact, velocity, _ = cls._names(base, fields)
        coords = [Coordinate(b, Role.BASE, base=mu) for mu, b in enumerate(base)]
        coords += [Coordinate(f, Role.FIELD, field=i) for i, f in enumerate(fields)]
        coords += [
            Coordinate(velocity[i, mu], Role.VELOCITY, field=i, base=mu)
            for i in range(len(fields))
            for mu in range(len(base))
        ]
        coords += [Coordinate(w, Role.GAUGE) for w in gauge]
        coords += [Coordinate(s, Role.CONTACT, base=mu) for mu, s in enumerate(contact)]
        return cls(coords, constants, functions)

    @classmethod
    def hamiltonian(
        cls,
        base: Sequence[str],
        fields: Sequence[str],
        gauge: Sequence[str] = (),
        constants: Iterable[str] = (),
        functions: Mapping[str, int] | None = None,
    ) -> "Chart":
        """Chart ``(x^mu, y^i, p_i^mu, s^mu)``."""
        contact, _, momentum = cls._names(base, fields)
        coords = [Coordinate(b, Role.BASE, base=mu) for mu, b in enumerate(base)]
        coords += [Coordinate(f, Role.FIELD, field=i) for i, f in enumerate(fields)]
        coords += [
            Coordinate(momentum[i, mu], Role.MOMENTUM, field=i, base=mu)
            for i in range(len(fields))
            for mu in range(len(base))
        ]
        coords += [Coordinate(w, Role.GAUGE) for w in gauge]
        coords += [Coordinate(s, Role.CONTACT, base=mu) for mu, s in enumerate(contact)]
        return cls(coords, constants, functions)

    @classmethod
    def cocontact(cls, n: int = 1, constants: Iterable[str] = (), functions=None) -> "Chart":
        """Darboux chart ``(t, q^i, p_i, s)`` of a cocontact manifold."""
        fields = ["q"] if n == 1 else [f"q_{i}" for i in range(n)]
        return cls.hamiltonian(["t"], fields, constants=constants, functions=functions)

    def base_names(self) -> list[str]:
        return [self.coordinates[k].name for k in self.base_indices]

    def field_names(self) -> list[str]:
        return [self.coordinates[self.field_coord(i)].name for i in range(self.n)]

    def gauge_names(self) -> list[str]:
        return [self.coordinates[k].name for k in self.indices(Role.GAUGE)]

    def dual(self) -> "Chart":
        """The Hamiltonian chart paired with a Lagrangian chart (same base, fields, contact)."""
        if not self.has_role(Role.VELOCITY):
            raise ChartError("dual() needs a chart with velocity coordinates")
        h = Chart.hamiltonian(self.base_names(), self.field_names(), self.gauge_names(), self.constants, self.functions)
        # keep the contact names of the source chart
        coords = []
        for c in h.coordinates:
            if c.role is Role.CONTACT:
                c = Coordinate(self.coordinates[self.contact(c.base)].name, Role.CONTACT, base=c.base)
            coords.append(c)
        return Chart(coords, self.constants, self.functions)


# ----------------------------------------------------------------------------
# sparse helpers


def _sort_sign(idx: Sequence[int]) -> tuple[int, tuple[int, ...]]:
    """Sign of the permutation sorting ``idx`` and the sorted tuple (sign 0 on repeats)."""
    idx = list(idx)
    if len(set(idx)) != len(idx):
        return 0, ()
    sign = 1
    # insertion sort counting transpositions
    for i in range(1, len(idx)):
        j = i
        while j > 0 and idx[j - 1] > idx[j]:
            idx[j - 1], idx[j] = idx[j], idx[j - 1]
            sign = -sign
            j -= 1
    return sign, tuple(idx)


def _clean(e) -> sp.Expr:
    e = sp.sympify(e)
    if e.is_Number:
        return e
    return sp.expand(e)


def _accumulate(terms: dict, key, value):
    if value == 0:
        return
    prev = terms.get(key)
    terms[key] = value if prev is None else prev + value


def _finish(terms: dict) -> dict:
    out = {}
    for k, v in terms.items():
        v = _clean(v)
        if v != 0:
            out[k] = v
    return out


class Form:
    """Differential form of fixed degree on a chart."""

    __slots__ = ("chart", "degree", "terms")

    def __init__(self, chart: Chart, degree: int, terms: Mapping | None = None, *, normalize: bool = True):
        self.chart = chart
        self.degree = degree
        if terms is None:
            self.terms = {}
        elif normalize:
            acc = {}
            for idx, c in terms.items():
                idx = tuple(chart.index(k) for k in idx)
                if len(idx) != degree:
                    raise ValueError(f"index tuple {idx} does not have length {degree}")
                sign, key = _sort_sign(idx)
                if sign:
                    _accumulate(acc, key, sign * sp.sympify(c))
            self.terms = _finish(acc)
        else:
            self.terms = dict(terms)

    # -- constructors ---------------------------------------------------
    @classmethod
    def zero(cls, chart: Chart, degree: int) -> "Form":
        return cls(chart, degree)

    @classmethod
    def scalar(cls, chart: Chart, expr) -> "Form":
        return cls(chart, 0, {(): sp.sympify(expr)})

    @classmethod
    def differential(cls, chart: Chart, coord) -> "Form":
        return cls(chart, 1, {(chart.index(coord),): sp.S.One})

    @classmethod
    def basis(cls, chart: Chart, coords: Sequence, coeff=1) -> "Form":
        return cls(chart, len(coords), {tuple(chart.index(c) for c in coords): sp.sympify(coeff)})

    # -- algebra --------------------------------------------------------
    def _check(self, other: "Form"):
        if other.chart != self.chart:
            raise ValueError("forms live on different charts")
        if other.degree != self.degree:
            raise ValueError(f"degree mismatch: {self.degree} vs {other.degree}")

    def __add__(self, other):
        if isinstance(other, (int, sp.Expr)) and self.degree == 0:
            other = Form.scalar(self.chart, other)
        self._check(other)
        acc = dict(self.terms)
        for k, v in other.terms.items():
            _accumulate(acc, k, v)
        return Form(self.chart, self.degree, _finish(acc), normalize=False)

    __radd__ = __add__

    def __neg__(self):
        return Form(self.chart, self.degree, {k: -v for k, v in self.terms.items()}, normalize=False)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, f):
        if isinstance(f, Form):
            return wedge(self, f)
        f = sp.sympify(f)
        if f == 0:
            return Form.zero(self.chart, self.degree)
        return Form(self.chart, self.degree, _finish({k: f * v for k, v in self.terms.items()}), normalize=False)

    def __rmul__(self, f):
        return self * f

    def __xor__(self, other):
        return wedge(self, other)

    def __eq__(self, other):
        return (
            isinstance(other, Form)
            and self.chart == other.chart
            and self.degree == other.degree
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.degree, frozenset(self.terms.items())))

    def __repr__(self):
        return f"Form({self.to_text()})"

    def __str__(self):
        return self.to_text()

    def map(self, f) -> "Form":
        return Form(self.chart, self.degree, _finish({k: f(v) for k, v in self.terms.items()}), normalize=False)

    def subs(self, mapping) -> "Form":
        return self.map(lambda v: v.xreplace(mapping))

    def simplify(self) -> "Form":
        out = {}
        for k, v in self.terms.items():
            v = symexpr.simplify(v)
            if v != 0:
                out[k] = v
        return Form(self.chart, self.degree, out, normalize=False)

    def is_zero(self) -> ZeroTest:
        verdict = ZeroTest.ZERO
        for v in self.terms.values():
            z = symexpr.is_zero(v)
            if z is ZeroTest.NONZERO:
                return z
            if z is ZeroTest.UNKNOWN:
                verdict = z
        return verdict

    def component(self, coords: Sequence) -> sp.Expr:
        """Coefficient of ``dz_{c1} ^ ... ^ dz_{ck}`` in the given order."""
        sign, key = _sort_sign([self.chart.index(c) for c in coords])
        if not sign:
            return sp.S.Zero
        return sign * self.terms.get(key, sp.S.Zero)

    def scalar_value(self) -> sp.Expr:
        if self.degree != 0:
            raise ValueError("not a 0-form")
        return self.terms.get((), sp.S.Zero)

    def free_symbols(self) -> set:
        out = set()
        for v in self.terms.values():
            out |= v.free_symbols
        return out

    # -- text -----------------------------------------------------------
    def to_text(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for idx in sorted(self.terms):
            c = self.terms[idx]
            diff = "^".join("d" + self.chart.coordinates[k].name for k in idx)
            if not idx:
                parts.append(_coef_text(c))
            elif c == 1:
                parts.append(diff)
            elif c == -1:
                parts.append("-" + diff)
            else:
                parts.append(f"{_coef_text(c)} * {diff}")
        out = parts[0]
        for p in parts[1:]:
            out += " - " + p[1:] if p.startswith("-") and not p.startswith("-(") else " + " + p
        return out


def _coef_text(c: sp.Expr) -> str:
    s = sp.sstr(c)
    if isinstance(c, sp.Add):
        return f"({s})"
    return s


def _split_terms(text: str) -> list[str]:
    terms, depth, start = [], 0, 0
    for k, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch in "+-" and depth == 0 and k > 0:
            p = text[:k].rstrip()
            if p and p[-1] not in "*/^(+-" and not re.search(r"\d[eE]$", p):
                terms.append(text[start:k])
                start = k
    terms.append(text[start:])
    return [t.strip() for t in terms if t.strip()]


def form_from_text(text: str, chart: Chart) -> Form:
    """Parse the canonical text syntax ``H * dx0^dx1 + ds0^dx1``."""
    names = sorted(chart.names, key=len, reverse=True)
    dname = "|".join(re.escape(n) for n in names)
    tail = re.compile(rf"(?P<star>\*\s*)?(?P<diff>d(?:{dname})(?:\s*\^\s*d(?:{dname}))*)\s*$")
    acc, degree = {}, None
    for term in _split_terms(text):
        sign = 1
        body = term
        if body.startswith("+"):
            body = body[1:].strip()
        m = tail.search(body)
        idx: tuple = ()
        coef_text = body
        if m and (m.group("star") or body[: m.start()].strip() in ("", "-")):
            diffs = [s.strip()[1:] for s in m.group("diff").split("^")]
            idx = tuple(chart.index(dn) for dn in diffs)
            coef_text = body[: m.start()].strip()
        if coef_text in ("", "+"):
            coef = sp.S.One
        elif coef_text == "-":
            coef = sp.S.NegativeOne
        else:
            coef = chart.parse(coef_text)
        if degree is None:
            degree = len(idx)
        elif degree != len(idx):
            raise symexpr.ParseError(f"mixed degrees in form text ({degree} and {len(idx)})", text, None)
        s, key = _sort_sign(idx)
        if s:
            _accumulate(acc, key, sign * s * coef)
    if text.strip() == "0":
        return Form.zero(chart, 0)
    return Form(chart, degree or 0, _finish(acc), normalize=False)


# ----------------------------------------------------------------------------
# vector and multivector fields


class VectorField:
    __slots__ = ("chart", "components")

    def __init__(self, chart: Chart, components: Mapping | None = None):
        self.chart = chart
        comps = {}
        for k, v in (components or {}).items():
            v = _clean(v)
            if v != 0:
                comps[chart.index(k)] = v
        self.components = comps

    @classmethod
    def coordinate(cls, chart: Chart, coord) -> "VectorField":
        return cls(chart, {chart.index(coord): sp.S.One})

    def __call__(self, f) -> sp.Expr:
        """Derivative of the scalar ``f`` along the field."""
        f = sp.sympify(f)
        return _clean(sum((c * sp.diff(f, self.chart.symbols[k]) for k, c in self.components.items()), sp.S.Zero))

    def __add__(self, other):
        comps = dict(self.components)
        for k, v in other.components.items():
            comps[k] = comps.get(k, 0) + v
        return VectorField(self.chart, comps)

    def __neg__(self):
        return VectorField(self.chart, {k: -v for k, v in self.components.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, f):
        return VectorField(self.chart, {k: f * v for k, v in self.components.items()})

    __rmul__ = __mul__

    def component(self, coord) -> sp.Expr:
        return self.components.get(self.chart.index(coord), sp.S.Zero)

    def subs(self, mapping) -> "VectorField":
        return VectorField(self.chart, {k: v.xreplace(mapping) for k, v in self.components.items()})

    def simplify(self) -> "VectorField":
        return VectorField(self.chart, {k: symexpr.simplify(v) for k, v in self.components.items()})

    def is_zero(self) -> ZeroTest:
        verdict = ZeroTest.ZERO
        for v in self.components.values():
            z = symexpr.is_zero(v)
            if z is ZeroTest.NONZERO:
                return z
            if z is ZeroTest.UNKNOWN:
                verdict = z
        return verdict

    def to_text(self) -> str:
        if not self.components:
            return "0"
        parts = []
        for k in sorted(self.components):
            c = self.components[k]
            name = "d/d" + self.chart.coordinates[k].name
            parts.append(name if c == 1 else f"{_coef_text(c)} * {name}")
        return " + ".join(parts)

    def __repr__(self):
        return f"VectorField({self.to_text()})"

    def __eq__(self, other):
        return isinstance(other, VectorField) and self.chart == other.chart and self.components == other.components

    def __hash__(self):
        return hash(frozenset(self.components.items()))


class MultiVector:
    """k-multivector field; decomposable ones keep the k factors as a witness."""

    __slots__ = ("chart", "degree", "_terms", "witness")

    def __init__(self, chart: Chart, degree: int, terms: Mapping | None = None, witness=None):
        self.chart = chart
        self.degree = degree
        self.witness = tuple(witness) if witness is not None else None
        if terms is None and witness is None:
            terms = {}
        if terms is not None:
            acc = {}
            for idx, c in terms.items():
                sign, key = _sort_sign([chart.index(k) for k in idx])
                if sign:
                    _accumulate(acc, key, sign * sp.sympify(c))
            self._terms = _finish(acc)
        else:
            self._terms = None

    @classmethod
    def decomposable(cls, vectors: Sequence[VectorField]) -> "MultiVector":
        vectors = list(vectors)
        return cls(vectors[0].chart, len(vectors), None, witness=vectors)

    @classmethod
    def coordinate(cls, chart: Chart, coords: Sequence) -> "MultiVector":
        return cls.decomposable([VectorField.coordinate(chart, c) for c in coords])

    @property
    def terms(self) -> dict:
        if self._terms is None:
            acc = {}
            comps = [list(v.components.items()) for v in self.witness]
            for combo in itertools.product(*comps):
                idx = [k for k, _ in combo]
                sign, key = _sort_sign(idx)
                if sign:
                    _accumulate(acc, key, sign * sp.Mul(*[c for _, c in combo]))
            self._terms = _finish(acc)
        return self._terms


# ----------------------------------------------------------------------------
# operations


def wedge(a: Form, b: Form) -> Form:
    """Exterior product; returns the zero form when the degree exceeds the chart dimension."""
    if a.chart != b.chart:
        raise ValueError("forms live on different charts")
    deg = a.degree + b.degree
    acc = {}
    if deg <= a.chart.dim:
        for ia, ca in a.terms.items():
            sa = set(ia)
            for ib, cb in b.terms.items():
                if sa.intersection(ib):
                    continue
                sign, key = _sort_sign(ia + ib)
                _accumulate(acc, key, sign * ca * cb)
    return Form(a.chart, deg, _finish(acc), normalize=False)


def d(a: Form) -> Form:
    """Exterior derivative."""
    chart = a.chart
    acc = {}
    for idx, c in a.terms.items():
        present = set(idx)
        for s in c.free_symbols:
            k = chart._sym_index.get(s)
            if k is None or k in present:
                continue
            dc = sp.diff(c, s)
            if dc == 0:
                continue
            sign, key = _sort_sign((k,) + idx)
            _accumulate(acc, key, sign * dc)
    # free_symbols includes the arguments of opaque calls, so gamma(t) is handled
    return Form(chart, a.degree + 1, _finish(acc), normalize=False)


def _contract_vector(v: VectorField, a: Form) -> Form:
    acc = {}
    if a.degree == 0:
        return Form.zero(a.chart, 0)
    comps = v.components
    for idx, c in a.terms.items():
        for j, b in enumerate(idx):
            vb = comps.get(b)
            if vb is None:
                continue
            key = idx[:j] + idx[j + 1:]
            _accumulate(acc, key, (-1) ** j * vb * c)
    return Form(a.chart, a.degree - 1, _finish(acc), normalize=False)


def contract(X, a: Form) -> Form:
    """Interior product ``i(X)a`` in the nested order ``i(X_k)...i(X_1)``."""
    if isinstance(X, VectorField):
        return _contract_vector(X, a)
    if X.degree > a.degree:
        return Form.zero(a.chart, 0)
    if X.witness is not None:
        out = a
        for v in X.witness:
            out = _contract_vector(v, out)
        return out
    result = Form.zero(a.chart, a.degree - X.degree)
    for idx, c in X.terms.items():
        out = a
        for k in idx:
            out = _contract_vector(VectorField(a.chart, {k: sp.S.One}), out)
        result = result + out * c
    return result


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """Commutator ``[X, Y]`` of derivations."""
    chart = X.chart
    comps = {}
    for k in set(X.components) | set(Y.components) | set(range(chart.dim)):
        val = X(Y.component(k)) - Y(X.component(k))
        if val != 0:
            comps[k] = val
    return VectorField(chart, comps)


def dbar(a: Form, sigma: Form) -> Form:
    """``d a + sigma ^ a``."""
    if sigma.degree != 1:
        raise ValueError("sigma must be a 1-form")
    return d(a) + wedge(sigma, a)


def volume_form(chart: Chart) -> Form:
    """``d^m x = dx^0 ^ ... ^ dx^{m-1}``."""
    return Form(chart, chart.m, {tuple(chart.base_indices): sp.S.One})


def dvol(chart: Chart, mu: int | None = None) -> Form:
    """``d^m x``, or ``d^{m-1}x_mu = i(d/dx^mu) d^m x`` when ``mu`` is given."""
    vol = volume_form(chart)
    if mu is None:
        return vol
    return contract(VectorField.coordinate(chart, chart.base(mu)), vol)


# ----------------------------------------------------------------------------
# sections and pullbacks


class Section:
    """Symbolic section: every non-base coordinate as a function of the base coordinates."""

    def __init__(self, chart: Chart, values: Mapping):
        self.chart = chart
        vals = {}
        for k, v in values.items():
            k = chart.index(k)
            if chart.coordinates[k].role is Role.BASE:
                raise ValueError(f"{chart.coordinates[k].name} is a base coordinate")
            vals[k] = sp.sympify(v)
        fiber = {chart.symbols[k] for k in chart.vertical_indices}
        for k, v in vals.items():
            bad = v.free_symbols & fiber
            if bad:
                raise ValueError(f"section component {chart.names[k]} mentions fiber symbols {sorted(map(str, bad))}")
        missing = [chart.names[k] for k in chart.vertical_indices if k not in vals]
        if missing:
            raise ValueError(f"section does not define {missing}")
        self.values = vals

    @classmethod
    def generic(cls, chart: Chart) -> "Section":
        """Each fiber coordinate replaced by an unknown function of the base."""
        base = chart.base_symbols
        return cls(chart, {k: sp.Function(chart.names[k], real=True)(*base) for k in chart.vertical_indices})

    def substitution(self) -> dict:
        return {self.chart.symbols[k]: v for k, v in self.values.items()}

    def derivative(self, k: int, mu: int) -> sp.Expr:
        return sp.diff(self.values[k], self.chart.base_symbols[mu])

    def __getitem__(self, key) -> sp.Expr:
        return self.values[self.chart.index(key)]


def pullback_by_map(images: Mapping, a: Form, source: Chart) -> Form:
    """Pull ``a`` back along a map given by coordinate images.

    ``images`` sends coordinates of ``a.chart`` (names or symbols) to
    expressions on ``source``; unlisted coordinates must also exist on
    ``source`` and map to themselves.
    """
    target = a.chart
    img = {}
    for k, sym in enumerate(target.symbols):
        e = None
        for key in (sym, target.names[k], k):
            if key in images:
                e = sp.sympify(images[key])
                break
        if e is None:
            e = source.symbol(target.names[k])
        img[k] = e
    subs = {target.symbols[k]: e for k, e in img.items()}
    one_forms = {}

    def dimg(k):
        if k not in one_forms:
            e = img[k]
            terms = {}
            for s in e.free_symbols:
                j = source._sym_index.get(s)
                if j is not None:
                    terms[(j,)] = sp.diff(e, s)
            one_forms[k] = Form(source, 1, _finish(terms), normalize=False)
        return one_forms[k]

    result = Form.zero(source, a.degree)
    for idx, c in a.terms.items():
        term = Form.scalar(source, c.xreplace(subs))
        for k in idx:
            term = wedge(term, dimg(k))
        result = result + term
    return result


def pullback(psi: Section, a: Form) -> Form:
    """``psi^* a`` as a form on the base (expressed in the chart's base differentials)."""
    chart = psi.chart
    images = {chart.symbols[k]: v for k, v in psi.values.items()}
    return pullback_by_map(images, a, chart)


def prolongation(psi: Section) -> MultiVector:
    """Canonical prolongation of ``psi``, as a decomposable m-vector along the section."""
    chart = psi.chart
    vectors = []
    for mu, b in enumerate(chart.base_indices):
        comps = {b: sp.S.One}
        for k in psi.values:
            comps[k] = psi.derivative(k, mu)
        vectors.append(VectorField(chart, comps))
    return MultiVector.decomposable(vectors)


def prolong_contract(psi: Section, a: Form) -> Form:
    """``i(psi^(m)) (a o psi)``."""
    return contract(prolongation(psi), a.subs(psi.substitution()))
