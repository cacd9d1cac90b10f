"""Lagrangian side: Theta_L, regularity, Herglotz-Euler-Lagrange equations, SOPDE coefficients."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import sympy as sp

from . import linalg, structure, symexpr
from .equations import Equation, EquationSet
from .geometry import Chart, ChartError, Form, MultiVector, Role, VectorField, dvol, volume_form

__all__ = [
    "LagrangianSystem",
    "Regularity",
    "RegularityResult",
    "SopdeSolution",
    "check_lagrangian_chart",
    "energy",
    "build_theta_L",
    "sigma_L",
    "hessian",
    "regularity",
    "reeb_fields_formula",
    "herglotz_el_equations",
    "euler_lagrange_equations",
    "sopde_coefficients",
    "sopde_multivector",
]


def check_lagrangian_chart(chart: Chart) -> None:
    missing = []
    m, n = chart.m, chart.n
    if n == 0:
        missing.append("field")
    for i in range(n):
        for mu in range(m):
            try:
                chart.velocity(i, mu)
            except ChartError:
                missing.append(f"velocity({i},{mu})")
    if not chart.has_role(Role.CONTACT):
        missing.append("contact")
    if missing:
        raise ChartError(f"not a Lagrangian chart, missing roles: {', '.join(missing)}")


def _vel(chart: Chart, i: int, mu: int) -> sp.Symbol:
    return chart.symbols[chart.velocity(i, mu)]


def energy(L, chart: Chart) -> sp.Expr:
    """``E_L = (dL/dy^i_mu) y^i_mu - L``."""
    L = sp.sympify(L)
    e = -L
    for i in range(chart.n):
        for mu in range(chart.m):
            v = _vel(chart, i, mu)
            e += sp.diff(L, v) * v
    return symexpr.simplify(e)


def build_theta_L(L, chart: Chart) -> Form:
    """``Theta_L = -(dL/dy^i_mu) dy^i ^ d^{m-1}x_mu + E_L d^m x + ds^mu ^ d^{m-1}x_mu``."""
    check_lagrangian_chart(chart)
    L = sp.sympify(L)
    theta = volume_form(chart) * energy(L, chart)
    for mu in range(chart.m):
        dm1 = dvol(chart, mu)
        theta = theta + Form.differential(chart, chart.contact(mu)) * dm1
        for i in range(chart.n):
            p = symexpr.simplify(sp.diff(L, _vel(chart, i, mu)))
            if p != 0:
                theta = theta - (Form.differential(chart, chart.field_coord(i)) * dm1) * p
    return theta


def sigma_L(L, chart: Chart) -> Form:
    """``-(dL/ds^mu) dx^mu``."""
    L = sp.sympify(L)
    terms = {(chart.base(mu),): -sp.diff(L, chart.symbols[chart.contact(mu)]) for mu in range(chart.m)}
    return Form(chart, 1, terms).simplify()


def _velocity_pairs(chart: Chart) -> list[tuple[int, int]]:
    return [(i, mu) for i in range(chart.n) for mu in range(chart.m)]


def hessian(L, chart: Chart) -> sp.Matrix:
    """``d^2 L / dy^i_mu dy^j_nu`` with rows and columns ordered (i, mu)."""
    L = sp.sympify(L)
    pairs = _velocity_pairs(chart)
    syms = [_vel(chart, i, mu) for i, mu in pairs]
    return sp.Matrix(len(syms), len(syms), lambda a, b: symexpr.simplify(sp.diff(L, syms[a], syms[b])))


class Regularity(enum.Enum):
    REGULAR = "Regular"
    SINGULAR = "Singular"
    UNKNOWN = "Unknown"


@dataclass
class RegularityResult:
    verdict: Regularity
    rank: int
    size: int
    classification: object = None

    @property
    def deficiency(self) -> int:
        return self.size - self.rank

    def __str__(self):
        if self.verdict is Regularity.SINGULAR:
            return f"Singular (rank {self.rank} of {self.size})"
        return self.verdict.value


def regularity(L, chart: Chart, cross_check: bool = False) -> RegularityResult:
    """Regularity of the velocity Hessian.

    With ``cross_check`` the Regular verdict is confirmed by classifying
    ``Theta_L`` (which must then be multicontact).
    """
    check_lagrangian_chart(chart)
    W = hessian(L, chart)
    red = linalg.rref(W.tolist(), W.shape[1])
    if red.indeterminate:
        verdict = Regularity.UNKNOWN
    elif red.rank == W.shape[0]:
        verdict = Regularity.REGULAR
    else:
        verdict = Regularity.SINGULAR
    out = RegularityResult(verdict, red.rank, W.shape[0])
    if cross_check and verdict is Regularity.REGULAR:
        c = structure.classify(build_theta_L(L, chart), chart)
        out.classification = c
        if c.verdict is not structure.Verdict.MULTICONTACT:
            raise structure.ConsistencyError(f"regular Lagrangian but Theta_L classified as {c}")
    return out


def reeb_fields_formula(L, chart: Chart) -> list[VectorField]:
    """``R_mu = d/ds^mu - W^{ji}_{gamma nu} (d^2 L/ds^mu dy^j_gamma) d/dy^i_nu`` for regular L."""
    L = sp.sympify(L)
    pairs = _velocity_pairs(chart)
    W = hessian(L, chart)
    if len(pairs) > 8:
        raise ValueError("closed-form Hessian inversion is limited to n*m <= 8")
    Winv = W.inv(method="ADJ").applyfunc(symexpr.simplify)
    out = []
    for mu in range(chart.m):
        s = chart.symbols[chart.contact(mu)]
        mixed = sp.Matrix([sp.diff(L, s, _vel(chart, j, g)) for j, g in pairs])
        coef = Winv * mixed
        comps = {chart.contact(mu): sp.S.One}
        for a, (i, nu) in enumerate(pairs):
            comps[chart.velocity(i, nu)] = -symexpr.simplify(coef[a])
        out.append(VectorField(chart, comps))
    return out


def _substitute_section(expr, chart: Chart, funcs: dict) -> sp.Expr:
    base = chart.base_symbols
    repl = {}
    for i in range(chart.n):
        f = funcs[chart.field_coord(i)]
        repl[chart.symbols[chart.field_coord(i)]] = f
        for mu in range(chart.m):
            repl[_vel(chart, i, mu)] = sp.Derivative(f, base[mu])
    for mu in range(chart.m):
        repl[chart.symbols[chart.contact(mu)]] = funcs[chart.contact(mu)]
    return sp.sympify(expr).xreplace(repl)


def _section_functions(chart: Chart) -> dict:
    base = chart.base_symbols
    ks = [chart.field_coord(i) for i in range(chart.n)] + [chart.contact(mu) for mu in range(chart.m)]
    return {k: sp.Function(chart.names[k], real=True)(*base) for k in ks}


def herglotz_el_equations(L, chart: Chart) -> EquationSet:
    """``D_mu(dL/dy^i_mu) - dL/dy^i - (dL/ds^mu)(dL/dy^i_mu) = 0`` and ``ds^mu/dx^mu - L = 0``."""
    check_lagrangian_chart(chart)
    L = sp.sympify(L)
    base = chart.base_symbols
    funcs = _section_functions(chart)
    eqs = []
    for i in range(chart.n):
        y = chart.symbols[chart.field_coord(i)]
        lhs = sp.S.Zero
        rhs = sp.diff(L, y)
        for mu in range(chart.m):
            p = sp.diff(L, _vel(chart, i, mu))
            lhs += sp.diff(_substitute_section(p, chart, funcs), base[mu])
            rhs += sp.diff(L, chart.symbols[chart.contact(mu)]) * p
        res = sp.expand(lhs - _substitute_section(rhs, chart, funcs))
        eqs.append(Equation(f"EL[{chart.names[chart.field_coord(i)]}]", res, "pde", "euler-lagrange"))
    div = sum((sp.diff(funcs[chart.contact(mu)], base[mu]) for mu in range(chart.m)), sp.S.Zero)
    eqs.append(Equation("action", sp.expand(div - _substitute_section(L, chart, funcs)), "pde", "action"))
    return EquationSet(eqs, base, "Herglotz-Euler-Lagrange equations")


def euler_lagrange_equations(L, chart: Chart) -> EquationSet:
    """Classical ``dL/dy^i - D_mu(dL/dy^i_mu) = 0`` (no contact terms)."""
    L = sp.sympify(L)
    base = chart.base_symbols
    funcs = _section_functions(chart)
    eqs = []
    for i in range(chart.n):
        y = chart.symbols[chart.field_coord(i)]
        res = _substitute_section(sp.diff(L, y), chart, funcs)
        for mu in range(chart.m):
            res -= sp.diff(_substitute_section(sp.diff(L, _vel(chart, i, mu)), chart, funcs), base[mu])
        eqs.append(Equation(f"EL[{chart.names[chart.field_coord(i)]}]", sp.expand(res), "pde", "euler-lagrange"))
    return EquationSet(eqs, base, "Euler-Lagrange equations")


# ----------------------------------------------------------------------------
# SOPDE multivector fields


@dataclass
class SopdeSolution:
    """Coefficients of ``X = Lambda_mu (d_mu + F^i_mu d_y^i + G^i_{nu mu} d_{y^i_nu} + g^nu_mu d_{s^nu})``.

    ``F``, ``G`` and ``g`` map unknown symbols to their solved values; the
    symbols in ``free`` stay arbitrary.
    """

    regular: RegularityResult
    unknowns: dict
    solution: dict
    free: list
    residuals: list = field(default_factory=list)
    notice: str = ""

    def value(self, sym) -> sp.Expr:
        return self.solution.get(sym, sym)


def sopde_multivector(chart: Chart, prefix: str = "X") -> tuple[MultiVector, dict]:
    """Generic decomposable m-vector with unknown coefficient symbols."""
    unknowns = {}
    vectors = []
    for mu in range(chart.m):
        bname = chart.names[chart.base(mu)]
        comps = {chart.base(mu): sp.S.One}
        for k in chart.vertical_indices:
            sym = sp.Symbol(f"{prefix}[{chart.names[k]},{bname}]", real=True)
            unknowns[(chart.names[k], mu)] = sym
            comps[k] = sym
        vectors.append(VectorField(chart, comps))
    return MultiVector.decomposable(vectors), unknowns


def _linear_system(eqs, unknowns):
    rows, rhs = [], []
    for e in eqs:
        e = sp.expand(e)
        row = [e.coeff(u) for u in unknowns]
        rest = sp.expand(e - sum(c * u for c, u in zip(row, unknowns)))
        if any(rest.has(u) for u in unknowns) or any(c.has(u) for c in row for u in unknowns):
            raise ValueError("equations are not linear in the unknowns")
        rows.append(row)
        rhs.append(-rest)
    return rows, rhs


def sopde_coefficients(L, chart: Chart) -> SopdeSolution:
    """Solve ``i(X)Theta_L = 0``, ``i(X) dbar Theta_L = 0`` for a generic transverse X.

    First the velocity-direction equations fix ``F^i_mu`` (semi-holonomy for
    regular L), then the remaining equations are linear in ``G`` and ``g``.
    For m > 1 the remaining freedom is reported in ``free``.
    """
    check_lagrangian_chart(chart)
    L = sp.sympify(L)
    reg = regularity(L, chart)
    theta = build_theta_L(L, chart)
    X, unknowns = sopde_multivector(chart)
    res = structure.field_residuals_mvf(theta, X, chart, sigma_L(L, chart))
    r0 = res.first.scalar_value()
    r1 = res.second
    F = [unknowns[(chart.names[chart.field_coord(i)], mu)] for i in range(chart.n) for mu in range(chart.m)]
    others = [u for u in unknowns.values() if u not in F]
    vel_eqs = [r1.component((chart.velocity(i, nu),)) for i in range(chart.n) for nu in range(chart.m)]
    vel_eqs = [e for e in vel_eqs if e != 0]
    notice = ""
    solution = {}
    free = []
    rows, rhs = _linear_system(vel_eqs, F)
    try:
        solF, kerF, redF = linalg.solve_linear(rows, rhs, len(F)) if rows else ([sp.S.Zero] * len(F), None, None)
    except linalg.InconsistentSystem:
        return SopdeSolution(reg, unknowns, {}, [], [r0] + list(r1.terms.values()), "no solution for F")
    if rows:
        piv = set(redF.pivots)
        for j, u in enumerate(F):
            if j in piv:
                expr = solF[j]
                for c in range(len(F)):
                    if c not in piv:
                        row = redF.pivots.index(j)
                        expr -= redF.rows[row][c] * F[c]
                solution[u] = symexpr.simplify(expr)
            else:
                free.append(u)
    else:
        free += F
    if reg.verdict is not Regularity.REGULAR:
        notice = f"Singular Lagrangian ({reg}); semi-holonomy is not forced"
    rest = [r0] + [r1.terms[k] for k in sorted(r1.terms)]
    rest = [symexpr.simplify(sp.sympify(e).xreplace(solution)) for e in rest]
    rest = [e for e in rest if e != 0]
    targets = others + free
    try:
        rows, rhs = _linear_system(rest, targets)
    except ValueError:
        return SopdeSolution(reg, unknowns, solution, free, rest, notice or "nonlinear residual system")
    try:
        sol, _, red = linalg.solve_linear(rows, rhs, len(targets)) if rows else ([sp.S.Zero] * len(targets), None, None)
    except linalg.InconsistentSystem:
        return SopdeSolution(reg, unknowns, solution, free, rest, notice or "no solution for G, g")
    if rows:
        piv = red.pivots
        free = []
        for j, u in enumerate(targets):
            if j in piv:
                row = piv.index(j)
                expr = red.rows[row][len(targets)]
                for c in range(len(targets)):
                    if c not in piv:
                        expr -= red.rows[row][c] * targets[c]
                solution[u] = symexpr.simplify(expr)
            else:
                free.append(u)
    else:
        free = list(targets)
    solution = {u: symexpr.simplify(v.xreplace(solution)) for u, v in solution.items()}
    return SopdeSolution(reg, unknowns, solution, free, [], notice)


@dataclass
class LagrangianSystem:
    chart: Chart
    L: sp.Expr

    def __post_init__(self):
        check_lagrangian_chart(self.chart)
        self.L = sp.sympify(self.L)

    @cached_property
    def theta_L(self) -> Form:
        return build_theta_L(self.L, self.chart)

    @cached_property
    def energy(self) -> sp.Expr:
        return energy(self.L, self.chart)

    @cached_property
    def sigma(self) -> Form:
        return sigma_L(self.L, self.chart)

    @cached_property
    def hessian(self) -> sp.Matrix:
        return hessian(self.L, self.chart)

    @cached_property
    def regular(self) -> RegularityResult:
        return regularity(self.L, self.chart)

    def equations(self) -> EquationSet:
        return herglotz_el_equations(self.L, self.chart)
