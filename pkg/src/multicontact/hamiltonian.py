"""Hamiltonian side: Legendre map, Theta_H, Hamilton-de Donder-Weyl equations, cocontact flows."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy as sp

from . import lagrangian, linalg, structure, symexpr
from .equations import Equation, EquationSet
from .geometry import (
    Chart,
    ChartError,
    Form,
    MultiVector,
    Role,
    VectorField,
    dvol,
    pullback_by_map,
    volume_form,
)
from .lagrangian import Regularity
from .symexpr import ZeroTest

__all__ = [
    "LegendreMap",
    "LegendreInversionError",
    "NewtonInverse",
    "HamiltonianSystem",
    "legendre_map",
    "invert_legendre",
    "hamiltonian_from_lagrangian",
    "build_theta_H",
    "sigma_H",
    "hdw_equations",
    "hdw_to_lagrangian",
    "cocontact_vector_field",
    "cocontact_vector_field_solved",
]


class LegendreInversionError(RuntimeError):
    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


def check_hamiltonian_chart(chart: Chart) -> None:
    missing = []
    for i in range(chart.n):
        for mu in range(chart.m):
            try:
                chart.momentum(i, mu)
            except ChartError:
                missing.append(f"momentum({i},{mu})")
    if chart.n == 0:
        missing.append("field")
    if not chart.has_role(Role.CONTACT):
        missing.append("contact")
    if missing:
        raise ChartError(f"not a Hamiltonian chart, missing roles: {', '.join(missing)}")


@dataclass
class LegendreMap:
    """``p_i^mu = dL/dy^i_mu``; base, field and contact coordinates map to themselves."""

    source: Chart
    target: Chart
    L: sp.Expr
    images: dict  # target momentum symbol -> expression on source

    def as_table(self) -> dict[str, str]:
        return {str(k): sp.sstr(v) for k, v in self.images.items()}

    def pullback(self, a: Form) -> Form:
        return pullback_by_map(self.images, a, self.source)

    def apply(self, expr) -> sp.Expr:
        """Compose a function on the Hamiltonian chart with the map."""
        return sp.sympify(expr).xreplace(self.images)


def legendre_map(L, chart: Chart) -> LegendreMap:
    lagrangian.check_lagrangian_chart(chart)
    L = sp.sympify(L)
    target = chart.dual()
    images = {}
    for i in range(chart.n):
        for mu in range(chart.m):
            p = target.symbols[target.momentum(i, mu)]
            images[p] = symexpr.simplify(sp.diff(L, chart.symbols[chart.velocity(i, mu)]))
    return LegendreMap(chart, target, L, images)


class NewtonInverse:
    """Numeric inverse of the Legendre map by Newton iteration on the velocities."""

    def __init__(self, leg: LegendreMap, tol: float = 1e-12, max_iter: int = 50, params=None):
        self.leg = leg
        self.tol = tol
        self.max_iter = max_iter
        src = leg.source
        self.velocities = [src.symbols[k] for k in src.indices(Role.VELOCITY)]
        self.others = [s for s in src.symbols if s not in self.velocities]
        pairs = [(src.coordinates[k].field, src.coordinates[k].base) for k in src.indices(Role.VELOCITY)]
        tgt = leg.target
        self.momenta = [tgt.symbols[tgt.momentum(i, mu)] for i, mu in pairs]
        consts = sorted({s for e in leg.images.values() for s in e.free_symbols} - set(src.symbols), key=str)
        self.constants = consts
        args = self.velocities + self.others + consts
        exprs = [leg.images[p] for p in self.momenta]
        jac = [[sp.diff(e, v) for v in self.velocities] for e in exprs]
        self._f = symexpr.compile_expr(sp.Matrix(exprs), args, params)
        self._j = symexpr.compile_expr(sp.Matrix(jac), args, params)

    def __call__(self, point: dict, guess=None) -> dict:
        """Velocities solving ``dL/dv(point, v) = p`` for the momenta given in ``point``.

        ``point`` maps names of the non-velocity source coordinates, the momenta
        and constants to numbers.
        """
        def val(s):
            return float(point[s.name] if s.name in point else point[s])

        p = np.array([val(s) for s in self.momenta])
        rest = [val(s) for s in self.others + self.constants]
        v = np.zeros(len(self.velocities)) if guess is None else np.asarray(guess, float)
        r = None
        for _ in range(self.max_iter):
            r = np.asarray(self._f(*v, *rest), float).ravel() - p
            if np.max(np.abs(r)) < self.tol:
                return {s.name: float(x) for s, x in zip(self.velocities, v)}
            J = np.asarray(self._j(*v, *rest), float).reshape(len(v), len(v))
            v = v - np.linalg.solve(J, r)
        r = np.asarray(self._f(*v, *rest), float).ravel() - p
        if np.max(np.abs(r)) < self.tol:
            return {s.name: float(x) for s, x in zip(self.velocities, v)}
        raise LegendreInversionError("Newton iteration did not converge", v, float(np.max(np.abs(r))))


def _is_quadratic(L, velocities) -> bool:
    try:
        poly = sp.Poly(sp.expand(L), *velocities)
    except sp.PolynomialError:
        return False
    if poly.total_degree() > 2:
        return False
    return all(not c.has(*velocities) for c in poly.coeffs())


def invert_legendre(L, chart: Chart, **newton):
    """Velocities as expressions in the momenta, or a :class:`NewtonInverse`.

    The closed form is produced when ``L`` is at most quadratic in the
    velocities (the map is then affine).
    """
    leg = legendre_map(L, chart)
    reg = lagrangian.regularity(L, chart)
    if reg.verdict is not Regularity.REGULAR:
        raise LegendreInversionError(f"Legendre map is not invertible: {reg}")
    vel_idx = chart.indices(Role.VELOCITY)
    vels = [chart.symbols[k] for k in vel_idx]
    if not _is_quadratic(sp.sympify(L), vels):
        return NewtonInverse(leg, **newton)
    tgt = leg.target
    rows, rhs = [], []
    for k in vel_idx:
        c = chart.coordinates[k]
        p = tgt.symbols[tgt.momentum(c.field, c.base)]
        e = sp.expand(leg.images[p])
        row = [e.coeff(v) for v in vels]
        const = sp.expand(e - sum(a * v for a, v in zip(row, vels)))
        rows.append(row)
        rhs.append(p - const)
    sol, kernel, _ = linalg.solve_linear(rows, rhs, len(vels))
    if kernel:
        raise LegendreInversionError("Legendre map is not invertible")
    return {v: symexpr.simplify(s) for v, s in zip(vels, sol)}


def build_theta_H(H, chart: Chart) -> Form:
    """``Theta_H = -p_i^mu dy^i ^ d^{m-1}x_mu + H d^m x + ds^mu ^ d^{m-1}x_mu``."""
    check_hamiltonian_chart(chart)
    theta = volume_form(chart) * sp.sympify(H)
    for mu in range(chart.m):
        dm1 = dvol(chart, mu)
        theta = theta + Form.differential(chart, chart.contact(mu)) * dm1
        for i in range(chart.n):
            p = chart.symbols[chart.momentum(i, mu)]
            theta = theta - (Form.differential(chart, chart.field_coord(i)) * dm1) * p
    return theta


def sigma_H(H, chart: Chart) -> Form:
    """``(dH/ds^mu) dx^mu``."""
    H = sp.sympify(H)
    terms = {(chart.base(mu),): sp.diff(H, chart.symbols[chart.contact(mu)]) for mu in range(chart.m)}
    return Form(chart, 1, terms).simplify()


@dataclass
class HamiltonianSystem:
    chart: Chart
    H: sp.Expr
    legendre: LegendreMap | None = None
    velocities: dict | None = None  # inverse Legendre map, when built from L
    legendre_check: ZeroTest | None = None

    def __post_init__(self):
        check_hamiltonian_chart(self.chart)
        self.H = sp.sympify(self.H)

    @cached_property
    def theta_H(self) -> Form:
        return build_theta_H(self.H, self.chart)

    @cached_property
    def sigma(self) -> Form:
        return sigma_H(self.H, self.chart)

    def equations(self) -> EquationSet:
        return hdw_equations(self.H, self.chart)


def hamiltonian_from_lagrangian(L, chart: Chart, verify: bool = True) -> HamiltonianSystem:
    """``H = p v - L`` with ``v`` from the inverse Legendre map.

    With ``verify`` the identity ``FL^* Theta_H = Theta_L`` is checked and
    recorded in ``legendre_check``.
    """
    L = sp.sympify(L)
    leg = legendre_map(L, chart)
    inv = invert_legendre(L, chart)
    if isinstance(inv, NewtonInverse):
        raise LegendreInversionError("no closed-form inverse; use invert_legendre for numeric evaluation")
    tgt = leg.target
    H = -L
    for k in chart.indices(Role.VELOCITY):
        c = chart.coordinates[k]
        H += tgt.symbols[tgt.momentum(c.field, c.base)] * chart.symbols[k]
    H = symexpr.simplify(H.xreplace(inv))
    sys = HamiltonianSystem(tgt, H, leg, inv)
    if verify:
        diff = (leg.pullback(sys.theta_H) - lagrangian.build_theta_L(L, chart)).simplify()
        sys.legendre_check = diff.is_zero()
        if sys.legendre_check is ZeroTest.NONZERO:
            raise structure.ConsistencyError("FL^* Theta_H differs from Theta_L")
    return sys


def _section(chart: Chart) -> dict:
    base = chart.base_symbols
    return {k: sp.Function(chart.names[k], real=True)(*base) for k in chart.vertical_indices}


def hdw_equations(H, chart: Chart) -> EquationSet:
    """Hamilton-de Donder-Weyl equations with contact terms.

    Families: ``velocity`` (dy^i/dx^mu = dH/dp_i^mu), ``momentum``
    (dp_i^mu/dx^mu = -(dH/dy^i + p_i^mu dH/ds^mu)) and ``action``
    (ds^mu/dx^mu = p_i^mu dH/dp_i^mu - H).
    """
    check_hamiltonian_chart(chart)
    H = sp.sympify(H)
    base = chart.base_symbols
    f = _section(chart)
    on = {chart.symbols[k]: v for k, v in f.items()}

    def at(e):
        return sp.expand(sp.sympify(e).xreplace(on))

    eqs = []
    for i in range(chart.n):
        yk = chart.field_coord(i)
        for mu in range(chart.m):
            p = chart.symbols[chart.momentum(i, mu)]
            res = sp.diff(f[yk], base[mu]) - at(sp.diff(H, p))
            eqs.append(Equation(f"velocity[{chart.names[yk]},{base[mu]}]", sp.expand(res), "pde", "velocity"))
    for i in range(chart.n):
        yk = chart.field_coord(i)
        res = sp.S.Zero
        src = sp.diff(H, chart.symbols[yk])
        for mu in range(chart.m):
            pk = chart.momentum(i, mu)
            res += sp.diff(f[pk], base[mu])
            src += chart.symbols[pk] * sp.diff(H, chart.symbols[chart.contact(mu)])
        eqs.append(Equation(f"momentum[{chart.names[yk]}]", sp.expand(res + at(src)), "pde", "momentum"))
    div = sum((sp.diff(f[chart.contact(mu)], base[mu]) for mu in range(chart.m)), sp.S.Zero)
    rhs = -H
    for i in range(chart.n):
        for mu in range(chart.m):
            p = chart.symbols[chart.momentum(i, mu)]
            rhs += p * sp.diff(H, p)
    eqs.append(Equation("action", sp.expand(div - at(rhs)), "pde", "action"))
    for g in chart.gauge_names():
        c = at(sp.diff(H, chart.symbol(g)))
        eqs.append(Equation(f"gauge[{g}]", c, "constraint", "gauge"))
    return EquationSet(eqs, base, "Hamilton-de Donder-Weyl equations")


def hdw_to_lagrangian(eqs: EquationSet, L, lchart: Chart) -> EquationSet:
    """Pull HDW equations back along the Legendre map on holonomic sections.

    Momenta become ``dL/dy^i_mu`` evaluated at ``y^i_mu = dy^i/dx^mu``.
    """
    leg = legendre_map(L, lchart)
    hchart = leg.target
    base = lchart.base_symbols
    funcs = {}
    for i in range(lchart.n):
        k = lchart.field_coord(i)
        funcs[lchart.symbols[k]] = sp.Function(lchart.names[k], real=True)(*base)
    for mu in range(lchart.m):
        k = lchart.contact(mu)
        funcs[lchart.symbols[k]] = sp.Function(lchart.names[k], real=True)(*base)
    for i in range(lchart.n):
        y = funcs[lchart.symbols[lchart.field_coord(i)]]
        for mu in range(lchart.m):
            funcs[lchart.symbols[lchart.velocity(i, mu)]] = sp.Derivative(y, base[mu])
    repl = {}
    for i in range(hchart.n):
        for mu in range(hchart.m):
            k = hchart.momentum(i, mu)
            pf = sp.Function(hchart.names[k], real=True)(*base)
            repl[pf] = leg.images[hchart.symbols[k]].xreplace(funcs)
    out = []
    for e in eqs:
        expr = e.expr.xreplace(repl).doit()
        out.append(Equation(e.name, sp.expand(expr), e.kind, e.family))
    return EquationSet(out, base, "HDW equations on holonomic sections")


def cocontact_vector_field(H, chart: Chart, check: bool = True) -> VectorField:
    """``X_H = d_t + H_p d_q - (H_q + p H_s) d_p + (p H_p - H) d_s`` (m = 1).

    With ``check`` the result is compared with the solution of the
    multivector field equations for ``Theta = H dt - p dq + ds``.
    """
    if chart.m != 1:
        raise ChartError("cocontact vector field needs m = 1")
    check_hamiltonian_chart(chart)
    H = sp.sympify(H)
    s = chart.symbols[chart.contact(0)]
    Hs = sp.diff(H, s)
    comps = {chart.base(0): sp.S.One}
    ds = -H
    for i in range(chart.n):
        q = chart.symbols[chart.field_coord(i)]
        p = chart.symbols[chart.momentum(i, 0)]
        comps[chart.field_coord(i)] = sp.diff(H, p)
        comps[chart.momentum(i, 0)] = -(sp.diff(H, q) + p * Hs)
        ds += p * sp.diff(H, p)
    comps[chart.contact(0)] = ds
    X = VectorField(chart, comps).simplify()
    if check:
        Y = cocontact_vector_field_solved(H, chart)
        if (X - Y).simplify().is_zero() is ZeroTest.NONZERO:
            raise structure.ConsistencyError("cocontact vector field disagrees with the field equations")
    return X


def cocontact_vector_field_solved(H, chart: Chart) -> VectorField:
    """Solve ``i(X)Theta = 0``, ``i(X) dbar Theta = 0``, ``i(X) dt = 1`` for X (m = 1)."""
    theta = build_theta_H(H, chart)
    unknowns = {k: sp.Symbol(f"X[{chart.names[k]}]", real=True) for k in chart.vertical_indices}
    comps = {chart.base(0): sp.S.One}
    comps.update(unknowns)
    X = MultiVector.decomposable([VectorField(chart, comps)])
    res = structure.field_residuals_mvf(theta, X, chart, sigma_H(H, chart))
    eqs = [res.first.scalar_value()] + [res.second.terms[k] for k in sorted(res.second.terms)]
    syms = list(unknowns.values())
    rows, rhs = [], []
    for e in eqs:
        e = sp.expand(e)
        row = [e.coeff(u) for u in syms]
        rows.append(row)
        rhs.append(-sp.expand(e - sum(a * u for a, u in zip(row, syms))))
    sol, kernel, _ = linalg.solve_linear(rows, rhs, len(syms))
    if kernel:
        raise structure.StructureError("cocontact field equations do not determine X")
    comps = {chart.base(0): sp.S.One}
    comps.update({k: sol[j] for j, k in enumerate(unknowns)})
    return VectorField(chart, comps)
