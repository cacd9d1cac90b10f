"""Reeb distribution, classification and field equations for a pair (Theta, omega).

``omega`` is always the base volume ``d^m x`` of the chart, so ``ker omega``
is spanned by the non-base coordinate fields.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import sympy as sp

from . import linalg, symexpr
from .geometry import (
    Chart,
    Form,
    MultiVector,
    Role,
    Section,
    VectorField,
    contract,
    d,
    dbar,
    dvol,
    lie_bracket,
    prolong_contract,
    pullback,
    volume_form,
    wedge,
)
from .symexpr import ZeroTest

__all__ = [
    "StructureError",
    "DissipationFormError",
    "ConsistencyError",
    "Verdict",
    "Reason",
    "Distribution",
    "Classification",
    "vertical_distribution",
    "reeb_distribution",
    "characteristic_distribution",
    "classify",
    "dissipation_form",
    "reeb_basis",
    "is_variational",
    "field_residuals_mvf",
    "field_residuals_section",
    "connection_residuals",
    "dissipated_quantity_residual",
    "horizontal_lifts",
    "formulation_agreement",
    "reeb_theta_kernel",
    "reeb_brackets",
    "sigma_perturbation_detected",
]


class StructureError(ValueError):
    pass


class DissipationFormError(StructureError):
    pass


class ConsistencyError(AssertionError):
    pass


class Verdict(enum.Enum):
    MULTICONTACT = "Multicontact"
    PREMULTICONTACT = "Premulticontact"
    NOT_MULTICONTACT = "NotMulticontact"


class Reason(enum.Enum):
    NO_REEB_DISTRIBUTION = "no Reeb distribution"
    REEB_RANK_MISMATCH = "Reeb distribution has the wrong rank"
    RANK_INDETERMINATE = "rank indeterminate"
    WRONG_DEGREE = "form degree differs from the base dimension"


@dataclass
class Distribution:
    chart: Chart
    basis: list
    generic_rank: int
    constant_rank: bool | None = True
    indeterminate: bool = False

    def matrix(self):
        idx = self.chart.vertical_indices
        return [[v.components.get(k, sp.S.Zero) for k in idx] for v in self.basis]

    def contains(self, v: VectorField) -> ZeroTest:
        """Membership test: ZERO means 'v is in the span' is proved."""
        idx = self.chart.vertical_indices
        if any(k not in idx for k in v.components):
            return ZeroTest.NONZERO
        rows = self.matrix() + [[v.components.get(k, sp.S.Zero) for k in idx]]
        red = linalg.rref(rows, len(idx))
        if red.indeterminate:
            return ZeroTest.UNKNOWN
        return ZeroTest.ZERO if red.rank == self.generic_rank else ZeroTest.NONZERO

    def to_text(self) -> list[str]:
        return [v.to_text() for v in self.basis]


@dataclass
class Classification:
    verdict: Verdict
    k: int | None
    ranks: tuple
    reason: Reason | None = None
    conditions: dict = field(default_factory=dict)
    reeb: list | None = None
    reeb_distribution: Distribution | None = None
    characteristic: Distribution | None = None
    sigma: Form | None = None
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.verdict is not Verdict.NOT_MULTICONTACT

    def __str__(self):
        if self.verdict is Verdict.MULTICONTACT:
            return "Multicontact"
        if self.verdict is Verdict.PREMULTICONTACT:
            return f"Premulticontact k={self.k}"
        return f"NotMulticontact: {self.reason.value}"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "summary": str(self),
            "k": self.k,
            "reason": self.reason.value if self.reason else None,
            "ranks": {"ker_omega": self.ranks[0], "reeb": self.ranks[1], "characteristic": self.ranks[2]},
            "conditions": {str(k): v for k, v in sorted(self.conditions.items())},
            "reeb_basis": [r.to_text() for r in self.reeb] if self.reeb else [],
            "reeb_distribution": self.reeb_distribution.to_text() if self.reeb_distribution else [],
            "characteristic_distribution": self.characteristic.to_text() if self.characteristic else [],
            "constant_rank": None if self.reeb_distribution is None else self.reeb_distribution.constant_rank,
            "sigma": self.sigma.to_text() if self.sigma is not None else None,
            "warnings": list(self.warnings),
        }


# ----------------------------------------------------------------------------
# distributions


def vertical_distribution(chart: Chart) -> Distribution:
    """``ker omega``: every non-base coordinate field."""
    basis = [VectorField.coordinate(chart, k) for k in chart.vertical_indices]
    return Distribution(chart, basis, len(basis), True)


def _rows(forms: list[Form], skip=()) -> list[list]:
    """Stack the components of ``forms`` (one column each) into matrix rows."""
    keys = sorted({k for f in forms for k in f.terms if k not in skip})
    return [[f.terms.get(k, sp.S.Zero) for f in forms] for k in keys]


def _kernel_distribution(chart: Chart, rows: list, columns: list[int]) -> tuple[Distribution, linalg.Reduced]:
    basis, red = linalg.nullspace(rows, len(columns))
    vectors = [VectorField(chart, {columns[j]: c for j, c in enumerate(v) if c != 0}) for v in basis]
    constant = True
    if rows:
        ranks = linalg.numeric_ranks(rows)
        if red.indeterminate:
            constant = None if len(set(ranks)) > 1 or (ranks and ranks[0] != red.rank) else True
        elif any(r != red.rank for r in ranks):
            constant = False
    return Distribution(chart, vectors, len(vectors), constant, red.indeterminate), red


def _reeb_rows(theta: Form) -> list:
    chart = theta.chart
    dtheta = d(theta)
    forms = [contract(VectorField.coordinate(chart, k), dtheta) for k in chart.vertical_indices]
    return _rows(forms, skip={tuple(chart.base_indices)})


def reeb_distribution(theta: Form, chart: Chart | None = None) -> Distribution:
    """Vertical fields ``R`` with ``i(R) dTheta`` a multiple of ``d^m x``."""
    chart = chart or theta.chart
    if theta.degree != chart.m:
        raise StructureError(f"Theta has degree {theta.degree}, expected m = {chart.m}")
    dist, red = _kernel_distribution(chart, _reeb_rows(theta), chart.vertical_indices)
    if red.indeterminate:
        dist.constant_rank = None if dist.constant_rank is not True else dist.constant_rank
    return dist


def characteristic_distribution(theta: Form, chart: Chart | None = None) -> Distribution:
    """``C = ker omega ^ ker Theta ^ ker dTheta``."""
    chart = chart or theta.chart
    dtheta = d(theta)
    cols = chart.vertical_indices
    f0 = [contract(VectorField.coordinate(chart, k), theta) for k in cols]
    f1 = [contract(VectorField.coordinate(chart, k), dtheta) for k in cols]
    rows = _rows(f0) + _rows(f1)
    dist, _ = _kernel_distribution(chart, rows, cols)
    return dist


def _contact_first(chart: Chart) -> list[int]:
    cols = chart.vertical_indices
    return sorted(cols, key=lambda k: (chart.coordinates[k].role is not Role.CONTACT, k))


def _solve_reeb(theta: Form, reeb_rows: list, mu: int) -> VectorField | None:
    """Solve ``i(R) Theta = d^{m-1}x_mu`` with R in the Reeb distribution.

    Unknowns are ordered contact coordinates first, so free directions
    (the characteristic ones) are set to zero on the remaining coordinates.
    """
    chart = theta.chart
    order = _contact_first(chart)
    vert = chart.vertical_indices
    perm = [vert.index(k) for k in order]
    forms = [contract(VectorField.coordinate(chart, k), theta) for k in order]
    target = dvol(chart, mu)
    keys = sorted({k for f in forms for k in f.terms} | set(target.terms))
    rows = [[f.terms.get(key, sp.S.Zero) for f in forms] for key in keys]
    rhs = [target.terms.get(key, sp.S.Zero) for key in keys]
    for row in reeb_rows:
        rows.append([row[j] for j in perm])
        rhs.append(sp.S.Zero)
    try:
        sol, _, _ = linalg.solve_linear(rows, rhs, len(order))
    except linalg.InconsistentSystem:
        return None
    return VectorField(chart, {order[j]: c for j, c in enumerate(sol) if c != 0})


def classify(theta: Form, chart: Chart | None = None) -> Classification:
    """Check the four premulticontact conditions for ``(Theta, d^m x)``."""
    chart = chart or theta.chart
    m = chart.m
    N = len(chart.vertical_indices)
    if theta.degree != m:
        return Classification(Verdict.NOT_MULTICONTACT, None, (N, None, None), Reason.WRONG_DEGREE)
    rows = _reeb_rows(theta)
    reeb_dist, red = _kernel_distribution(chart, rows, chart.vertical_indices)
    char = characteristic_distribution(theta, chart)
    ranks = (N, reeb_dist.generic_rank, char.generic_rank)
    k = char.generic_rank
    notes = []
    if reeb_dist.constant_rank is False or char.constant_rank is False:
        notes.append("rank differs between probe points; constant rank assumed at the generic value")
    cond = {1: True, 2: reeb_dist.generic_rank == m + k, 3: True}
    if red.indeterminate or char.indeterminate:
        return Classification(
            Verdict.NOT_MULTICONTACT, None, ranks, Reason.RANK_INDETERMINATE, cond,
            reeb_distribution=reeb_dist, characteristic=char, warnings=notes,
        )
    reeb = [_solve_reeb(theta, rows, mu) for mu in range(m)]
    cond[4] = all(r is not None for r in reeb)
    if not cond[4]:
        return Classification(
            Verdict.NOT_MULTICONTACT, None, ranks, Reason.NO_REEB_DISTRIBUTION, cond,
            reeb_distribution=reeb_dist, characteristic=char, warnings=notes,
        )
    if not cond[2]:
        return Classification(
            Verdict.NOT_MULTICONTACT, None, ranks, Reason.REEB_RANK_MISMATCH, cond,
            reeb=reeb, reeb_distribution=reeb_dist, characteristic=char, warnings=notes,
        )
    verdict = Verdict.MULTICONTACT if k == 0 else Verdict.PREMULTICONTACT
    out = Classification(verdict, k, ranks, None, cond, reeb, reeb_dist, char, warnings=notes)
    try:
        out.sigma = dissipation_form(theta, chart, out)
    except DissipationFormError as exc:
        out.warnings.append(str(exc))
    return out


def reeb_basis(theta: Form, chart: Chart | None = None) -> list[VectorField]:
    """Reeb fields ``R_mu`` with ``i(R_mu) Theta = d^{m-1}x_mu``."""
    c = classify(theta, chart)
    if not c.ok:
        raise StructureError(f"no Reeb basis: {c}")
    return c.reeb


def dissipation_form(theta: Form, chart: Chart | None = None, classification: Classification | None = None) -> Form:
    """The 1-form ``sigma`` with ``sigma ^ i(R) Theta = i(R) dTheta`` for every Reeb field."""
    chart = chart or theta.chart
    c = classification or classify(theta, chart)
    if not c.ok or c.reeb is None:
        raise DissipationFormError(f"dissipation form does not exist ({c})")
    dtheta = d(theta)
    base = tuple(chart.base_indices)
    gamma = {}
    for mu, R in enumerate(c.reeb):
        val = contract(R, dtheta).simplify()
        extra = [k for k in val.terms if k != base]
        if extra:
            raise DissipationFormError("dissipation form does not exist: i(R)dTheta is not semibasic")
        gamma[(chart.base(mu),)] = val.terms.get(base, sp.S.Zero)
    sigma = Form(chart, 1, gamma).simplify()
    for R in list(c.reeb) + list(c.reeb_distribution.basis):
        lhs = wedge(sigma, contract(R, theta)) - contract(R, dtheta)
        if lhs.simplify().is_zero() is ZeroTest.NONZERO:
            raise DissipationFormError("dissipation form does not exist: inconsistent linear system")
    return sigma


def is_variational(theta: Form, chart: Chart | None = None) -> bool:
    """``i(X) i(Y) Theta = 0`` for all vertical X, Y."""
    chart = chart or theta.chart
    vert = chart.vertical_indices
    first = {k: contract(VectorField.coordinate(chart, k), theta) for k in vert}
    for a in vert:
        for b in vert:
            if b <= a:
                continue
            z = contract(VectorField.coordinate(chart, b), first[a]).simplify().is_zero()
            if z is ZeroTest.NONZERO:
                return False
            if z is ZeroTest.UNKNOWN:
                warnings.warn(f"undecided bivertical component ({chart.names[a]}, {chart.names[b]})")
                return False
    return True


# ----------------------------------------------------------------------------
# field equations


def _sigma(theta: Form, sigma: Form | None) -> Form:
    return dissipation_form(theta) if sigma is None else sigma


@dataclass
class MvfResiduals:
    first: Form
    second: Form
    transversality: sp.Expr

    def __iter__(self):
        return iter((self.first, self.second))

    def equations(self) -> list[sp.Expr]:
        out = [self.first.scalar_value()]
        out += [self.second.terms[k] for k in sorted(self.second.terms)]
        return out


def field_residuals_mvf(theta: Form, X: MultiVector, chart: Chart | None = None, sigma: Form | None = None) -> MvfResiduals:
    """``(i(X) Theta, i(X) dbar Theta)`` together with ``i(X) omega``."""
    chart = chart or theta.chart
    sigma = _sigma(theta, sigma)
    r0 = contract(X, theta).simplify()
    r1 = contract(X, dbar(theta, sigma)).simplify()
    trans = symexpr.simplify(contract(X, volume_form(chart)).scalar_value())
    return MvfResiduals(r0, r1, trans)


@dataclass
class ScalarEquation:
    name: str
    expr: sp.Expr
    kind: str  # "pde", "constraint" or "identity"


@dataclass
class SectionResiduals:
    first: Form
    second: Form
    equations: list
    pullback_equations: list

    def __iter__(self):
        return iter((self.first, self.second))

    @property
    def constraints(self) -> list:
        return [e for e in self.equations if e.kind == "constraint"]


def _kind(e: sp.Expr) -> str:
    if e == 0:
        return "identity"
    return "pde" if e.atoms(sp.Derivative) else "constraint"


def field_residuals_section(
    theta: Form, psi: Section, chart: Chart | None = None, sigma: Form | None = None, check: bool = True
) -> SectionResiduals:
    """``i(psi^(m))(Theta o psi)`` and ``i(psi^(m))(dbar Theta o psi)``.

    The scalar equations are also produced by the pulled-back formulation
    ``psi^* Theta = 0``, ``psi^* i(Y) dbar Theta = 0`` (Y vertical) and both
    lists are compared term by term.
    """
    chart = chart or theta.chart
    sigma = _sigma(theta, sigma)
    dbt = dbar(theta, sigma)
    r0 = prolong_contract(psi, theta).simplify()
    r1 = prolong_contract(psi, dbt).simplify()
    base = tuple(chart.base_indices)
    eqs = [ScalarEquation("theta", r0.scalar_value(), "")]
    for k in chart.vertical_indices:
        eqs.append(ScalarEquation(f"dbar:{chart.names[k]}", r1.component((k,)), ""))
    for e in eqs:
        e.kind = _kind(e.expr)
    pb = [ScalarEquation("theta", pullback(psi, theta).component(base), "")]
    sign = (-1) ** chart.m
    for k in chart.vertical_indices:
        y = VectorField.coordinate(chart, k)
        pb.append(ScalarEquation(f"dbar:{chart.names[k]}", pullback(psi, contract(y, dbt)).component(base), ""))
    for e in pb:
        e.kind = _kind(e.expr)
    if check:
        for j, (a, b) in enumerate(zip(eqs, pb)):
            factor = 1 if j == 0 else sign
            if symexpr.is_zero(a.expr - factor * b.expr) is ZeroTest.NONZERO:
                raise ConsistencyError(f"section formulations disagree on {a.name}")
    return SectionResiduals(r0, r1, eqs, pb)


def horizontal_lifts(chart: Chart, coeffs) -> list[VectorField]:
    """``H_mu = d/dx^mu + coeffs[mu, a] d/dz^a``."""
    lifts = []
    for mu in range(chart.m):
        comps = {chart.base(mu): sp.S.One}
        for (nu, a), c in coeffs.items():
            if nu == mu:
                k = chart.index(a)
                if chart.coordinates[k].role is Role.BASE:
                    raise ValueError("connection coefficients are indexed by fiber coordinates")
                comps[k] = comps.get(k, 0) + sp.sympify(c)
        lifts.append(VectorField(chart, comps))
    return lifts


def connection_contract(lifts: list[VectorField], a: Form) -> Form:
    """``i(nabla) a = sum_mu dx^mu ^ i(H_mu) a``."""
    chart = a.chart
    out = Form.zero(chart, a.degree)
    for mu, h in enumerate(lifts):
        out = out + wedge(Form.differential(chart, chart.base(mu)), contract(h, a))
    return out


@dataclass
class ConnectionResiduals:
    first: Form
    second: Form
    multivector: MultiVector
    mvf: MvfResiduals

    def __iter__(self):
        return iter((self.first, self.second))


def connection_residuals(
    theta: Form, coeffs, chart: Chart | None = None, sigma: Form | None = None, check: bool = True
) -> ConnectionResiduals:
    """Residuals of ``i(nabla)Theta = (m-1)Theta`` and ``i(nabla) dbar Theta = (m-1) dbar Theta``.

    ``coeffs`` maps ``(mu, fiber coordinate)`` to the connection coefficient.
    For variational Theta the scalar content is checked against the
    multivector route on the decomposable field built from the same data.
    """
    chart = chart or theta.chart
    sigma = _sigma(theta, sigma)
    m = chart.m
    lifts = horizontal_lifts(chart, coeffs)
    dbt = dbar(theta, sigma)
    r0 = (connection_contract(lifts, theta) - theta * (m - 1)).simplify()
    r1 = (connection_contract(lifts, dbt) - dbt * (m - 1)).simplify()
    X = MultiVector.decomposable(lifts)
    mv = field_residuals_mvf(theta, X, chart, sigma)
    if check and is_variational(theta, chart):
        vol = volume_form(chart)
        e0 = (r0 - vol * mv.first.scalar_value()).simplify().is_zero()
        e1 = (r1 - wedge(mv.second, vol) * (-1) ** m).simplify().is_zero()
        if ZeroTest.NONZERO in (e0, e1):
            raise ConsistencyError("connection and multivector formulations disagree")
    return ConnectionResiduals(r0, r1, X, mv)


def dissipated_quantity_residual(theta: Form, X: MultiVector, xi: Form, sigma: Form | None = None) -> Form:
    """``i(X) dbar xi`` for an (m-1)-form ``xi``."""
    chart = theta.chart
    if xi.degree != chart.m - 1:
        raise ValueError(f"xi must have degree m-1 = {chart.m - 1}")
    sigma = _sigma(theta, sigma)
    return contract(X, dbar(xi, sigma)).simplify()


@dataclass
class Agreement:
    """Outcome of comparing the section, multivector and connection routes."""

    section_pullback: bool
    connection_multivector: bool
    multivector_section: bool
    equations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.section_pullback and self.connection_multivector and self.multivector_section


def formulation_agreement(theta: Form, psi: Section | None = None, sigma: Form | None = None) -> Agreement:
    """Field equations of ``psi`` obtained three ways, compared symbolically.

    The multivector field and the connection are the ones built from the
    first jet of ``psi`` (coefficients ``d psi^a / dx^mu``), so along ``psi``
    all three routes must produce the same scalar equations.
    """
    chart = theta.chart
    sigma = _sigma(theta, sigma)
    psi = psi or Section.generic(chart)
    try:
        sec = field_residuals_section(theta, psi, chart, sigma, check=True)
        ok_sec = True
    except ConsistencyError:
        sec = field_residuals_section(theta, psi, chart, sigma, check=False)
        ok_sec = False
    coeffs = {(mu, chart.names[k]): psi.derivative(k, mu) for mu in range(chart.m) for k in chart.vertical_indices}
    try:
        con = connection_residuals(theta, coeffs, chart, sigma, check=True)
        ok_con = True
    except ConsistencyError:
        con = connection_residuals(theta, coeffs, chart, sigma, check=False)
        ok_con = False
    at_psi = psi.substitution()
    diffs = [con.mvf.first.scalar_value().xreplace(at_psi) - sec.first.scalar_value()]
    second = con.mvf.second.subs(at_psi)
    for key in set(second.terms) | set(sec.second.terms):
        diffs.append(second.terms.get(key, 0) - sec.second.terms.get(key, 0))
    ok_mv = all(symexpr.is_zero(sp.expand(e)) is not ZeroTest.NONZERO for e in diffs)
    return Agreement(ok_sec, ok_con, ok_mv, [e.expr for e in sec.equations])


def reeb_theta_kernel(theta: Form, reeb: Distribution) -> Distribution:
    """``D^R ^ ker Theta``: combinations of the Reeb distribution basis annihilating Theta."""
    chart = theta.chart
    forms = [contract(v, theta) for v in reeb.basis]
    rows = _rows(forms)
    coeffs, _ = linalg.nullspace(rows, len(reeb.basis))
    vectors = []
    for c in coeffs:
        v = VectorField(chart, {})
        for a, b in zip(c, reeb.basis):
            if a != 0:
                v = v + b * a
        vectors.append(v.simplify())
    return Distribution(chart, vectors, len(vectors))


def reeb_brackets(c: Classification) -> ZeroTest:
    """``[R_mu, R_nu]`` vanishes (multicontact) or lies in C (premulticontact)."""
    result = ZeroTest.ZERO
    reeb = c.reeb or []
    for a in range(len(reeb)):
        for b in range(a + 1, len(reeb)):
            br = lie_bracket(reeb[a], reeb[b]).simplify()
            if c.verdict is Verdict.MULTICONTACT:
                z = br.is_zero()
            else:
                z = ZeroTest.ZERO if br.is_zero() is ZeroTest.ZERO else c.characteristic.contains(br)
            if z is ZeroTest.NONZERO:
                return z
            if z is ZeroTest.UNKNOWN:
                result = z
    return result


def sigma_perturbation_detected(theta: Form, c: Classification, delta=1) -> bool:
    """True when adding ``delta dx^mu`` to sigma breaks ``sigma ^ i(R_mu)Theta = i(R_mu) dTheta``, for every mu."""
    chart = theta.chart
    dtheta = d(theta)
    for mu in range(chart.m):
        bad = c.sigma + Form.differential(chart, chart.base(mu)) * delta
        broken = False
        for R in c.reeb:
            z = (wedge(bad, contract(R, theta)) - contract(R, dtheta)).simplify().is_zero()
            if z is ZeroTest.NONZERO:
                broken = True
                break
        if not broken:
            return False
    return True
