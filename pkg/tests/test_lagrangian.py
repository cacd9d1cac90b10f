import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from multicontact import lagrangian, structure, symexpr
from multicontact.geometry import Chart, ChartError, Form, dvol
from multicontact.lagrangian import Regularity
from multicontact.sysfile import bundled

from conftest import field_chart, zero


def _fn(chart, name):
    return sp.Function(name, real=True)(*chart.base_symbols)


def test_energy_and_theta_string(string_chart, string_L):
    c = string_chart
    rho, tau = symexpr.symbol("rho"), symexpr.symbol("tau")
    ut, ux, st_ = c.symbol("u_t"), c.symbol("u_x"), c.symbol("s_t")
    g = c.parse("gamma(t)")
    E = lagrangian.energy(string_L, c)
    assert zero(E - (rho * ut**2 / 2 - tau * ux**2 / 2 + g * st_))
    theta = lagrangian.build_theta_L(string_L, c)
    assert zero(theta.component(["t", "x"]) - E)
    assert zero(theta.component(["u", "x"]) + rho * ut)
    # -p_x du ^ (-dt) = -p_x dt ^ du with p_x = -tau u_x
    assert zero(theta.component(["t", "u"]) - tau * ux)
    assert theta.component(["s_t", "x"]) == 1
    assert theta.component(["t", "s_x"]) == 1


def test_sigma_L(string_chart, string_L):
    sigma = lagrangian.sigma_L(string_L, string_chart)
    assert sigma == Form.differential(string_chart, "t") * string_chart.parse("gamma(t)")


def test_theta_of_zero_lagrangian_is_contact_part():
    c = field_chart(1, 2)
    theta = lagrangian.build_theta_L(0, c)
    expected = sum((Form.differential(c, c.contact(mu)) ^ dvol(c, mu) for mu in range(2)), Form.zero(c, 2))
    assert theta == expected


def test_non_lagrangian_chart_rejected():
    with pytest.raises(ChartError):
        lagrangian.build_theta_L(0, Chart.cocontact())


def test_regularity_examples(string_chart, string_L):
    r = lagrangian.regularity(string_L, string_chart, cross_check=True)
    assert r.verdict is Regularity.REGULAR
    assert r.classification.verdict is structure.Verdict.MULTICONTACT
    mx = bundled("maxwell")
    r = lagrangian.regularity(mx.expr, mx.chart)
    assert (r.verdict, r.rank, r.size) == (Regularity.SINGULAR, 6, 16)
    assert str(r) == "Singular (rank 6 of 16)"
    dg = bundled("degenerate")
    r = lagrangian.regularity(dg.expr, dg.chart)
    assert (r.verdict, r.rank, r.deficiency) == (Regularity.SINGULAR, 0, 1)


def test_herglotz_string(string_chart, string_L):
    c = string_chart
    eqs = lagrangian.herglotz_el_equations(string_L, c)
    t, x = c.base_symbols
    u = _fn(c, "u")
    rho, tau = symexpr.symbol("rho"), symexpr.symbol("tau")
    g = c.parse("gamma(t)")
    expected = rho * (u.diff(t, 2) + g * u.diff(t)) - tau * u.diff(x, 2)
    assert zero(eqs["EL[u]"].expr - expected)
    st_, sx = _fn(c, "s_t"), _fn(c, "s_x")
    lag = rho * u.diff(t) ** 2 / 2 - tau * u.diff(x) ** 2 / 2 - g * st_
    assert zero(eqs["action"].expr - (st_.diff(t) + sx.diff(x) - lag))


def test_herglotz_oscillator(osc_chart, osc_L):
    eqs = lagrangian.herglotz_el_equations(osc_L, osc_chart)
    (t,) = osc_chart.base_symbols
    q = _fn(osc_chart, "q")
    gamma = symexpr.symbol("gamma")
    assert zero(eqs["EL[q]"].expr - (q.diff(t, 2) + gamma * q.diff(t) + q))


def test_herglotz_maxwell_matches_field_equations():
    mx = bundled("maxwell")
    c = mx.chart
    base = c.base_symbols
    eqs = lagrangian.herglotz_el_equations(mx.expr, c)
    mu0 = symexpr.symbol("mu0")
    chi_e, chi_m = symexpr.symbol("chi_e"), symexpr.symbol("chi_m")
    g = [(1 + chi_e) * sp.sqrt(1 + chi_m)] + [-1 / sp.sqrt(1 + chi_m)] * 3
    A = [_fn(c, f"A_{a}") for a in range(4)]
    J = [c.parse(f"J_{a}(x_0, x_1, x_2, x_3)") for a in range(4)]
    gam = [c.parse(f"gamma_{a}(x_0, x_1, x_2, x_3)") for a in range(4)]

    def F(m, n):
        return A[n].diff(base[m]) - A[m].diff(base[n])

    for n in range(4):
        rhs = sum(g[m] * g[n] * (F(m, n).diff(base[m]) + gam[m] * F(m, n)) for m in range(4))
        assert zero(mu0 * eqs[f"EL[A_{n}]"].expr - (mu0 * J[n] - rhs))


@st.composite
def s_free_lagrangians(draw):
    c = field_chart(draw(st.integers(1, 2)), draw(st.integers(1, 2)))
    syms = [c.symbols[k] for k in c.vertical_indices if c.names[k][0] != "s"] + list(c.base_symbols)
    terms = draw(st.lists(st.tuples(st.integers(-3, 3), st.sampled_from(syms), st.sampled_from(syms)), min_size=1, max_size=4))
    return c, sum((a * p * q for a, p, q in terms), sp.S.Zero)


@settings(max_examples=15, deadline=None)
@given(s_free_lagrangians())
def test_s_independent_reduces_to_euler_lagrange(case):
    c, L = case
    her = lagrangian.herglotz_el_equations(L, c)
    el = lagrangian.euler_lagrange_equations(L, c)
    for e in el:
        assert zero(her[e.name].expr + e.expr)


def test_reeb_formula_matches_classification():
    c = field_chart(1, 2)
    L = c.parse("u_t^2/2 - u_x^2/2 + u_t*s_t + u*u_x*s_x - s_t^2")
    formula = lagrangian.reeb_fields_formula(L, c)
    computed = structure.reeb_basis(lagrangian.build_theta_L(L, c), c)
    for a, b in zip(formula, computed):
        assert (a - b).simplify().is_zero() is symexpr.ZeroTest.ZERO
    # the s-velocity coupling tilts R_t away from d/ds_t
    assert formula[0].component("u_t") != 0


def test_sopde_oscillator_unique(osc_chart, osc_L):
    sol = lagrangian.sopde_coefficients(osc_L, osc_chart)
    assert sol.free == [] and sol.notice == ""
    v = {k[0]: sol.value(u) for k, u in sol.unknowns.items()}
    q, qt, s = (osc_chart.symbol(n) for n in ("q", "q_t", "s"))
    gamma = symexpr.symbol("gamma")
    assert v["q"] == qt
    assert zero(v["q_t"] + gamma * qt + q)
    assert zero(v["s"] - osc_L)


def test_sopde_string_semiholonomic_family(string_chart, string_L):
    c = string_chart
    sol = lagrangian.sopde_coefficients(string_L, c)
    val = {(k[0], k[1]): sol.value(u) for k, u in sol.unknowns.items()}
    assert val[("u", 0)] == c.symbol("u_t") and val[("u", 1)] == c.symbol("u_x")
    assert sol.free  # m > 1 leaves a family
    rho, tau = symexpr.symbol("rho"), symexpr.symbol("tau")
    g = c.parse("gamma(t)")
    # damped wave relation between the second-order coefficients
    assert zero(rho * (val[("u_t", 0)] + g * c.symbol("u_t")) - tau * val[("u_x", 1)])
    # the two contact rates add up to L
    assert zero(val[("s_t", 0)] + val[("s_x", 1)] - string_L)


def test_sopde_solution_annihilates_theta(string_chart, string_L):
    c = string_chart
    sol = lagrangian.sopde_coefficients(string_L, c)
    X, unknowns = lagrangian.sopde_multivector(c)
    theta = lagrangian.build_theta_L(string_L, c)
    res = structure.field_residuals_mvf(theta, X, c, lagrangian.sigma_L(string_L, c))
    for e in res.equations():
        assert zero(sp.sympify(e).xreplace(sol.solution))


def test_sopde_singular_notice():
    dg = bundled("degenerate")
    sol = lagrangian.sopde_coefficients(dg.expr, dg.chart)
    assert sol.regular.verdict is Regularity.SINGULAR
    assert "semi-holonomy is not forced" in sol.notice


def test_lagrangian_system_wrapper(osc_chart, osc_L):
    sysL = lagrangian.LagrangianSystem(osc_chart, osc_L)
    assert sysL.regular.verdict is Regularity.REGULAR
    assert sysL.theta_L.degree == 1
    assert sysL.sigma == Form.differential(osc_chart, "t") * symexpr.symbol("gamma")
    assert len(sysL.equations()) == 2
    assert zero(sysL.theta_L.component(["t"]) - sysL.energy)


def test_reeb_formula_rejects_large_systems():
    c = Chart.lagrangian(["x_0", "x_1", "x_2"], ["a", "b", "w"])
    L = sum((v**2 for v in c.symbols if "_" in str(v) and not str(v).startswith("s")), sp.S.Zero)
    with pytest.raises(ValueError):
        lagrangian.reeb_fields_formula(L, c)

