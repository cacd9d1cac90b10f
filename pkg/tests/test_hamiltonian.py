import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from multicontact import hamiltonian, lagrangian, structure, symexpr
from multicontact.geometry import Chart, ChartError, Form, VectorField
from multicontact.hamiltonian import LegendreInversionError, NewtonInverse
from multicontact.symexpr import ZeroTest
from multicontact.sysfile import bundled

from conftest import zero

RHO, TAU, GAMMA = (symexpr.symbol(n) for n in ("rho", "tau", "gamma"))


def test_legendre_map_string(string_chart, string_L):
    leg = hamiltonian.legendre_map(string_L, string_chart)
    pt, px = (leg.target.symbol(n) for n in ("p_t", "p_x"))
    assert leg.images[pt] == RHO * string_chart.symbol("u_t")
    assert leg.images[px] == -TAU * string_chart.symbol("u_x")
    assert leg.as_table() == {"p_t": "rho*u_t", "p_x": "-tau*u_x"}


def test_string_hamiltonian(string_chart, string_H):
    h = string_H.chart
    pt, px, st_ = (h.symbol(n) for n in ("p_t", "p_x", "s_t"))
    g = h.parse("gamma(t)")
    assert zero(string_H.H - (pt**2 / (2 * RHO) - px**2 / (2 * TAU) + g * st_))
    assert string_H.legendre_check is ZeroTest.ZERO
    assert string_H.sigma == Form.differential(h, "t") * g
    assert string_H.velocities[string_chart.symbol("u_x")] == -px / TAU


def test_theta_H_is_multicontact(string_H):
    c = structure.classify(string_H.theta_H, string_H.chart)
    assert c.verdict is structure.Verdict.MULTICONTACT
    assert structure.dissipation_form(string_H.theta_H, string_H.chart) == string_H.sigma


def test_legendre_pulls_theta_H_to_theta_L(osc_chart, osc_L):
    sysH = hamiltonian.hamiltonian_from_lagrangian(osc_L, osc_chart)
    back = sysH.legendre.pullback(sysH.theta_H)
    assert (back - lagrangian.build_theta_L(osc_L, osc_chart)).simplify().is_zero() is ZeroTest.ZERO
    p, q, s = (sysH.chart.symbol(n) for n in ("p", "q", "s"))
    assert zero(sysH.H - (p**2 / 2 + q**2 / 2 + GAMMA * s))


def test_singular_legendre_rejected():
    for name in ("degenerate", "maxwell"):
        sf = bundled(name)
        with pytest.raises(LegendreInversionError):
            hamiltonian.invert_legendre(sf.expr, sf.chart)


def test_newton_inverse_for_quartic_lagrangian():
    c = Chart.lagrangian(["t"], ["q"])
    L = c.parse("q_t^4/4 + q_t^2/2 - q^2/2 - s/5")
    inv = hamiltonian.invert_legendre(L, c)
    assert isinstance(inv, NewtonInverse)
    v = inv({"t": 0.0, "q": 0.3, "s": 0.1, "p": 2.0})["q_t"]
    assert abs(v**3 + v - 2.0) < 1e-12
    assert abs(v - 1.0) < 1e-12
    with pytest.raises(LegendreInversionError):
        hamiltonian.hamiltonian_from_lagrangian(L, c)


def test_newton_inverse_reports_failure():
    c = Chart.lagrangian(["t"], ["q"])
    L = c.parse("q_t^4/4 + q_t^2/2")
    inv = hamiltonian.invert_legendre(L, c, max_iter=2)
    with pytest.raises(LegendreInversionError) as err:
        inv({"t": 0.0, "q": 0.0, "s": 0.0, "p": 1e6})
    assert err.value.last_iterate is not None and err.value.residual > 0


def test_hdw_string_equations(string_H):
    h = string_H.chart
    eqs = hamiltonian.hdw_equations(string_H.H, h)
    assert [e.family for e in eqs] == ["velocity", "velocity", "momentum", "action"]
    t, x = h.base_symbols
    f = {n: sp.Function(n, real=True)(t, x) for n in ("u", "p_t", "p_x", "s_t")}
    g = h.parse("gamma(t)")
    assert zero(eqs["velocity[u,t]"].expr - (f["u"].diff(t) - f["p_t"] / RHO))
    assert zero(eqs["momentum[u]"].expr - (f["p_t"].diff(t) + f["p_x"].diff(x) + g * f["p_t"]))


def test_hdw_pullback_gives_herglotz(string_chart, string_L, string_H):
    eqs = hamiltonian.hdw_to_lagrangian(string_H.equations(), string_L, string_chart)
    her = lagrangian.herglotz_el_equations(string_L, string_chart)
    for e in eqs.family("velocity"):
        assert e.expr == 0
    assert zero(eqs["momentum[u]"].expr - her["EL[u]"].expr)
    assert zero(eqs["action"].expr - her["action"].expr)


def test_gauge_constraint_equation():
    c = Chart.hamiltonian(["t", "x"], ["u"], gauge=["w"])
    H = c.parse("p_t^2/2 + w*u")
    eqs = hamiltonian.hdw_equations(H, c)
    gauge = eqs["gauge[w]"]
    assert gauge.kind == "constraint"
    assert gauge.expr == sp.Function("u", real=True)(*c.base_symbols)


def test_cocontact_oscillator_field(cocontact):
    q, p, s = (cocontact.symbol(n) for n in "qps")
    H = p**2 / 2 + q**2 / 2 + GAMMA * s
    X = hamiltonian.cocontact_vector_field(H, cocontact)
    expected = VectorField(cocontact, {"t": 1, "q": p, "p": -q - GAMMA * p, "s": p**2 / 2 - q**2 / 2 - GAMMA * s})
    assert (X - expected).simplify().is_zero() is ZeroTest.ZERO
    # mechanical energy decays at rate gamma p^2, H itself at rate gamma H
    assert zero(X(p**2 / 2 + q**2 / 2) + GAMMA * p**2)
    assert zero(X(H) + GAMMA * H)


def test_cocontact_requires_one_base(string_H):
    with pytest.raises(ChartError):
        hamiltonian.cocontact_vector_field(string_H.H, string_H.chart)


def test_chart_checks(string_chart):
    with pytest.raises(ChartError):
        hamiltonian.build_theta_H(0, string_chart)


poly_terms = st.lists(
    st.tuples(st.integers(-3, 3), st.sampled_from(["t", "q", "p", "s", "1"]), st.sampled_from(["q", "p", "s", "1"])),
    min_size=1,
    max_size=4,
)


@settings(max_examples=20, deadline=None)
@given(poly_terms)
def test_cocontact_formula_matches_solved(terms):
    c = Chart.cocontact()
    sym = {n: c.symbol(n) for n in "tqps"}
    sym["1"] = sp.S.One
    H = sum((a * sym[u] * sym[v] for a, u, v in terms), sp.S.Zero)
    X = hamiltonian.cocontact_vector_field(H, c, check=False)
    Y = hamiltonian.cocontact_vector_field_solved(H, c)
    assert (X - Y).simplify().is_zero() is ZeroTest.ZERO
    # dissipation law along the flow: dH/dt = dH/dt|explicit - H dH/ds
    t, s = sym["t"], sym["s"]
    assert zero(X(H) - (sp.diff(H, t) - H * sp.diff(H, s)))


def test_newton_inverse_matches_closed_form(string_chart):
    L = string_chart.parse("2*u_t^2 - u_x^2/2 + u_t*u_x/3 - s_t")
    closed = hamiltonian.invert_legendre(L, string_chart)
    newton = NewtonInverse(hamiltonian.legendre_map(L, string_chart))
    point = {"t": 0.0, "x": 0.0, "u": 0.0, "s_t": 0.0, "s_x": 0.0, "p_t": 0.7, "p_x": -1.3}
    got = newton(point)
    subs = {symexpr.symbol(k): v for k, v in point.items()}
    for v, e in closed.items():
        assert np.isclose(got[str(v)], float(e.xreplace(subs)), atol=1e-12)
