"""Numerical integration of the derived equations and numerical checks on the results.

m = 1: classical RK4 on the cocontact flow ``X_H``.
m = 2: method of lines for string-shaped Hamiltonians
``H = p_t^2/(2 rho) - p_x^2/(2 tau) + gamma(t) s_t`` (second-order central
differences in x, RK4 in t), with the contact variables advanced under the
gauge choice ``s_x = 0``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import sympy as sp
from scipy import integrate as spi

from . import hamiltonian, lagrangian, symexpr
from .equations import EquationSet
from .geometry import Chart
from .report import write_json

__all__ = [
    "Parameters",
    "OdeState",
    "GridState",
    "Trajectory",
    "WaveTrajectory",
    "RunReport",
    "IntegrationError",
    "CFLError",
    "InstabilityError",
    "integrate_ode",
    "integrate_wave",
    "wave_coefficients",
    "mode_amplitude",
    "discrete_energy",
    "residual_norms",
    "residual_norms_analytic",
    "action_identity_check",
    "herglotz_variation_check",
    "observable_rate_residual",
    "action_quadrature",
    "rk4_scalar_reference",
]


class IntegrationError(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(f"{message} (step {step})" if step is not None else message)
        self.step = step


class InstabilityError(IntegrationError):
    pass


class CFLError(ValueError):
    pass


@dataclass
class Parameters:
    """Numeric values for constants and implementations for opaque functions."""

    constants: dict = field(default_factory=dict)
    functions: dict = field(default_factory=dict)

    def bind(self, expr) -> sp.Expr:
        e = sp.sympify(expr)
        e = symexpr.substitute_params(e, self.functions)
        repl = {symexpr.symbol(k): sp.Float(v) if not isinstance(v, sp.Basic) else v
                for k, v in self.constants.items()}
        return e.xreplace(repl)

    def compile(self, expr, args):
        return symexpr.compile_expr(self.bind(expr), args, self.functions)

    def value(self, name: str) -> float:
        return float(self.constants[name])


# ----------------------------------------------------------------------------
# m = 1


@dataclass
class OdeState:
    t: float
    values: dict


@dataclass
class Trajectory:
    names: list
    t: np.ndarray
    y: np.ndarray  # (steps+1, len(names))
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.y[:, self.names.index(name)]

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def to_csv(self, path, every: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + self.names)
            for k in range(0, len(self.t), every):
                w.writerow([repr(float(self.t[k]))] + [repr(float(v)) for v in self.y[k]])


def _rk4(f, t0, y0, dt, steps, check=None):
    ys = np.empty((steps + 1, len(y0)))
    ys[0] = y0
    y = np.array(y0, float)
    t = t0
    for n in range(steps):
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt / 2 * k1)
        k3 = f(t + dt / 2, y + dt / 2 * k2)
        k4 = f(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (n + 1) * dt
        if not np.all(np.isfinite(y)):
            raise IntegrationError("non-finite state", n + 1)
        if check is not None:
            check(n + 1, y)
        ys[n + 1] = y
    return ys


def _flow_function(vector_field, chart: Chart, params: Parameters):
    names = [chart.names[k] for k in chart.vertical_indices]
    t = chart.base_symbols[0]
    args = [t] + [chart.symbols[k] for k in chart.vertical_indices]
    comps = [params.compile(vector_field.component(k), args) for k in chart.vertical_indices]

    def f(tt, y):
        return np.array([float(c(tt, *y)) for c in comps])

    return names, f


def integrate_ode(system, initial: OdeState, t_end: float, dt: float, params: Parameters | None = None) -> Trajectory:
    """RK4 trajectory of the cocontact flow of an m = 1 Hamiltonian system.

    ``system`` is a :class:`~multicontact.hamiltonian.HamiltonianSystem`, or a
    Lagrangian system (converted through the Legendre map first).
    """
    params = params or Parameters()
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(system, lagrangian.LagrangianSystem):
        system = hamiltonian.hamiltonian_from_lagrangian(system.L, system.chart)
    chart = system.chart
    if chart.m != 1:
        raise ValueError("integrate_ode needs m = 1")
    X = hamiltonian.cocontact_vector_field(system.H, chart, check=False)
    names, f = _flow_function(X, chart, params)
    y0 = np.array([float(initial.values[n]) for n in names])
    steps = int(round((t_end - initial.t) / dt))
    ys = _rk4(f, initial.t, y0, dt, steps)
    t = initial.t + dt * np.arange(steps + 1)
    return Trajectory(names, t, ys, {"dt": dt, "steps": steps, "method": "rk4"})


# ----------------------------------------------------------------------------
# m = 2 string


@dataclass
class WaveCoefficients:
    rho: float
    tau: float
    gamma: object  # callable of t

    @property
    def c(self) -> float:
        return math.sqrt(self.tau / self.rho)


def wave_coefficients(system, params: Parameters) -> WaveCoefficients:
    """Read ``rho``, ``tau``, ``gamma(t)`` off a string-shaped Hamiltonian."""
    if isinstance(system, lagrangian.LagrangianSystem):
        system = hamiltonian.hamiltonian_from_lagrangian(system.L, system.chart)
    chart = system.chart
    if chart.m != 2 or chart.n != 1:
        raise ValueError("wave integration needs one field over two base coordinates")
    H = system.H
    pt = chart.symbols[chart.momentum(0, 0)]
    px = chart.symbols[chart.momentum(0, 1)]
    st = chart.symbols[chart.contact(0)]
    inv_rho = symexpr.simplify(sp.diff(H, pt, 2))
    inv_tau = symexpr.simplify(-sp.diff(H, px, 2))
    g = symexpr.simplify(sp.diff(H, st))
    model = pt**2 * inv_rho / 2 - px**2 * inv_tau / 2 + g * st
    fiber = {chart.symbols[k] for k in chart.vertical_indices}
    t = chart.base_symbols[0]
    if (
        symexpr.is_zero(H - model) is not symexpr.ZeroTest.ZERO
        or (inv_rho.free_symbols | inv_tau.free_symbols) & (fiber | set(chart.base_symbols))
        or g.free_symbols & (fiber | {chart.base_symbols[1]})
    ):
        raise ValueError("Hamiltonian is not of the string form p_t^2/(2 rho) - p_x^2/(2 tau) + gamma(t) s_t")
    rho = 1.0 / float(params.bind(inv_rho))
    tau = 1.0 / float(params.bind(inv_tau))
    gf = params.compile(g, [t])
    return WaveCoefficients(rho, tau, lambda tt: float(gf(tt)))


@dataclass
class GridState:
    t: float
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    s: np.ndarray
    bc: str = "periodic"

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @classmethod
    def uniform(cls, J: int, x0: float, x1: float, u0, v0=None, bc: str = "periodic") -> "GridState":
        """Grid of J points; periodic grids omit x1, Dirichlet grids omit both ends."""
        if bc == "periodic":
            x = x0 + (x1 - x0) * np.arange(J) / J
        elif bc == "dirichlet0":
            x = x0 + (x1 - x0) * np.arange(1, J + 1) / (J + 1)
        else:
            raise ValueError(f"unknown boundary condition {bc!r}")
        u = np.asarray(u0(x), float) * np.ones(J)
        v = np.zeros(J) if v0 is None else np.asarray(v0(x), float) * np.ones(J)
        return cls(0.0, x, u, v, np.zeros(J), bc)


def _pad(u: np.ndarray, bc: str, w: int) -> np.ndarray:
    if bc == "periodic":
        return np.concatenate([u[-w:], u, u[:w]])
    # odd reflection about the walls, which sit one grid step outside the array
    left = [0.0] + [-u[k - 1] for k in range(1, w)]
    right = [0.0] + [-u[-k] for k in range(1, w)]
    return np.concatenate([left[::-1], u, right])


def laplacian2(u, dx, bc):
    p = _pad(u, bc, 1)
    return (p[2:] - 2 * p[1:-1] + p[:-2]) / dx**2


def dx2(u, dx, bc):
    p = _pad(u, bc, 1)
    return (p[2:] - p[:-2]) / (2 * dx)


def dx4(u, dx, bc):
    p = _pad(u, bc, 2)
    return (-p[4:] + 8 * p[3:-1] - 8 * p[1:-3] + p[:-4]) / (12 * dx)


def dxx4(u, dx, bc):
    p = _pad(u, bc, 2)
    return (-p[4:] + 16 * p[3:-1] - 30 * p[2:-2] + 16 * p[1:-3] - p[:-4]) / (12 * dx**2)


@dataclass
class WaveTrajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray  # (steps+1, J)
    v: np.ndarray
    s: np.ndarray
    coeffs: WaveCoefficients
    bc: str
    meta: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def to_csv(self, path, every: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "u", "p_t", "p_x", "s_t", "s_x"])
            rho, tau = self.coeffs.rho, self.coeffs.tau
            for k in range(0, len(self.t), every):
                px = -tau * dx4(self.u[k], self.dx, self.bc)
                for j in range(len(self.x)):
                    w.writerow([repr(float(self.t[k])), repr(float(self.x[j])), repr(float(self.u[k, j])),
                                repr(float(rho * self.v[k, j])), repr(float(px[j])), repr(float(self.s[k, j])), "0.0"])


def integrate_wave(
    system,
    initial: GridState,
    t_end: float,
    dt: float | None = None,
    params: Parameters | None = None,
    cfl: float | None = None,
    max_cfl: float = 0.9,
    growth_limit: float = 1e6,
) -> WaveTrajectory:
    """Method-of-lines RK4 for ``u_t = v``, ``v_t = (tau/rho) u_xx - gamma(t) v``.

    The contact variable evolves by ``ds_t/dt = rho v^2/2 - tau u_x^2/2 - gamma s_t``
    (the HDW action equation with ``s_x = 0``).  Either ``dt`` or a CFL number
    is given; CFL numbers above ``max_cfl`` are refused.
    """
    params = params or Parameters()
    co = wave_coefficients(system, params)
    h = initial.dx
    if dt is None:
        if cfl is None:
            raise ValueError("give dt or cfl")
        dt = cfl * h / co.c
    steps = int(math.ceil((t_end - initial.t) / dt - 1e-9))
    dt = (t_end - initial.t) / steps
    number = co.c * dt / h
    if number > max_cfl:
        raise CFLError(f"CFL number {number:.4g} exceeds {max_cfl}")
    J = len(initial.x)
    bc = initial.bc
    c2 = co.tau / co.rho
    rho, tau = co.rho, co.tau
    gam = co.gamma

    def f(t, y):
        u, v, s = y[:J], y[J:2 * J], y[2 * J:]
        g = gam(t)
        ux = dx2(u, h, bc)
        return np.concatenate([v, c2 * laplacian2(u, h, bc) - g * v, rho * v**2 / 2 - tau * ux**2 / 2 - g * s])

    y0 = np.concatenate([initial.u, initial.v, initial.s])
    norm0 = max(np.max(np.abs(y0[:2 * J])), 1e-300)

    def check(n, y):
        if np.max(np.abs(y[:2 * J])) > growth_limit * norm0:
            raise InstabilityError("solution norm grew beyond the instability threshold", n)

    ys = _rk4(f, initial.t, y0, dt, steps, check)
    t = initial.t + dt * np.arange(steps + 1)
    return WaveTrajectory(t, initial.x.copy(), ys[:, :J], ys[:, J:2 * J], ys[:, 2 * J:], co, bc,
                          {"dt": dt, "dx": h, "J": J, "steps": steps, "cfl": number, "method": "mol-rk4"})


def mode_amplitude(traj: WaveTrajectory, k: float) -> np.ndarray:
    """Coefficient of ``sin(k x)`` in u at every step (discrete projection)."""
    basis = np.sin(k * traj.x)
    return traj.u @ basis / (basis @ basis)


def discrete_energy(traj: WaveTrajectory) -> np.ndarray:
    """``sum (rho v^2/2 + tau (forward u_x)^2/2) dx``, conserved by the semi-discrete scheme when gamma = 0."""
    h = traj.dx
    if traj.bc == "periodic":
        du = (np.roll(traj.u, -1, axis=1) - traj.u) / h
    else:
        padded = np.pad(traj.u, ((0, 0), (1, 1)))
        du = np.diff(padded, axis=1) / h
    return (traj.coeffs.rho * np.sum(traj.v**2, axis=1) / 2 + traj.coeffs.tau * np.sum(du**2, axis=1) / 2) * h


def rk4_scalar_reference(omega2: float, gamma, a0: float, t_end: float, dt: float):
    """Mode ODE ``a'' + gamma(t) a' + omega2 a = 0`` with a(0)=a0, a'(0)=0 by RK4."""
    def f(t, y):
        return np.array([y[1], -gamma(t) * y[1] - omega2 * y[0]])

    steps = int(round(t_end / dt))
    ys = _rk4(f, 0.0, np.array([a0, 0.0]), dt, steps)
    return dt * np.arange(steps + 1), ys[:, 0]


# ----------------------------------------------------------------------------
# residuals


@dataclass
class RunReport:
    series: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"series": self.series, "meta": self.meta}

    def write(self, path) -> None:
        write_json(path, self.to_dict())


def _time_derivative(arr: np.ndarray, order: int, dt: float, k: int) -> np.ndarray:
    if order == 0:
        return arr[k]
    if order == 1:
        return (arr[k + 1] - arr[k - 1]) / (2 * dt)
    if order == 2:
        return (arr[k + 1] - 2 * arr[k] + arr[k - 1]) / dt**2
    raise ValueError("time derivatives above order 2 are not supported")


def _space_derivative(arr: np.ndarray, order: int, dx: float, bc: str) -> np.ndarray:
    if order == 0:
        return arr
    if order == 1:
        return dx4(arr, dx, bc)
    if order == 2:
        return dxx4(arr, dx, bc)
    raise ValueError("space derivatives above order 2 are not supported")


def _wave_fields(traj: WaveTrajectory, names: set) -> dict:
    rho, tau = traj.coeffs.rho, traj.coeffs.tau
    out = {}
    for n in names:
        if n == "u":
            out[n] = traj.u
        elif n in ("p_t",):
            out[n] = rho * traj.v
        elif n in ("p_x",):
            out[n] = np.array([-tau * dx4(row, traj.dx, traj.bc) for row in traj.u])
        elif n == "s_t":
            out[n] = traj.s
        elif n == "s_x":
            out[n] = np.zeros_like(traj.s)
        else:
            raise KeyError(f"trajectory has no field {n!r}")
    return out


def residual_norms(
    traj: WaveTrajectory,
    equations: EquationSet,
    params: Parameters | None = None,
    steps: list | None = None,
    field_map: dict | None = None,
) -> RunReport:
    """L-infinity and L2 norms of every equation residual at the requested steps.

    Jets are evaluated by finite differences: fourth-order central in x,
    second-order central in t.  ``field_map`` renames unknowns to the
    trajectory's names (u, p_t, p_x, s_t, s_x).
    """
    params = params or Parameters()
    field_map = field_map or {}
    if steps is None:
        steps = list(range(2, len(traj.t) - 2, max(1, (len(traj.t) - 4) // 10)))
    t_sym, x_sym = equations.base
    report = RunReport(meta={"dt": traj.dt, "dx": traj.dx, "steps": steps})
    for eq in equations:
        expr, keys = equations.jet_form(eq.expr)
        syms = list(keys)
        f = params.compile(expr, [t_sym, x_sym] + syms)
        needed = {field_map.get(keys[s][0], keys[s][0]) for s in syms}
        fields = _wave_fields(traj, needed)
        linf, l2 = [], []
        for k in steps:
            vals = []
            for s in syms:
                name, idx = keys[s]
                arr = fields[field_map.get(name, name)]
                nt, nx = idx.count(0), idx.count(1)
                slab = _time_derivative(arr, nt, traj.dt, k)
                vals.append(_space_derivative(slab, nx, traj.dx, traj.bc))
            r = np.asarray(f(traj.t[k], traj.x, *vals), float) * np.ones_like(traj.x)
            linf.append(float(np.max(np.abs(r))))
            l2.append(float(np.sqrt(np.sum(r**2) * traj.dx)))
        report.series[f"{eq.name}:linf"] = linf
        report.series[f"{eq.name}:l2"] = l2
    report.series["t"] = [float(traj.t[k]) for k in steps]
    return report


def residual_norms_analytic(
    equations: EquationSet, section: dict, t_values, x_values, params: Parameters | None = None
) -> dict:
    """Max residual of each equation for an exact section ``{unknown name: expr(t, x)}``."""
    params = params or Parameters()
    t_sym, x_sym = equations.base
    out = {}
    repl = {}
    for eq in equations:
        for a in eq.expr.atoms(sp.core.function.AppliedUndef):
            if a.func.__name__ in section and list(a.args) == equations.base:
                repl[a] = sp.sympify(section[a.func.__name__])
    T, X = np.meshgrid(np.asarray(t_values, float), np.asarray(x_values, float), indexing="ij")
    for eq in equations:
        e = eq.expr.xreplace(repl).doit()
        f = params.compile(e, [t_sym, x_sym])
        r = np.asarray(f(T, X), float) * np.ones_like(T)
        out[eq.name] = float(np.max(np.abs(r)))
    return out


def action_identity_check(traj, L=None, chart: Chart | None = None, params: Parameters | None = None) -> float:
    """Max over the interior of ``|div s - L o psi|``.

    m = 1: ``traj`` is a :class:`Trajectory` on the cocontact chart and ``L``
    is given on the Lagrangian ``chart``; velocities come from the flow.
    m = 2: ``traj`` is a :class:`WaveTrajectory` and ``L`` is the string
    Lagrangian rebuilt from its coefficients.
    """
    params = params or Parameters()
    if isinstance(traj, WaveTrajectory):
        co = traj.coeffs
        errs = []
        for k in range(1, len(traj.t) - 1):
            sdot = (traj.s[k + 1] - traj.s[k - 1]) / (2 * traj.dt)
            ux = dx4(traj.u[k], traj.dx, traj.bc)
            lag = co.rho * traj.v[k] ** 2 / 2 - co.tau * ux**2 / 2 - co.gamma(traj.t[k]) * traj.s[k]
            errs.append(np.max(np.abs(sdot - lag)))
        return float(max(errs)) if errs else 0.0
    s = traj["s"]
    dt = traj.dt
    lag = _lagrangian_along(traj, L, chart, params)
    if len(s) < 5:
        return 0.0
    sdot = _fd4_rate(s, dt)
    return float(np.max(np.abs(sdot - lag[2:-2])))


def _fd4_rate(y: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order central time derivative on the interior points [2, n-2)."""
    return (-y[4:] + 8 * y[3:-1] - 8 * y[1:-3] + y[:-4]) / (12 * dt)


def observable_rate_residual(traj: Trajectory, system, observable, params: Parameters | None = None) -> float:
    """Max of ``|dE/dt - X_H(E)|`` along an m = 1 trajectory.

    dE/dt is a finite difference of E sampled on the trajectory; ``X_H(E)``
    is the symbolic Lie derivative evaluated on the same points.
    """
    params = params or Parameters()
    chart = system.chart
    X = hamiltonian.cocontact_vector_field(system.H, chart, check=False)
    rate = X(sp.sympify(observable))
    args = [chart.base_symbols[0]] + [chart.symbols[k] for k in chart.vertical_indices]
    cols = [traj.t] + [traj[chart.names[k]] for k in chart.vertical_indices]
    E = np.asarray(params.compile(observable, args)(*cols), float) * np.ones_like(traj.t)
    R = np.asarray(params.compile(rate, args)(*cols), float) * np.ones_like(traj.t)
    return float(np.max(np.abs(_fd4_rate(E, traj.dt) - R[2:-2])))


def action_quadrature(traj: Trajectory, L, chart: Chart, params: Parameters | None = None, rule: str = "simpson") -> float:
    """Quadrature of ``L`` along an m = 1 trajectory (``simpson`` or ``trapezoid``)."""
    params = params or Parameters()
    lag = _lagrangian_along(traj, L, chart, params)
    if rule == "simpson":
        return float(spi.simpson(lag, x=traj.t))
    if rule == "trapezoid":
        return float(spi.trapezoid(lag, x=traj.t))
    raise ValueError(f"unknown quadrature rule {rule!r}")


def _velocity_columns(traj: Trajectory, hsys, params: Parameters) -> dict:
    chart = hsys.chart
    X = hamiltonian.cocontact_vector_field(hsys.H, chart, check=False)
    names, _ = _flow_function(X, chart, params)
    t = chart.base_symbols[0]
    args = [t] + [chart.symbols[k] for k in chart.vertical_indices]
    cols = [traj[n] for n in names]
    out = {}
    for i in range(chart.n):
        k = chart.field_coord(i)
        f = params.compile(X.component(k), args)
        out[chart.names[k]] = np.asarray(f(traj.t, *cols), float) * np.ones_like(traj.t)
    return out


def _lagrangian_along(traj: Trajectory, L, lchart: Chart, params: Parameters) -> np.ndarray:
    hsys = hamiltonian.hamiltonian_from_lagrangian(L, lchart)
    vel = _velocity_columns(traj, hsys, params)
    t = lchart.base_symbols[0]
    args, cols = [t], [traj.t]
    for i in range(lchart.n):
        k = lchart.field_coord(i)
        args += [lchart.symbols[k], lchart.symbols[lchart.velocity(i, 0)]]
        cols += [traj[lchart.names[k]], vel[lchart.names[k]]]
    args.append(lchart.symbols[lchart.contact(0)])
    cols.append(traj[lchart.names[lchart.contact(0)]])
    f = params.compile(L, args)
    return np.asarray(f(*cols), float) * np.ones_like(traj.t)


def herglotz_variation_check(
    L,
    chart: Chart,
    traj: Trajectory,
    params: Parameters | None = None,
    window: tuple | None = None,
    eps: float = 1e-5,
    amplitude: float = 1.0,
) -> float:
    """``|dA/d eps|`` for ``A(eps) = s(T) - s(0)`` along ``q + eps eta``.

    ``eta = amplitude sin^2(pi (t-a)/(b-a))`` on ``window = (a, b)`` (zero
    outside); s is re-integrated from ``ds/dt = L(t, q + eps eta, q_dot + eps eta_dot, s)``
    with RK4 on every other trajectory point.  Central difference in eps.
    """
    params = params or Parameters()
    if chart.m != 1:
        raise ValueError("the variation check is implemented for m = 1")
    hsys = hamiltonian.hamiltonian_from_lagrangian(L, chart)
    vel = _velocity_columns(traj, hsys, params)
    t = traj.t
    a, b = window or (t[0], t[-1])
    width = b - a
    inside = (t >= a) & (t <= b)
    eta = np.where(inside, amplitude * np.sin(np.pi * (t - a) / width) ** 2, 0.0)
    eta_dot = np.where(inside, amplitude * np.pi / width * np.sin(2 * np.pi * (t - a) / width), 0.0)
    tsym = chart.base_symbols[0]
    args = [tsym]
    for i in range(chart.n):
        args += [chart.symbols[chart.field_coord(i)], chart.symbols[chart.velocity(i, 0)]]
    ssym = chart.symbols[chart.contact(0)]
    f = params.compile(L, args + [ssym])
    fields = [chart.names[chart.field_coord(i)] for i in range(chart.n)]
    qs = [traj[n] for n in fields]
    qd = [vel[n] for n in fields]
    s0 = float(traj[chart.names[chart.contact(0)]][0])
    if eps == 0 or amplitude == 0:
        return 0.0

    def action(e):
        cols = []
        for q, v in zip(qs, qd):
            cols += [q + e * eta, v + e * eta_dot]
        n = len(t) - 1
        if n % 2:
            n -= 1
        h = 2 * (t[1] - t[0])
        s = s0
        for k in range(0, n, 2):
            c0 = [col[k] for col in cols]
            c1 = [col[k + 1] for col in cols]
            c2 = [col[k + 2] for col in cols]
            k1 = f(t[k], *c0, s)
            k2 = f(t[k + 1], *c1, s + h / 2 * k1)
            k3 = f(t[k + 1], *c1, s + h / 2 * k2)
            k4 = f(t[k + 2], *c2, s + h * k3)
            s = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not math.isfinite(s):
                raise IntegrationError("constraint re-integration produced a non-finite action", k)
        return s - s0

    return abs(action(eps) - action(-eps)) / (2 * eps)


def write_trajectory(traj, out_dir, stem: str, every: int = 1) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{stem}.csv"
    traj.to_csv(path, every)
    return path
