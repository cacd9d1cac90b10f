"""System description files.

INI layout::

    [system]
    name = damped string

    [chart]
    base = t, x
    fields = u
    gauge =

    [parameters]
    rho = 1            ; constant with a numeric value
    mu0                ; constant kept symbolic
    gamma(t) = 0.3     ; function with a numeric implementation
    J_0(x_0, x_1)      ; opaque function

    [definitions]      ; optional macros, expanded in order
    F01 = A_1_0 - A_0_1

    [lagrangian]       ; or [hamiltonian] with key H
    L = rho*u_t^2/2 - tau*u_x^2/2 - gamma(t)*s_t

    [simulation]       ; optional
    kind = wave        ; or ode
    t_end = 2
    cfl = 0.5          ; or dt
    J = 256
    x_min = 0
    x_max = 2*pi
    bc = periodic      ; or dirichlet0

    [initial]
    u = sin(x)         ; wave: u and u_t as functions of x
    u_t = 0            ; ode: one value per coordinate of the cocontact chart
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import sympy as sp

from . import hamiltonian, lagrangian, symexpr
from .geometry import Chart, ChartError
from .simulate import Parameters

__all__ = ["SystemFile", "SystemFileError", "load", "loads", "bundled", "bundled_path"]

_FUNC_KEY = re.compile(r"^\s*([A-Za-z_]\w*)\s*\(([^)]*)\)\s*$")
_NAME = re.compile(r"^[A-Za-z_]\w*$")


class SystemFileError(ValueError):
    pass


@dataclass
class SystemFile:
    name: str
    kind: str  # "lagrangian" or "hamiltonian"
    chart: Chart
    expr: sp.Expr
    params: Parameters
    simulation: dict | None = None
    initial: dict = field(default_factory=dict)
    source: str = ""

    @property
    def m(self) -> int:
        return self.chart.m

    def lagrangian_system(self) -> lagrangian.LagrangianSystem:
        if self.kind != "lagrangian":
            raise SystemFileError("system is given by a Hamiltonian")
        return lagrangian.LagrangianSystem(self.chart, self.expr)

    def hamiltonian_system(self) -> hamiltonian.HamiltonianSystem:
        if self.kind == "hamiltonian":
            return hamiltonian.HamiltonianSystem(self.chart, self.expr)
        return hamiltonian.hamiltonian_from_lagrangian(self.expr, self.chart)

    def theta(self):
        if self.kind == "lagrangian":
            return lagrangian.build_theta_L(self.expr, self.chart)
        return hamiltonian.build_theta_H(self.expr, self.chart)


def _split(value: str | None) -> list[str]:
    if not value:
        return []
    return [v.strip() for v in value.split(",") if v.strip()]


def _number(text: str, what: str) -> float:
    try:
        e = symexpr.parse(text)
        return float(e)
    except (symexpr.ParseError, symexpr.UndeclaredSymbolError, TypeError) as exc:
        raise SystemFileError(f"{what}: expected a number, got {text!r}") from exc


def loads(text: str, source: str = "<string>") -> SystemFile:
    cp = configparser.ConfigParser(allow_no_value=True, inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise SystemFileError(f"{source}: {exc}") from exc

    for sec in ("chart",):
        if not cp.has_section(sec):
            raise SystemFileError(f"{source}: missing [{sec}] section")
    kinds = [k for k in ("lagrangian", "hamiltonian") if cp.has_section(k)]
    if len(kinds) != 1:
        raise SystemFileError(f"{source}: exactly one of [lagrangian] or [hamiltonian] is required")
    kind = kinds[0]
    name = cp.get("system", "name", fallback=Path(source).stem) if cp.has_section("system") else Path(source).stem

    base = _split(cp.get("chart", "base", fallback=None))
    fields = _split(cp.get("chart", "fields", fallback=None))
    gauge = _split(cp.get("chart", "gauge", fallback=None))
    if not base:
        raise SystemFileError(f"{source}: [chart] base is empty")

    constants, values, functions, impls = [], {}, {}, {}
    if cp.has_section("parameters"):
        for key, value in cp.items("parameters"):
            fm = _FUNC_KEY.match(key)
            if fm:
                fname = fm.group(1)
                args = _split(fm.group(2))
                if not all(_NAME.match(a) for a in args):
                    raise SystemFileError(f"{source}: bad argument list in {key!r}")
                functions[fname] = len(args)
                if value:
                    syms = [symexpr.symbol(a) for a in args]
                    try:
                        body = symexpr.parse(value, constants=args + constants)
                    except (symexpr.ParseError, symexpr.UndeclaredSymbolError) as exc:
                        raise SystemFileError(f"{source}: implementation of {fname}: {exc}") from exc
                    impls[fname] = sp.Lambda(tuple(syms), body)
            elif _NAME.match(key):
                constants.append(key)
                if value:
                    values[key] = _number(value, f"{source}: parameter {key}")
            else:
                raise SystemFileError(f"{source}: bad parameter name {key!r}")

    try:
        if kind == "lagrangian":
            chart = Chart.lagrangian(base, fields, gauge=gauge, constants=constants, functions=functions)
        else:
            chart = Chart.hamiltonian(base, fields, gauge=gauge, constants=constants, functions=functions)
    except ChartError as exc:
        raise SystemFileError(f"{source}: {exc}") from exc

    defs: dict[str, sp.Expr] = {}
    if cp.has_section("definitions"):
        for key, value in cp.items("definitions"):
            if not _NAME.match(key) or not value:
                raise SystemFileError(f"{source}: bad definition {key!r}")
            defs[key] = _parse(chart, value, defs, source)

    key = "L" if kind == "lagrangian" else "H"
    text_expr = cp.get(kind, key, fallback=None)
    if not text_expr:
        raise SystemFileError(f"{source}: [{kind}] needs a {key} entry")
    expr = _parse(chart, text_expr, defs, source)

    simulation = None
    if cp.has_section("simulation"):
        simulation = dict(cp.items("simulation"))
    initial = dict(cp.items("initial")) if cp.has_section("initial") else {}
    return SystemFile(name, kind, chart, expr, Parameters(values, impls), simulation, initial, source)


def _parse(chart: Chart, text: str, defs: dict, source: str) -> sp.Expr:
    table = chart.with_parameters(constants=list(chart.constants) + list(defs), functions=chart.functions)
    try:
        e = table.parse(text)
    except (symexpr.ParseError, symexpr.UndeclaredSymbolError) as exc:
        raise SystemFileError(f"{source}: {exc}") from exc
    return e.xreplace({symexpr.symbol(k): v for k, v in defs.items()})


def load(path) -> SystemFile:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise SystemFileError(f"{path}: {exc.strerror}") from exc
    return loads(text, str(p))


def bundled_path(name: str) -> Path:
    """Path of a bundled system file (``string``, ``oscillator``, ``maxwell``, ``degenerate``)."""
    stem = name[:-4] if name.endswith(".sys") else name
    return Path(__file__).parent / "systems" / f"{stem}.sys"


def bundled(name: str) -> SystemFile:
    return load(bundled_path(name))
