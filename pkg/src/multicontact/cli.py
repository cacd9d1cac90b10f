"""Command-line front end.

Exit codes: 0 success, 2 unreadable input or missing simulation block,
3 structural failure (singular Legendre map, failed verification),
4 CFL violation or numerical instability.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np
import sympy as sp

from . import __version__, hamiltonian, lagrangian, simulate, structure, symexpr
from .geometry import Form
from .report import dumps, write_json
from .sysfile import SystemFile, SystemFileError, bundled_path, load

EXIT_OK, EXIT_INPUT, EXIT_STRUCTURE, EXIT_NUMERICS = 0, 2, 3, 4


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _resolve(path: str) -> Path:
    p = Path(path)
    if not p.exists() and bundled_path(path).exists():
        return bundled_path(path)
    return p


def _emit(args, name: str, text: str, data: dict) -> None:
    if args.format == "json":
        sys.stdout.write(dumps(data))
    else:
        print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / f"{name}.json", data)


# ----------------------------------------------------------------------------
# commands


def cmd_classify(sysf: SystemFile, args) -> int:
    c = structure.classify(sysf.theta(), sysf.chart)
    data = {"system": sysf.name, "kind": sysf.kind, **c.to_dict()}
    lines = [f"{sysf.name}: {c}", f"ranks (ker omega, D^R, C) = {c.ranks}"]
    if c.reeb:
        lines += [f"R_{mu} = {r.to_text()}" for mu, r in enumerate(c.reeb)]
    if c.sigma is not None:
        lines.append(f"sigma = {c.sigma.to_text()}")
    lines += [f"warning: {w}" for w in c.warnings]
    if args.format == "latex":
        lines = [f"\\text{{{c}}}"] + ([f"\\sigma = {sp.latex(sum(c.sigma.terms.values(), sp.S.Zero))}"] if c.sigma else [])
    _emit(args, "classify", "\n".join(lines), data)
    return EXIT_OK


def _equations(sysf: SystemFile, side: str):
    if sysf.kind == "hamiltonian" or side == "hamiltonian":
        hs = sysf.hamiltonian_system()
        eqs = hamiltonian.hdw_equations(hs.H, hs.chart)
        extra = {}
        if hs.chart.m == 1:
            X = hamiltonian.cocontact_vector_field(hs.H, hs.chart)
            extra["cocontact_vector_field"] = X.to_text()
        return eqs, extra
    L, chart = sysf.expr, sysf.chart
    eqs = lagrangian.herglotz_el_equations(L, chart).normalized()
    extra = {"regularity": str(lagrangian.regularity(L, chart))}
    return eqs, extra


def cmd_derive(sysf: SystemFile, args) -> int:
    try:
        eqs, extra = _equations(sysf, args.side)
    except hamiltonian.LegendreInversionError as exc:
        raise CommandError(str(exc), EXIT_STRUCTURE) from exc
    data = {"system": sysf.name, **eqs.to_dict(), **extra}
    if args.format == "latex":
        text = eqs.to_latex()
    else:
        text = eqs.to_text() + "".join(f"\n{k}: {v}" for k, v in extra.items())
    _emit(args, "derive", text, data)
    return EXIT_OK


def cmd_legendre(sysf: SystemFile, args) -> int:
    if sysf.kind != "lagrangian":
        raise CommandError("legendre needs a Lagrangian system file", EXIT_INPUT)
    reg = lagrangian.regularity(sysf.expr, sysf.chart)
    leg = hamiltonian.legendre_map(sysf.expr, sysf.chart)
    data = {"system": sysf.name, "regularity": str(reg), "map": leg.as_table()}
    if reg.verdict is not lagrangian.Regularity.REGULAR:
        _emit(args, "legendre", f"{sysf.name}: Legendre map is {reg}; no Hamiltonian", data)
        return EXIT_STRUCTURE
    try:
        hs = sysf.hamiltonian_system()
    except hamiltonian.LegendreInversionError as exc:
        raise CommandError(str(exc), EXIT_STRUCTURE) from exc
    data.update({
        "inverse": {str(k): sp.sstr(v) for k, v in hs.velocities.items()},
        "H": sp.sstr(sp.expand(hs.H)),
        "pullback_theta_H_equals_theta_L": hs.legendre_check,
    })
    lines = [f"{sysf.name}: {reg}"]
    lines += [f"{k} = {v}" for k, v in data["map"].items()]
    lines += [f"{k} = {v}" for k, v in data["inverse"].items()]
    lines += [f"H = {data['H']}", f"FL^* Theta_H - Theta_L: {hs.legendre_check.value}"]
    if args.format == "latex":
        lines = [f"H = {sp.latex(hs.H)}"]
    _emit(args, "legendre", "\n".join(lines), data)
    return EXIT_OK


def _sim_float(sim: dict, key: str, default=None) -> float:
    if key not in sim:
        if default is None:
            raise CommandError(f"[simulation] needs {key}", EXIT_INPUT)
        return default
    try:
        return float(symexpr.parse(sim[key]))
    except (symexpr.ParseError, symexpr.UndeclaredSymbolError, TypeError) as exc:
        raise CommandError(f"[simulation] {key}: not a number", EXIT_INPUT) from exc


def _ode_initial(sysf: SystemFile, hs) -> simulate.OdeState:
    chart = hs.chart
    values = {}
    lag_chart = sysf.chart if sysf.kind == "lagrangian" else None
    given = {k: float(symexpr.parse(v)) for k, v in sysf.initial.items()}
    for k in chart.vertical_indices:
        name = chart.names[k]
        if name in given:
            values[name] = given[name]
    if lag_chart is not None:
        point = {lag_chart.symbol(n): v for n, v in given.items() if n in lag_chart.names}
        for p, image in hs.legendre.images.items():
            if str(p) not in values:
                e = sysf.params.bind(image).xreplace(point)
                if e.free_symbols:
                    raise CommandError(f"[initial] cannot determine {p}", EXIT_INPUT)
                values[str(p)] = float(e)
    missing = [chart.names[k] for k in chart.vertical_indices if chart.names[k] not in values]
    if missing:
        raise CommandError(f"[initial] missing values for {missing}", EXIT_INPUT)
    t0 = _sim_float(sysf.simulation, "t0", 0.0)
    return simulate.OdeState(t0, values)


def _wave_initial(sysf: SystemFile, hs) -> simulate.GridState:
    sim = sysf.simulation
    chart = hs.chart
    J = int(_sim_float(sim, "J"))
    x0, x1 = _sim_float(sim, "x_min"), _sim_float(sim, "x_max")
    bc = sim.get("bc", "periodic")
    xname = chart.names[chart.base(1)]
    field = chart.names[chart.field_coord(0)]
    vel = f"{field}_{chart.names[chart.base(0)]}"

    def profile(key, default):
        text = sysf.initial.get(key, default)
        e = sysf.params.bind(symexpr.parse(text, constants=[xname] + list(chart.constants)))
        f = symexpr.compile_expr(e, [symexpr.symbol(xname)])
        return lambda x: np.asarray(f(x), float)

    try:
        return simulate.GridState.uniform(J, x0, x1, profile(field, "0"), profile(vel, "0"), bc=bc)
    except ValueError as exc:
        raise CommandError(str(exc), EXIT_INPUT) from exc


def _run(sysf: SystemFile):
    sim = sysf.simulation
    if sim is None:
        raise CommandError(f"{sysf.name}: no [simulation] block", EXIT_INPUT)
    hs = sysf.hamiltonian_system()
    kind = sim.get("kind", "ode" if hs.chart.m == 1 else "wave")
    t_end = _sim_float(sim, "t_end")
    try:
        if kind == "ode":
            traj = simulate.integrate_ode(hs, _ode_initial(sysf, hs), t_end, _sim_float(sim, "dt"), sysf.params)
        elif kind == "wave":
            dt = _sim_float(sim, "dt", 0.0) or None
            cfl = _sim_float(sim, "cfl", 0.5)
            traj = simulate.integrate_wave(hs, _wave_initial(sysf, hs), t_end, dt, sysf.params, cfl=cfl)
        else:
            raise CommandError(f"[simulation] unknown kind {kind!r}", EXIT_INPUT)
    except (simulate.CFLError, simulate.IntegrationError) as exc:
        raise CommandError(str(exc), EXIT_NUMERICS) from exc
    return kind, hs, traj


def _monitor(sysf: SystemFile, kind: str, hs, traj) -> simulate.RunReport:
    if kind == "ode":
        rep = simulate.RunReport(meta=dict(traj.meta))
        chart = hs.chart
        args = [chart.base_symbols[0]] + [chart.symbols[k] for k in chart.vertical_indices]
        cols = [traj.t] + [traj[chart.names[k]] for k in chart.vertical_indices]
        H = sysf.params.compile(hs.H, args)
        rep.series["t"] = traj.t
        rep.series["H"] = np.asarray(H(*cols), float) * np.ones_like(traj.t)
        rep.series["s"] = traj[chart.names[chart.contact(0)]]
        if sysf.kind == "lagrangian":
            rep.meta["action_identity"] = simulate.action_identity_check(traj, sysf.expr, sysf.chart, sysf.params)
        return rep
    eqs = hamiltonian.hdw_equations(hs.H, hs.chart)
    rep = simulate.residual_norms(traj, eqs, sysf.params)
    rep.meta.update(traj.meta)
    rep.series["energy"] = simulate.discrete_energy(traj)
    rep.series["energy_t"] = traj.t
    rep.meta["action_identity"] = simulate.action_identity_check(traj)
    return rep


def _thin(rep: simulate.RunReport, n: int, every: int) -> None:
    """Keep every ``every``-th sample of the per-step series (those of length n)."""
    for key, v in list(rep.series.items()):
        if len(v) == n:
            rep.series[key] = np.asarray(v)[::every]


def cmd_simulate(sysf: SystemFile, args) -> int:
    kind, hs, traj = _run(sysf)
    every = int(_sim_float(sysf.simulation, "every", 1.0))
    rep = _monitor(sysf, kind, hs, traj)
    _thin(rep, len(traj.t), every)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(sysf.source).stem
    csv_path = simulate.write_trajectory(traj, out, stem, every)
    rep.meta["csv"] = csv_path.name
    rep.meta["system"] = sysf.name
    rep.write(out / f"{stem}.report.json")
    text = f"{sysf.name}: {traj.meta['steps']} steps, wrote {csv_path} and {out / (stem + '.report.json')}"
    if args.format == "json":
        sys.stdout.write(dumps(rep.to_dict()))
    else:
        print(text)
    return EXIT_OK


# ----------------------------------------------------------------------------
# verify


def _check(results: list, name: str, fn) -> None:
    t0 = time.perf_counter()
    try:
        outcome = fn()
    except (structure.ConsistencyError, structure.StructureError, hamiltonian.LegendreInversionError) as exc:
        outcome = (False, str(exc))
    if isinstance(outcome, tuple):
        status, detail = outcome
    else:
        status, detail = outcome, ""
    label = {True: "pass", False: "fail", None: "skip"}[status]
    results.append({"check": name, "status": label, "detail": detail, "seconds": round(time.perf_counter() - t0, 3)})


def verify_system(sysf: SystemFile, simulate_checks: bool = True) -> list[dict]:
    """Run the invariant suite on one system; one row per check."""
    results: list[dict] = []
    theta = sysf.theta()
    c = structure.classify(theta, sysf.chart)
    ok = c.ok
    results.append({"check": "classification", "status": "pass" if ok else "fail", "detail": str(c), "seconds": 0.0})
    _check(results, "variational", lambda: structure.is_variational(theta))

    def sigma_formula():
        if not ok or c.sigma is None:
            return None, "no dissipation form"
        chart = sysf.chart
        expected = Form.zero(chart, 1)
        sign = -1 if sysf.kind == "lagrangian" else 1
        for mu in range(chart.m):
            coeff = sign * sp.diff(sysf.expr, chart.symbols[chart.contact(mu)])
            expected = expected + Form.differential(chart, chart.base(mu)) * coeff
        z = (c.sigma - expected).simplify().is_zero()
        return z is symexpr.ZeroTest.ZERO, c.sigma.to_text()

    _check(results, "sigma_formula", sigma_formula)
    _check(results, "sigma_unique", lambda: (structure.sigma_perturbation_detected(theta, c), "") if ok else (None, ""))
    _check(results, "reeb_brackets", lambda: (structure.reeb_brackets(c) is symexpr.ZeroTest.ZERO, "") if ok else (None, ""))

    def characteristic():
        if not ok:
            return None, ""
        K = structure.reeb_theta_kernel(theta, c.reeb_distribution)
        same = K.generic_rank == c.characteristic.generic_rank
        inside = all(K.contains(v) is symexpr.ZeroTest.ZERO for v in c.characteristic.basis)
        return same and inside, f"rank {K.generic_rank}"

    _check(results, "characteristic_equals_reeb_kernel", characteristic)

    def formulations():
        if not ok:
            return None, ""
        a = structure.formulation_agreement(theta, sigma=c.sigma)
        return a.ok, f"section/pullback={a.section_pullback} connection/mvf={a.connection_multivector} mvf/section={a.multivector_section}"

    _check(results, "formulations_agree", formulations)

    regular = sysf.kind == "lagrangian" and lagrangian.regularity(sysf.expr, sysf.chart).verdict is lagrangian.Regularity.REGULAR

    def legendre():
        if not regular:
            return None, "not a regular Lagrangian"
        hs = sysf.hamiltonian_system()
        return hs.legendre_check is symexpr.ZeroTest.ZERO, sp.sstr(hs.H)

    _check(results, "legendre_pullback", legendre)

    def hdw_el():
        if not regular:
            return None, "not a regular Lagrangian"
        hs = sysf.hamiltonian_system()
        pulled = hamiltonian.hdw_to_lagrangian(hamiltonian.hdw_equations(hs.H, hs.chart), sysf.expr, sysf.chart)
        el = lagrangian.herglotz_el_equations(sysf.expr, sysf.chart)
        return _pullback_matches(pulled, el, sysf.chart), ""

    _check(results, "hdw_matches_euler_lagrange", hdw_el)

    if simulate_checks and sysf.simulation is not None and ok:
        def numerics():
            kind, hs, traj = _run(sysf)
            rep = _monitor(sysf, kind, hs, traj)
            worst = max((max(v) for k, v in rep.series.items() if k.endswith(":linf")), default=0.0)
            act = rep.meta.get("action_identity", 0.0)
            tol = 1e-6 if kind == "ode" else 1e-2
            return worst < 1e-2 and act < tol, f"residual {worst:.3g}, action identity {act:.3g}"

        try:
            _check(results, "simulation", numerics)
        except CommandError as exc:
            results.append({"check": "simulation", "status": "fail", "detail": str(exc), "seconds": 0.0})
    else:
        results.append({"check": "simulation", "status": "skip", "detail": "no simulation block", "seconds": 0.0})
    return results


def _pullback_matches(pulled, el, chart) -> bool:
    """HDW momentum/action equations on holonomic sections equal the Herglotz-EL ones.

    The velocity family holds identically; the momentum equation of field i
    equals EL[y_i] (same sign convention) and the action equations agree.
    """
    for eq in pulled.family("velocity"):
        if symexpr.is_zero(eq.expr) is not symexpr.ZeroTest.ZERO:
            return False
    for i in range(chart.n):
        name = chart.names[chart.field_coord(i)]
        a = pulled[f"momentum[{name}]"].expr
        b = el[f"EL[{name}]"].expr
        if symexpr.is_zero(a - b) is not symexpr.ZeroTest.ZERO:
            return False
    return symexpr.is_zero(pulled["action"].expr - el["action"].expr) is symexpr.ZeroTest.ZERO


def cmd_verify(sysf: SystemFile, args) -> int:
    rows = verify_system(sysf, simulate_checks=not args.no_sim)
    failed = [r for r in rows if r["status"] == "fail"]
    data = {"system": sysf.name, "checks": rows, "failed": [r["check"] for r in failed]}
    width = max(len(r["check"]) for r in rows)
    lines = [f"{r['check']:<{width}}  {r['status']:<4}  {r['detail']}" for r in rows]
    lines.append(f"{sysf.name}: {len(rows) - len(failed)} of {len(rows)} checks not failed")
    _emit(args, "verify", "\n".join(lines), data)
    return EXIT_STRUCTURE if failed else EXIT_OK


# ----------------------------------------------------------------------------


COMMANDS = {
    "classify": cmd_classify,
    "derive": cmd_derive,
    "legendre": cmd_legendre,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    def common(defaults: bool) -> argparse.ArgumentParser:
        # subcommands repeat the global flags without defaults, so a value given
        # before the subcommand is not overwritten
        c = argparse.ArgumentParser(add_help=False)
        kw = {} if defaults else {"default": argparse.SUPPRESS}
        c.add_argument("--out", help="directory for JSON reports and CSV output", **({"default": None} | kw))
        c.add_argument("--format", choices=("text", "latex", "json"), **({"default": "text"} | kw))
        c.add_argument("--seed", type=int, help="seed for randomized zero tests", **({"default": None} | kw))
        return c

    p = argparse.ArgumentParser(prog="multicontact", description=__doc__.splitlines()[0], parents=[common(True)])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("classify", "classify the structure defined by the system"),
        ("derive", "print the field equations"),
        ("legendre", "Legendre map, inverse and Hamiltonian"),
        ("simulate", "integrate the equations and write CSV + report"),
        ("verify", "run the invariant suite"),
    ]:
        sp_ = sub.add_parser(name, help=help_, parents=[common(False)])
        sp_.add_argument("file", help="system file, or the name of a bundled example")
        if name == "derive":
            sp_.add_argument("--side", choices=("lagrangian", "hamiltonian"), default="lagrangian",
                             help="for Lagrangian files, derive the Hamiltonian equations instead")
        if name == "verify":
            sp_.add_argument("--no-sim", action="store_true", help="skip numerical checks")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None:
        symexpr.set_probe_seed(args.seed)
    try:
        sysf = load(_resolve(args.file))
        return COMMANDS[args.command](sysf, args)
    except SystemFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except structure.StructureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE


if __name__ == "__main__":
    raise SystemExit(main())
