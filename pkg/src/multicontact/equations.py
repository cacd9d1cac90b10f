"""Derived field equations as named residuals in section unknowns."""
from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

import sympy as sp
from sympy.core.function import AppliedUndef
from sympy.printing.str import StrPrinter

from . import symexpr
from .geometry import Chart

__all__ = ["Equation", "EquationSet", "section_unknowns", "jet_key"]


@dataclass
class Equation:
    """``expr = 0``; ``kind`` is "pde" or "constraint"."""

    name: str
    expr: sp.Expr
    kind: str = "pde"
    family: str = ""


def section_unknowns(chart: Chart) -> dict[int, sp.Expr]:
    """Unknown function of the base for every non-base coordinate of ``chart``."""
    base = chart.base_symbols
    return {k: sp.Function(chart.names[k], real=True)(*base) for k in chart.vertical_indices}


def jet_key(e: sp.Expr, base: list) -> tuple[str, tuple[int, ...]] | None:
    """``(name, sorted base indices)`` for ``f(x)`` or one of its derivatives."""
    if isinstance(e, AppliedUndef):
        return (e.func.__name__, ())
    if isinstance(e, sp.Derivative) and isinstance(e.expr, AppliedUndef):
        idx = []
        for v, n in e.variable_count:
            idx += [base.index(v)] * int(n)
        return (e.expr.func.__name__, tuple(sorted(idx)))
    return None


class _Printer(StrPrinter):
    def __init__(self, base):
        super().__init__()
        self._base = list(base)

    def _print_Function(self, expr):
        if isinstance(expr, AppliedUndef) and list(expr.args) == self._base:
            return expr.func.__name__
        return super()._print_Function(expr)

    def _print_Derivative(self, expr):
        if isinstance(expr.expr, AppliedUndef) and list(expr.expr.args) == self._base:
            name = expr.expr.func.__name__
            vars_ = [str(v) for v, c in expr.variable_count for _ in range(int(c))]
            return f"D[{','.join(vars_)}]({name})"
        return super()._print_Derivative(expr)


class EquationSet:
    def __init__(self, equations: Iterable[Equation], base: list, title: str = ""):
        self.equations = list(equations)
        self.base = list(base)
        self.title = title

    def __iter__(self):
        return iter(self.equations)

    def __len__(self):
        return len(self.equations)

    def __getitem__(self, key):
        if isinstance(key, int):
            return self.equations[key]
        for e in self.equations:
            if e.name == key:
                return e
        raise KeyError(key)

    def names(self) -> list[str]:
        return [e.name for e in self.equations]

    def family(self, fam: str) -> list[Equation]:
        return [e for e in self.equations if e.family == fam]

    def unknowns(self) -> list[str]:
        names = set()
        for e in self.equations:
            for a in e.expr.atoms(AppliedUndef):
                if list(a.args) == self.base:
                    names.add(a.func.__name__)
        return sorted(names)

    # -- normalization ---------------------------------------------------
    def leading_derivative(self, e: sp.Expr) -> sp.Derivative | None:
        ders = [a for a in e.atoms(sp.Derivative) if isinstance(a.expr, AppliedUndef)]
        if not ders:
            return None
        return sorted(ders, key=lambda a: (-a.derivative_count, sp.default_sort_key(a)))[0]

    def normalized(self) -> "EquationSet":
        """Each residual divided by the coefficient of its leading derivative."""
        out = []
        for eq in self.equations:
            lead = self.leading_derivative(eq.expr)
            expr = symexpr.simplify(eq.expr)
            if lead is not None:
                z = sp.Dummy("lead")
                coeff = symexpr.simplify(sp.diff(eq.expr.subs(lead, z), z))
                if coeff != 0 and not coeff.has(z):
                    expr = sp.expand(symexpr.simplify(eq.expr / coeff))
            out.append(Equation(eq.name, expr, eq.kind, eq.family))
        return EquationSet(out, self.base, self.title)

    # -- numeric access ---------------------------------------------------
    def jet_variables(self, e: sp.Expr) -> dict[sp.Basic, tuple]:
        """Map each unknown (or derivative) occurring in ``e`` to its jet key."""
        out = {}
        for a in e.atoms(sp.Derivative) | e.atoms(AppliedUndef):
            key = jet_key(a, self.base)
            if key is not None and (not isinstance(a, AppliedUndef) or list(a.args) == self.base):
                out[a] = key
        return out

    def jet_form(self, e: sp.Expr) -> tuple[sp.Expr, dict]:
        """Replace unknowns by plain symbols; returns the expression and symbol -> jet key."""
        jets = self.jet_variables(e)
        repl, keys = {}, {}
        # derivatives first so that f(x) inside them is not touched
        for a in sorted(jets, key=lambda a: -sp.count_ops(a)):
            name, idx = jets[a]
            s = sp.Symbol(f"J_{name}_{'_'.join(map(str, idx))}", real=True)
            repl[a] = s
            keys[s] = (name, idx)
        return e.xreplace(repl), keys

    # -- output ------------------------------------------------------------
    def to_text(self) -> str:
        p = _Printer(self.base)
        lines = [f"# {self.title}"] if self.title else []
        for eq in self.equations:
            tag = "" if eq.kind == "pde" else f"  [{eq.kind}]"
            lines.append(f"{eq.name}: {p.doprint(eq.expr)} = 0{tag}")
        return "\n".join(lines)

    def to_latex(self) -> str:
        lines = []
        for eq in self.equations:
            lines.append(f"{sp.latex(eq.expr)} = 0 \\quad \\text{{({eq.name})}}")
        return "\\begin{gathered}\n" + " \\\\\n".join(lines) + "\n\\end{gathered}"

    def to_dict(self) -> dict:
        p = _Printer(self.base)
        return {
            "title": self.title,
            "base": [str(b) for b in self.base],
            "equations": [
                {"name": e.name, "family": e.family, "kind": e.kind, "residual": p.doprint(e.expr),
                 "latex": sp.latex(e.expr)}
                for e in self.equations
            ],
        }

    def __str__(self):
        return self.to_text()
