"""Linear algebra over expression matrices.

Gaussian elimination with zero-tested pivots, nullspaces, linear solves and
numeric rank probes.  Matrices are lists of rows of sympy expressions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from . import symexpr
from .symexpr import ZeroTest

__all__ = ["Reduced", "rref", "nullspace", "solve_linear", "numeric_ranks", "InconsistentSystem"]


class InconsistentSystem(ValueError):
    pass


@dataclass
class Reduced:
    rows: list
    pivots: list
    ncols: int
    indeterminate: bool = False
    unknown_columns: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return len(self.pivots)


def _norm(e):
    e = sp.sympify(e)
    if e.is_Number:
        return e
    return symexpr.simplify(e)


def _weight(e) -> int:
    return 0 if e.is_Number else sp.count_ops(e) + 1


def rref(matrix, ncols: int | None = None) -> Reduced:
    """Reduced row echelon form with is_zero pivoting.

    Columns whose candidate pivots are all ``UNKNOWN`` are skipped and
    reported in ``unknown_columns``.
    """
    rows = [[_norm(e) for e in row] for row in matrix]
    rows = [r for r in rows if any(e != 0 for e in r)]
    if ncols is None:
        ncols = len(rows[0]) if rows else 0
    pivots, unknown = [], []
    r = 0
    for col in range(ncols):
        if r >= len(rows):
            break
        best, best_w, saw_unknown = None, None, False
        for i in range(r, len(rows)):
            e = rows[i][col]
            if e == 0:
                continue
            z = ZeroTest.NONZERO if e.is_Number else symexpr.is_zero(e)
            if z is ZeroTest.ZERO:
                rows[i][col] = sp.S.Zero
                continue
            if z is ZeroTest.UNKNOWN:
                saw_unknown = True
                continue
            w = _weight(e)
            if best is None or w < best_w:
                best, best_w = i, w
        if best is None:
            if saw_unknown:
                unknown.append(col)
            continue
        rows[r], rows[best] = rows[best], rows[r]
        piv = rows[r][col]
        if piv != 1:
            rows[r] = [sp.S.Zero if e == 0 else _norm(e / piv) for e in rows[r]]
        prow = rows[r]
        for i in range(len(rows)):
            if i == r:
                continue
            f = rows[i][col]
            if f == 0:
                continue
            rows[i] = [
                a if b == 0 else _norm(a - f * b)
                for a, b in zip(rows[i], prow)
            ]
        pivots.append(col)
        r += 1
    rows = [row for row in rows if any(e != 0 for e in row)]
    return Reduced(rows, pivots, ncols, bool(unknown), unknown)


def nullspace(matrix, ncols: int) -> tuple[list[list[sp.Expr]], Reduced]:
    """Basis of the kernel, one vector per free column."""
    red = rref(matrix, ncols)
    piv_row = {c: i for i, c in enumerate(red.pivots)}
    basis = []
    for f in range(ncols):
        if f in piv_row:
            continue
        v = [sp.S.Zero] * ncols
        v[f] = sp.S.One
        for c, i in piv_row.items():
            v[c] = _norm(-red.rows[i][f])
        basis.append(v)
    return basis, red


def solve_linear(matrix, rhs, ncols: int):
    """Particular solution (free unknowns set to 0) and kernel basis of ``A c = b``.

    Raises :class:`InconsistentSystem` when no solution exists.
    """
    aug = [list(row) + [b] for row, b in zip(matrix, rhs)]
    red = rref(aug, ncols + 1)
    if ncols in red.pivots:
        raise InconsistentSystem("linear system has no solution")
    sol = [sp.S.Zero] * ncols
    for i, c in enumerate(red.pivots):
        sol[c] = red.rows[i][ncols]
    piv_row = {c: i for i, c in enumerate(red.pivots)}
    kernel = []
    for f in range(ncols):
        if f in piv_row:
            continue
        v = [sp.S.Zero] * ncols
        v[f] = sp.S.One
        for c, i in piv_row.items():
            v[c] = _norm(-red.rows[i][f])
        kernel.append(v)
    return sol, kernel, red


def numeric_ranks(matrix, points: int = 5, seed: int = 7) -> list[int]:
    """Rank of the matrix at random probe points (same sampling as is_zero)."""
    if not matrix or not matrix[0]:
        return [0] * points
    exprs = [sp.sympify(e) for row in matrix for e in row]
    atoms = set()
    for e in exprs:
        atoms |= set(symexpr._probe_atoms(e))
    atoms = sorted(atoms, key=sp.default_sort_key)
    f = sp.lambdify(atoms, exprs, modules="numpy") if atoms else None
    rng = np.random.default_rng(seed)
    nrow, ncol = len(matrix), len(matrix[0])
    ranks = []
    attempts = 0
    while len(ranks) < points and attempts < 10 * points:
        attempts += 1
        vals = symexpr._sample(rng, len(atoms))
        with np.errstate(all="ignore"):
            if f is None:
                arr = np.array([complex(e) for e in exprs])
            else:
                arr = np.array(f(*vals), dtype=complex)
        if not np.all(np.isfinite(arr)) or np.max(np.abs(arr.imag), initial=0.0) > 1e-12:
            continue
        a = arr.real.reshape(nrow, ncol)
        ranks.append(int(np.linalg.matrix_rank(a, tol=1e-9 * max(1.0, np.abs(a).max()))))
    return ranks
