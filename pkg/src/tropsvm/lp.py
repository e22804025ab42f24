"""Dense two-phase simplex for small maximization LPs.

Problems have the form::

    maximize    c @ x
    subject to  A @ x <= b
                x_k >= 0 for flagged variables, free otherwise

Free variables are split into a difference of two non-negative columns.
Rows with a negative right-hand side are negated and given an artificial
variable for phase one. Entering columns follow Dantzig's rule until a run
of degenerate pivots is seen, after which Bland's rule takes over until
the objective moves again. Ratio-test ties go to the smallest basic index
under Bland and otherwise to the largest pivot entry, so identical input
always produces the identical pivot sequence.

Every optimal answer is re-derived from a fresh factorization of the final
basis and checked for primal feasibility, dual feasibility and a zero
duality gap before it is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-11
DEGENERATE_RUN = 50

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class NumericalBreakdown(RuntimeError):
    """The solver lost accuracy or hit its iteration cap; no verdict is available."""


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    nonneg: np.ndarray
    var_names: tuple[str, ...] = ()
    row_names: tuple[str, ...] = ()

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, c.size)
        b = np.asarray(self.b, dtype=float).ravel()
        nonneg = np.asarray(self.nonneg, dtype=bool).ravel()
        if A.ndim != 2 or A.shape[1] != c.size:
            raise ValueError(f"constraint matrix has shape {A.shape}, expected (*, {c.size})")
        if b.size != A.shape[0]:
            raise ValueError(f"{b.size} right-hand sides for {A.shape[0]} rows")
        if nonneg.size != c.size:
            raise ValueError("one sign flag per variable required")
        for arr, what in ((c, "objective"), (A, "constraint"), (b, "right-hand side")):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite {what} coefficient")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "nonneg", nonneg)
        if not self.var_names:
            object.__setattr__(self, "var_names", tuple(f"x{k + 1}" for k in range(c.size)))
        if not self.row_names:
            object.__setattr__(self, "row_names", tuple(f"r{k + 1}" for k in range(b.size)))

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def max_violation(self, x) -> float:
        if self.n_rows == 0:
            viol = 0.0
        else:
            viol = float(np.max(self.A @ x - self.b, initial=0.0))
        if np.any(self.nonneg):
            viol = max(viol, float(np.max(-x[self.nonneg], initial=0.0)))
        return viol


class LPBuilder:
    """Incremental construction of a :class:`LinearProgram` by named variables."""

    def __init__(self):
        self._names: list[str] = []
        self._cost: list[float] = []
        self._nonneg: list[bool] = []
        self._rows: list[dict[int, float]] = []
        self._rhs: list[float] = []
        self._row_names: list[str] = []

    def add_var(self, name: str, nonneg: bool = False, cost: float = 0.0) -> int:
        self._names.append(name)
        self._cost.append(float(cost))
        self._nonneg.append(bool(nonneg))
        return len(self._names) - 1

    def add_row(self, coeffs: dict[int, float], rhs: float, name: str | None = None) -> int:
        row: dict[int, float] = {}
        for k, v in coeffs.items():
            row[k] = row.get(k, 0.0) + float(v)
        self._rows.append(row)
        self._rhs.append(float(rhs))
        self._row_names.append(name or f"r{len(self._rows)}")
        return len(self._rows) - 1

    def build(self) -> LinearProgram:
        A = np.zeros((len(self._rows), len(self._names)))
        for r, row in enumerate(self._rows):
            for k, v in row.items():
                A[r, k] += v
        return LinearProgram(c=np.array(self._cost), A=A, b=np.array(self._rhs),
                             nonneg=np.array(self._nonneg, dtype=bool),
                             var_names=tuple(self._names), row_names=tuple(self._row_names))


@dataclass(frozen=True)
class LPOutcome:
    status: str
    iterations: int
    x: np.ndarray | None = None
    value: float | None = None
    duals: np.ndarray | None = None
    ray: np.ndarray | None = None
    phase1_residual: float | None = field(default=None, compare=False)

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


def to_text(lp: LinearProgram) -> str:
    """Plain-text dump: objective, one line per row, then variable bounds."""

    def expr(coeffs) -> str:
        terms = [f"{v:+.17g} {name}" for v, name in zip(coeffs, lp.var_names) if v != 0.0]
        return " ".join(terms) if terms else "0"

    lines = ["maximize", f"  obj: {expr(lp.c)}", "subject to"]
    for name, row, rhs in zip(lp.row_names, lp.A, lp.b):
        lines.append(f"  {name}: {expr(row)} <= {rhs:.17g}")
    lines.append("bounds")
    for name, nn in zip(lp.var_names, lp.nonneg):
        lines.append(f"  {name} >= 0" if nn else f"  {name} free")
    lines.append("end")
    return "\n".join(lines) + "\n"


class _Tableau:
    """Equality-form working state ``M y = rhs0`` with ``y >= 0``."""

    def __init__(self, M: np.ndarray, rhs0: np.ndarray, basis: np.ndarray):
        self.M = M
        self.rhs0 = rhs0
        self.basis = basis
        self.T = M.copy()
        self.rhs = rhs0.copy()
        self.since_refactor = 0
        self.refactor_every = max(50, M.shape[0])

    def refactor(self) -> None:
        B = self.M[:, self.basis]
        try:
            self.T = np.linalg.solve(B, self.M)
            self.rhs = np.linalg.solve(B, self.rhs0)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown(f"singular basis during refactorization: {exc}") from None
        self.rhs[np.abs(self.rhs) < 1e-13] = 0.0
        self.since_refactor = 0

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        piv = T[r, j]
        T[r] /= piv
        self.rhs[r] /= piv
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.rhs -= col * self.rhs[r]
        self.basis[r] = j
        self.since_refactor += 1
        if self.since_refactor >= self.refactor_every:
            self.refactor()

    def delete_rows(self, rows: Sequence[int]) -> None:
        keep = np.setdiff1d(np.arange(self.T.shape[0]), rows)
        self.M = self.M[keep]
        self.rhs0 = self.rhs0[keep]
        self.T = self.T[keep]
        self.rhs = self.rhs[keep]
        self.basis = self.basis[keep]

    def delete_cols(self, cols: Sequence[int]) -> None:
        keep = np.setdiff1d(np.arange(self.M.shape[1]), cols)
        remap = -np.ones(self.M.shape[1], dtype=int)
        remap[keep] = np.arange(keep.size)
        self.M = self.M[:, keep]
        self.T = self.T[:, keep]
        self.basis = remap[self.basis]
        if np.any(self.basis < 0):
            raise NumericalBreakdown("attempted to drop a basic column")


def _run_simplex(tab: _Tableau, cost: np.ndarray, opt_tol: float, max_iter: int,
                 iterations: int) -> tuple[str, int, int | None]:
    """Maximize ``cost @ y``. Returns (status, iterations, unbounded column)."""
    degenerate = 0
    while True:
        if iterations >= max_iter:
            raise NumericalBreakdown(f"iteration cap {max_iter} reached")
        reduced = cost - cost[tab.basis] @ tab.T
        reduced[tab.basis] = 0.0
        candidates = np.flatnonzero(reduced > opt_tol)
        if candidates.size == 0:
            return OPTIMAL, iterations, None
        bland = degenerate >= DEGENERATE_RUN
        j = int(candidates[0]) if bland else int(candidates[np.argmax(reduced[candidates])])
        col = tab.T[:, j]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            return UNBOUNDED, iterations, j
        ratios = tab.rhs[rows] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
        if bland or tied.size == 1:
            r = int(tied[np.argmin(tab.basis[tied])])
        else:
            mags = col[tied]
            top = tied[mags >= mags.max() * (1 - 1e-12)]
            r = int(top[np.argmin(tab.basis[top])])
        degenerate = degenerate + 1 if best <= 1e-12 else 0
        tab.pivot(r, j)
        iterations += 1


def solve(lp: LinearProgram, feas_tol: float = FEAS_TOL, opt_tol: float = OPT_TOL,
          max_iter: int | None = None) -> LPOutcome:
    """Solve ``lp``; see the module docstring for the method and guarantees.

    Tolerances are absolute for data of unit magnitude and grow with the
    largest right-hand side or objective entry, so programs with large
    coordinates are checked at the same relative precision.
    """
    m, n = lp.A.shape
    free = np.flatnonzero(~lp.nonneg)
    As = np.hstack([lp.A, -lp.A[:, free]])
    cs = np.concatenate([lp.c, -lp.c[free]])
    n1 = As.shape[1]
    if max_iter is None:
        max_iter = 50 * (m + n1) + 1000

    b_scale = max(1.0, float(np.max(np.abs(lp.b), initial=0.0)))
    c_scale = max(1.0, float(np.max(np.abs(lp.c), initial=0.0)))
    ftol = feas_tol * b_scale

    if m == 0:
        if np.any(cs > opt_tol):
            j = int(np.flatnonzero(cs > opt_tol)[0])
            return LPOutcome(UNBOUNDED, 0, ray=_map_back(_unit(n1, j), n, free))
        return LPOutcome(OPTIMAL, 0, x=np.zeros(n), value=0.0, duals=np.zeros(0))

    sign = np.where(lp.b < 0, -1.0, 1.0)
    art_rows = np.flatnonzero(sign < 0)
    n_art = art_rows.size
    art = np.zeros((m, n_art))
    art[art_rows, np.arange(n_art)] = 1.0
    M = np.hstack([As * sign[:, None], np.diag(sign), art])
    rhs0 = lp.b * sign
    basis = n1 + np.arange(m)
    basis[art_rows] = n1 + m + np.arange(n_art)
    tab = _Tableau(M, rhs0, basis)
    iterations = 0
    row_ids = np.arange(m)

    if n_art:
        cost1 = np.zeros(M.shape[1])
        cost1[n1 + m:] = -1.0
        _, iterations, _ = _run_simplex(tab, cost1, opt_tol, max_iter, iterations)
        tab.refactor()
        residual = float(np.sum(tab.rhs[tab.basis >= n1 + m]))
        if residual > ftol:
            return LPOutcome(INFEASIBLE, iterations, phase1_residual=residual)
        # drive remaining artificials out of the basis
        redundant = []
        for r in range(tab.T.shape[0]):
            if tab.basis[r] < n1 + m:
                continue
            row = np.abs(tab.T[r, :n1 + m])
            j = int(np.argmax(row))
            if row[j] > 1e-9:
                tab.pivot(r, j)
                iterations += 1
            else:
                redundant.append(r)
        if redundant:
            tab.delete_rows(redundant)
            row_ids = np.delete(row_ids, redundant)
        tab.delete_cols(np.arange(n1 + m, n1 + m + n_art))
        tab.refactor()

    cost2 = np.concatenate([cs, np.zeros(m)])
    status, iterations, j = _run_simplex(tab, cost2, opt_tol, max_iter, iterations)

    if status == UNBOUNDED:
        direction = np.zeros(tab.M.shape[1])
        direction[j] = 1.0
        direction[tab.basis] = -tab.T[:, j]
        ray = _map_back(direction[:n1], n, free)
        slack = 1e-7 * max(1.0, float(np.abs(ray).max()))
        if (np.max(lp.A @ ray, initial=0.0) > slack
                or np.any(ray[lp.nonneg] < -slack) or lp.c @ ray <= 0):
            raise NumericalBreakdown("unbounded ray failed verification")
        return LPOutcome(UNBOUNDED, iterations, ray=ray)

    for attempt in range(2):
        tab.refactor()
        y = np.zeros(tab.M.shape[1])
        y[tab.basis] = tab.rhs
        x = _map_back(y[:n1], n, free)
        B = tab.M[:, tab.basis]
        try:
            dual_std = np.linalg.solve(B.T, cost2[tab.basis])
        except np.linalg.LinAlgError:
            raise NumericalBreakdown("singular final basis") from None
        reduced = cost2 - tab.M.T @ dual_std
        duals = np.zeros(m)
        duals[row_ids] = dual_std * sign[row_ids]
        value = float(lp.c @ x)
        primal_ok = np.min(tab.rhs, initial=0.0) >= -ftol and lp.max_violation(x) <= ftol
        dual_ok = np.max(reduced, initial=0.0) <= max(opt_tol * c_scale, 1e-9 * c_scale)
        gap = abs(float(lp.b @ duals) - value)
        gap_ok = gap <= feas_tol * max(1.0, abs(value), b_scale * max(1.0, np.abs(duals).sum()))
        if primal_ok and dual_ok and gap_ok:
            return LPOutcome(OPTIMAL, iterations, x=x, value=value, duals=duals)
        if attempt == 0 and not dual_ok:
            # a few more pivots from the freshly factorized tableau
            status, iterations, j = _run_simplex(tab, cost2, opt_tol, max_iter, iterations)
            if status == UNBOUNDED:
                raise NumericalBreakdown("solver flipped to unbounded after refactorization")
    raise NumericalBreakdown(
        f"optimality certificate failed (violation={lp.max_violation(x):.3g}, "
        f"max reduced cost={np.max(reduced, initial=0.0):.3g}, gap={gap:.3g})")


def _unit(n: int, j: int) -> np.ndarray:
    e = np.zeros(n)
    e[j] = 1.0
    return e


def _map_back(y: np.ndarray, n: int, free: np.ndarray) -> np.ndarray:
    x = y[:n].copy()
    x[free] -= y[n:]
    return x
