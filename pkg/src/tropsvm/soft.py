"""Soft-margin tropical SVM.

The hard-margin rows are relaxed by non-negative slacks: ``alpha`` on the
margin row, ``beta`` on the ordering row and ``gamma[l]`` on each
below-``j`` row. The objective is ``z - C * (total slack)``; the program is
always feasible and, when both classes are non-empty and ``C >= 1``,
bounded.

Two builders are provided. The general one takes arbitrary per-point
index maps and carries a slack for every row. The case-specific one
assumes a constant assignment and keeps ``gamma[l]`` only where ``l`` is
one of the other class's two indices; every other below-``j`` row is
kept hard, which loses nothing at the optimum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import lp as lpmod
from .hard import IndexAssignment, as_classes, constant_maps

DEFAULT_TOL = 1e-7


class UnboundedSoftMargin(RuntimeError):
    """Raised when a program that must be bounded comes back unbounded."""


@dataclass(frozen=True)
class SoftMarginConfig:
    assignment: IndexAssignment | None = None
    tradeoff: float = 1.0
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not self.tradeoff > 0:
            raise ValueError("tradeoff must be positive")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")

    @property
    def warning(self) -> str | None:
        if self.tradeoff < 1:
            return "tradeoff below 1: the soft-margin objective may be unbounded"
        return None


@dataclass(frozen=True)
class SoftLayout:
    """Where each variable of a soft-margin program lives in the LP vector."""

    d: int
    n_points: int
    maps: tuple[tuple[int, int], ...]
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray  # (n_points, d), -1 where no slack variable exists


@dataclass(frozen=True)
class SoftMarginResult:
    status: str
    objective: float | None = None
    z: float | None = None
    omega: np.ndarray | None = None
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None
    gamma: np.ndarray | None = None
    layout: SoftLayout | None = None
    warning: str | None = None
    lp_outcome: lpmod.LPOutcome | None = None

    @property
    def hinge_loss(self) -> float | None:
        if self.alpha is None:
            return None
        return float(self.alpha.sum() + self.beta.sum() + self.gamma.sum())


def _build(P: np.ndarray, Q: np.ndarray, maps: Sequence[tuple[int, int]],
           keep_gamma, tradeoff: float) -> tuple[lpmod.LinearProgram, SoftLayout]:
    """Shared builder; ``keep_gamma(k, l0)`` decides whether row (k, l) gets a slack."""
    X = np.vstack([P, Q]) if Q.size else P
    n, d = X.shape
    B = lpmod.LPBuilder()
    z = B.add_var("z", nonneg=True, cost=1.0)
    w = [B.add_var(f"w{k + 1}") for k in range(d)]
    alpha = np.empty(n, dtype=int)
    beta = np.empty(n, dtype=int)
    gamma = -np.ones((n, d), dtype=int)
    for k, (x, (i, j)) in enumerate(zip(X, maps)):
        i0, j0 = i - 1, j - 1
        tag = f"P{k + 1}" if k < P.shape[0] else f"Q{k - P.shape[0] + 1}"
        alpha[k] = B.add_var(f"alpha_{tag}", nonneg=True, cost=-tradeoff)
        beta[k] = B.add_var(f"beta_{tag}", nonneg=True, cost=-tradeoff)
        B.add_row({z: 1.0, w[j0]: 1.0, w[i0]: -1.0, alpha[k]: -1.0}, x[i0] - x[j0], f"{tag}_margin")
        B.add_row({w[j0]: 1.0, w[i0]: -1.0, beta[k]: -1.0}, x[i0] - x[j0], f"{tag}_order")
        for l0 in range(d):
            if l0 in (i0, j0):
                continue
            row = {w[l0]: 1.0, w[j0]: -1.0}
            if keep_gamma(k, l0):
                gamma[k, l0] = B.add_var(f"gamma_{tag}_{l0 + 1}", nonneg=True, cost=-tradeoff)
                row[gamma[k, l0]] = -1.0
            B.add_row(row, x[j0] - x[l0], f"{tag}_below{l0 + 1}")
    layout = SoftLayout(d=d, n_points=n, maps=tuple(maps), alpha=alpha, beta=beta, gamma=gamma)
    return B.build(), layout


def _validated_maps(P, Q, index_maps, assignment):
    d = P.shape[1]
    n = P.shape[0] + Q.shape[0]
    if index_maps is None:
        if assignment is None:
            raise ValueError("an assignment or per-point index maps are required")
        assignment.check_dim(d)
        index_maps = constant_maps(assignment, P.shape[0], Q.shape[0])
    index_maps = [(int(i), int(j)) for i, j in index_maps]
    if len(index_maps) != n:
        raise ValueError(f"{len(index_maps)} index maps for {n} points")
    for k, (i, j) in enumerate(index_maps):
        if not (1 <= i <= d and 1 <= j <= d) or i == j:
            raise ValueError(f"invalid index pair ({i}, {j}) for point {k + 1}")
    ip = {i for i, _ in index_maps[:P.shape[0]]}
    iq = {i for i, _ in index_maps[P.shape[0]:]}
    if ip & iq:
        raise ValueError("a class-P point and a class-Q point share the same largest index")
    return index_maps


def build_soft_lp_general(P, Q, index_maps: Sequence[tuple[int, int]] | None = None,
                          assignment: IndexAssignment | None = None, tradeoff: float = 1.0,
                          allow_empty_q: bool = False) -> tuple[lpmod.LinearProgram, SoftLayout]:
    """Full slack program: ``2dn + d + 1`` variables and ``2dn`` rows for ``2n`` points.

    ``allow_empty_q`` exists for the single-class unboundedness
    demonstration and should not be used otherwise.
    """
    P, Q = as_classes(P, Q, allow_empty_q=allow_empty_q)
    maps = _validated_maps(P, Q, index_maps, assignment)
    return _build(P, Q, maps, lambda k, l0: True, tradeoff)


def case_gamma_indices(a: IndexAssignment) -> tuple[frozenset[int], frozenset[int]]:
    """1-based indices whose below-``j`` rows keep a slack, for P and for Q."""
    own_p = {a.i_P, a.j_P}
    own_q = {a.i_Q, a.j_Q}
    return frozenset(own_q - own_p), frozenset(own_p - own_q)


def build_soft_lp_case(P, Q, assignment: IndexAssignment,
                       tradeoff: float = 1.0) -> tuple[lpmod.LinearProgram, SoftLayout]:
    """Reduced program for a constant assignment.

    The published reduced programs fix the tradeoff at 1; other positive
    values are accepted and drop the same slacks.
    """
    P, Q = as_classes(P, Q)
    maps = _validated_maps(P, Q, None, assignment)
    keep_p, keep_q = case_gamma_indices(assignment)
    n_p = P.shape[0]

    def keep(k: int, l0: int) -> bool:
        return (l0 + 1) in (keep_p if k < n_p else keep_q)

    return _build(P, Q, maps, keep, tradeoff)


def _unpack(outcome: lpmod.LPOutcome, layout: SoftLayout, warning: str | None) -> SoftMarginResult:
    if outcome.status != lpmod.OPTIMAL:
        return SoftMarginResult(status=outcome.status, layout=layout, warning=warning,
                                lp_outcome=outcome)
    x = outcome.x
    gamma = np.where(layout.gamma >= 0, x[np.maximum(layout.gamma, 0)], 0.0)
    return SoftMarginResult(
        status=lpmod.OPTIMAL,
        objective=outcome.value,
        z=float(x[0]),
        omega=x[1:1 + layout.d].copy(),
        alpha=x[layout.alpha].copy(),
        beta=x[layout.beta].copy(),
        gamma=gamma,
        layout=layout,
        warning=warning,
        lp_outcome=outcome,
    )


def solve_soft(P, Q, cfg: SoftMarginConfig | None = None,
               index_maps: Sequence[tuple[int, int]] | None = None,
               general: bool = False) -> SoftMarginResult:
    """Solve the soft-margin program.

    Uses the reduced case program for a constant assignment unless
    ``general`` is set or per-point ``index_maps`` are supplied. An
    unbounded verdict with ``tradeoff >= 1`` is a bug and raises
    :class:`UnboundedSoftMargin`; below 1 it is returned as a result.
    """
    cfg = cfg or SoftMarginConfig()
    P, Q = as_classes(P, Q)
    if index_maps is not None or general:
        lp, layout = build_soft_lp_general(P, Q, index_maps, cfg.assignment, cfg.tradeoff)
    else:
        if cfg.assignment is None:
            raise ValueError("a constant assignment is required for the reduced program")
        lp, layout = build_soft_lp_case(P, Q, cfg.assignment, cfg.tradeoff)
    if cfg.warning:
        warnings.warn(cfg.warning, RuntimeWarning, stacklevel=2)
    outcome = lpmod.solve(lp)
    if outcome.status == lpmod.INFEASIBLE:
        raise lpmod.NumericalBreakdown("soft-margin program reported infeasible")
    if outcome.status == lpmod.UNBOUNDED and cfg.tradeoff >= 1:
        raise UnboundedSoftMargin("soft-margin objective unbounded despite tradeoff >= 1")
    return _unpack(outcome, layout, cfg.warning)


def evaluate_solution(lp: lpmod.LinearProgram, layout: SoftLayout, x) -> SoftMarginResult:
    """Wrap an arbitrary feasible vector of ``lp`` as a result (objective = ``c @ x``)."""
    x = np.asarray(x, dtype=float)
    if lp.max_violation(x) > DEFAULT_TOL * max(1.0, float(np.abs(lp.b).max(initial=0.0))):
        raise ValueError("vector is not feasible for the program")
    outcome = lpmod.LPOutcome(lpmod.OPTIMAL, 0, x=x, value=float(lp.c @ x))
    return _unpack(outcome, layout, None)


def zero_margin_witness(P, Q, index_maps, omega=None) -> np.ndarray:
    """Feasible point of the general program with ``z = 0`` and the given ``omega``.

    Slacks are the positive parts of each row's violation. The LP vector
    follows the layout of :func:`build_soft_lp_general`.
    """
    P, Q = as_classes(P, Q)
    lp, layout = build_soft_lp_general(P, Q, index_maps)
    d = layout.d
    omega = np.zeros(d) if omega is None else np.asarray(omega, dtype=float)
    X = np.vstack([P, Q])
    x = np.zeros(lp.n_vars)
    x[1:1 + d] = omega
    for k, (pt, (i, j)) in enumerate(zip(X, layout.maps)):
        i0, j0 = i - 1, j - 1
        viol = (omega[j0] - omega[i0]) - (pt[i0] - pt[j0])
        x[layout.alpha[k]] = max(0.0, viol)
        x[layout.beta[k]] = max(0.0, viol)
        for l0 in range(d):
            if layout.gamma[k, l0] >= 0:
                x[layout.gamma[k, l0]] = max(0.0, (omega[l0] - omega[j0]) - (pt[j0] - pt[l0]))
    return x


def verify_gamma_vanishing(a: IndexAssignment, result: SoftMarginResult,
                           tol: float = DEFAULT_TOL) -> bool:
    """True when every slack on an index outside the assignment is within ``tol`` of 0."""
    if result.gamma is None:
        raise ValueError("result has no slack values (not optimal)")
    outside = [l0 for l0 in range(result.gamma.shape[1]) if (l0 + 1) not in a.indices]
    return bool(np.all(result.gamma[:, outside] <= tol))


def objective_upper_bound(p, q, ip: tuple[int, int], iq: tuple[int, int]) -> float:
    """Upper bound on the soft objective (tradeoff >= 1) from one point of each class.

    ``ip`` and ``iq`` are the (largest, second largest) index pairs of
    ``p`` and ``q``. The bound follows from chaining the margin row of
    ``p`` with one or two rows of ``q`` (and ``p``) whose slacks are
    charged against the objective.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    i_p, j_p = (t - 1 for t in ip)
    i_q, j_q = (t - 1 for t in iq)
    if i_p != j_q:
        if j_q == j_p:
            return float(p[i_p] - p[j_p] + q[j_p] - q[i_p])
        return float(q[j_q] - q[i_p] + p[i_p] - p[j_q])
    if i_q == j_p:
        return float(q[j_p] - q[i_p] + p[i_p] - p[j_p])
    return float(q[i_q] - q[i_p] + p[i_p] - p[i_q])
