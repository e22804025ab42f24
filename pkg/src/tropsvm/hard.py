"""Hard-margin tropical SVM.

A hyperplane with normal vector ``omega`` separates P and Q with margin
``z`` when every point ``xi`` has ``omega + xi`` largest at ``i(xi)``,
second largest at ``j(xi)``, and the gap between the two is at least
``z``. With the index maps fixed this is a linear program in
``(z, omega)``; when the maps are constant on each class the program has
a closed-form optimum, split into five cases by which of the four indices
coincide.

Indices in the public API are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import lp as lpmod

CASE1 = "case1"
CASE2A = "case2a"
CASE2B = "case2b"
CASE3 = "case3"
CASE4 = "case4"
CASES = (CASE1, CASE2A, CASE2B, CASE3, CASE4)

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class IndexAssignment:
    """Constant-per-class choice of largest and second-largest coordinates."""

    i_P: int
    j_P: int
    i_Q: int
    j_Q: int

    def __post_init__(self):
        for name in ("i_P", "j_P", "i_Q", "j_Q"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.i_P == self.j_P:
            raise ValueError("i_P and j_P must differ")
        if self.i_Q == self.j_Q:
            raise ValueError("i_Q and j_Q must differ")
        if self.i_P == self.i_Q:
            raise ValueError("i_P and i_Q must differ")

    @classmethod
    def parse(cls, text: str) -> "IndexAssignment":
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if len(parts) != 4:
            raise ValueError(f"assignment needs four comma-separated indices, got {text!r}")
        return cls(*(int(p) for p in parts))

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.i_P, self.j_P, self.i_Q, self.j_Q)

    def __str__(self) -> str:
        return ",".join(str(v) for v in self.as_tuple())

    @property
    def case(self) -> str:
        return classify_case(self)

    @property
    def indices(self) -> frozenset[int]:
        return frozenset(self.as_tuple())

    def check_dim(self, d: int) -> None:
        if max(self.as_tuple()) > d:
            raise ValueError(f"assignment {self} uses an index above dimension {d}")

    def swapped(self) -> "IndexAssignment":
        """The same assignment with the roles of P and Q exchanged."""
        return IndexAssignment(self.i_Q, self.j_Q, self.i_P, self.j_P)


def classify_case(a: IndexAssignment) -> str:
    if a.j_P == a.j_Q:
        return CASE4
    if a.i_P == a.j_Q and a.i_Q == a.j_P:
        return CASE3
    if a.i_P == a.j_Q:
        return CASE2A
    if a.i_Q == a.j_P:
        return CASE2B
    return CASE1


def as_classes(P, Q, allow_empty_q: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Validate two point sets and return them as 2-D float arrays."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.asarray(Q, dtype=float)
    if Q.size == 0 and allow_empty_q:
        Q = Q.reshape(0, P.shape[1])
    Q = np.atleast_2d(Q)
    if P.shape[0] == 0 or (Q.shape[0] == 0 and not allow_empty_q):
        raise ValueError("both classes must be non-empty")
    if P.ndim != 2 or Q.ndim != 2 or P.shape[1] != Q.shape[1]:
        raise ValueError(f"dimension mismatch between classes: {P.shape[1:]} vs {Q.shape[1:]}")
    if P.shape[1] < 2:
        raise ValueError("points need at least 2 coordinates")
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(Q))):
        raise ValueError("points must be finite")
    return P, Q


def constant_maps(a: IndexAssignment, n_p: int, n_q: int) -> list[tuple[int, int]]:
    """Per-point (i, j) maps for a constant assignment, P first then Q."""
    return [(a.i_P, a.j_P)] * n_p + [(a.i_Q, a.j_Q)] * n_q


def _check_maps(maps: Sequence[tuple[int, int]], n_points: int, d: int) -> None:
    if len(maps) != n_points:
        raise ValueError(f"{len(maps)} index maps for {n_points} points")
    for k, (i, j) in enumerate(maps):
        if not (1 <= i <= d and 1 <= j <= d) or i == j:
            raise ValueError(f"invalid index pair ({i}, {j}) for point {k + 1}")


def build_hard_lp(P, Q, assignment: IndexAssignment | None = None,
                  index_maps: Sequence[tuple[int, int]] | None = None) -> lpmod.LinearProgram:
    """Margin-maximization program over ``(z, omega_1..omega_d)``.

    Per point ``xi`` with indices ``(i, j)``, in order: the margin row,
    the row keeping ``i`` above ``j``, and one row for every other index
    ``l`` keeping it below ``j``. Either a constant ``assignment`` or
    explicit per-point ``index_maps`` (P first, then Q) must be given.
    """
    P, Q = as_classes(P, Q)
    X = np.vstack([P, Q])
    n, d = X.shape
    if index_maps is None:
        if assignment is None:
            raise ValueError("an assignment or per-point index maps are required")
        assignment.check_dim(d)
        index_maps = constant_maps(assignment, P.shape[0], Q.shape[0])
    _check_maps(index_maps, n, d)

    A = np.zeros((n * d, d + 1))
    b = np.zeros(n * d)
    names = []
    r = 0
    for k, (x, (i, j)) in enumerate(zip(X, index_maps)):
        i0, j0 = i - 1, j - 1
        tag = f"P{k + 1}" if k < P.shape[0] else f"Q{k - P.shape[0] + 1}"
        A[r, 0] = 1.0
        A[r, 1 + j0] += 1.0
        A[r, 1 + i0] -= 1.0
        b[r] = x[i0] - x[j0]
        names.append(f"{tag}_margin")
        r += 1
        A[r, 1 + j0] += 1.0
        A[r, 1 + i0] -= 1.0
        b[r] = x[i0] - x[j0]
        names.append(f"{tag}_order")
        r += 1
        for l0 in range(d):
            if l0 in (i0, j0):
                continue
            A[r, 1 + l0] += 1.0
            A[r, 1 + j0] -= 1.0
            b[r] = x[j0] - x[l0]
            names.append(f"{tag}_below{l0 + 1}")
            r += 1
    var_names = ("z",) + tuple(f"w{k + 1}" for k in range(d))
    return lpmod.LinearProgram(c=np.eye(1, d + 1).ravel(), A=A, b=b,
                               nonneg=np.zeros(d + 1, dtype=bool),
                               var_names=var_names, row_names=tuple(names))


def pair_mins(X: np.ndarray) -> np.ndarray:
    """``M[a, b] = min over rows x of (x_a - x_b)`` (0-based)."""
    return (X[:, :, None] - X[:, None, :]).min(axis=0)


@dataclass(frozen=True)
class CaseConstants:
    case: str
    values: dict[str, float]

    def __getitem__(self, key: str) -> float:
        return self.values[key]


@dataclass(frozen=True)
class HardMarginResult:
    feasible: bool
    assignment: IndexAssignment | None
    z: float | None = None
    omega: np.ndarray | None = None
    constants: CaseConstants | None = None
    lp_cross_check: lpmod.LPOutcome | None = field(default=None, compare=False)
    n_feasible: int | None = None


def _constants_from(mP: np.ndarray, mQ: np.ndarray, a: IndexAssignment) -> CaseConstants:
    case = classify_case(a)
    iP, jP, iQ, jQ = (v - 1 for v in a.as_tuple())
    if case == CASE1:
        vals = dict(A=mP[iP, jP], B=mP[jP, iQ], C=mP[jP, jQ],
                    D=mQ[iQ, jQ], E=mQ[jQ, iP], F=mQ[jQ, jP])
    elif case == CASE2A:
        # i_P = j_Q
        vals = {"A'": mP[iP, jP], "A": min(mP[iP, jP], mQ[iP, jP]),
                "B": mP[jP, iQ], "C": mQ[iQ, iP]}
    elif case == CASE2B:
        # i_Q = j_P: the 2a formulas with the classes exchanged
        vals = {"A'": mQ[iQ, jQ], "A": min(mQ[iQ, jQ], mP[iQ, jQ]),
                "B": mQ[jQ, iP], "C": mP[iP, iQ]}
    elif case == CASE3:
        k1, k2 = iP, iQ
        vals = {"min_p(k1-k2)": mP[k1, k2], "max_p(k2-k1)": -mP[k1, k2],
                "min_q(k2-k1)": mQ[k2, k1]}
    else:
        j = jP
        vals = {"min_p(iP-j)": mP[iP, j], "max_q(iP-j)": -mQ[j, iP],
                "min_q(iQ-j)": mQ[iQ, j], "max_p(iQ-j)": -mP[j, iQ]}
    return CaseConstants(case, {k: float(v) for k, v in vals.items()})


def case_constants(P, Q, a: IndexAssignment) -> CaseConstants:
    P, Q = as_classes(P, Q)
    a.check_dim(P.shape[1])
    return _constants_from(pair_mins(P), pair_mins(Q), a)


def _scale(P: np.ndarray, Q: np.ndarray) -> float:
    return max(1.0, float(np.abs(P).max()), float(np.abs(Q).max()))


def _raw_margin(k: CaseConstants) -> float:
    """Closed-form margin expression, evaluated whether or not it is feasible."""
    v = k.values
    if k.case == CASE1:
        A, B, C, D, E, F = (v[s] for s in "ABCDEF")
        return min(A + C + E, D + B + F, 0.5 * (A + B + D + E))
    if k.case in (CASE2A, CASE2B):
        Ap, A, B, C = v["A'"], v["A"], v["B"], v["C"]
        return min(A + B + C, 0.5 * (Ap + B + C))
    if k.case == CASE3:
        return 0.5 * (v["min_p(k1-k2)"] + v["min_q(k2-k1)"])
    return min(v["min_p(iP-j)"] - v["max_q(iP-j)"], v["min_q(iQ-j)"] - v["max_p(iQ-j)"])


def _closed_form(k: CaseConstants, tol: float) -> tuple[bool, float | None]:
    v = k.values
    if k.case == CASE1:
        A, B, C, D, E, F = (v[s] for s in "ABCDEF")
        feasible = max(-F, -A - E) <= min(D + B, C) + tol
    elif k.case in (CASE2A, CASE2B):
        feasible = v["A"] + v["B"] + v["C"] >= -tol
    elif k.case == CASE3:
        feasible = v["max_p(k2-k1)"] <= v["min_q(k2-k1)"] + tol
    else:
        feasible = (v["max_q(iP-j)"] <= v["min_p(iP-j)"] + tol
                    and v["max_p(iQ-j)"] <= v["min_q(iQ-j)"] + tol)
    if not feasible:
        return False, None
    return True, max(_raw_margin(k), 0.0)


def hard_feasible_and_margin(P, Q, a: IndexAssignment, tol: float = FEAS_TOL,
                             cross_check: bool = False) -> HardMarginResult:
    """Closed-form feasibility verdict and optimal margin for one assignment.

    ``tol`` is applied relative to the largest coordinate magnitude. With
    ``cross_check`` the LP is also solved and attached to the result.
    """
    P, Q = as_classes(P, Q)
    a.check_dim(P.shape[1])
    k = _constants_from(pair_mins(P), pair_mins(Q), a)
    feasible, z = _closed_form(k, tol * _scale(P, Q))
    check = lpmod.solve(build_hard_lp(P, Q, a)) if cross_check else None
    return HardMarginResult(feasible=feasible, assignment=a, z=z, constants=k,
                            lp_cross_check=check)


def _fill_free_coordinates(X: np.ndarray, maps: Sequence[tuple[int, int]],
                           omega: np.ndarray, fixed: Iterable[int]) -> np.ndarray:
    """Set every coordinate outside ``fixed`` as large as the below-``j`` rows allow."""
    omega = omega.copy()
    fixed = set(fixed)
    d = X.shape[1]
    for l0 in range(d):
        if l0 in fixed:
            continue
        bound = np.inf
        for x, (i, j) in zip(X, maps):
            i0, j0 = i - 1, j - 1
            if l0 not in (i0, j0):
                bound = min(bound, x[j0] - x[l0] + omega[j0])
        omega[l0] = bound if np.isfinite(bound) else 0.0
    return omega


def construct_omega(P, Q, a: IndexAssignment, result: HardMarginResult | None = None) -> np.ndarray:
    """A normal vector attaining the closed-form margin for assignment ``a``.

    The coordinates in the assignment are fixed from the case constants
    (with ``omega_{j_P} = 0`` as anchor); every remaining coordinate is
    pushed down just far enough that it never competes with ``j(xi)``.
    """
    P, Q = as_classes(P, Q)
    if result is None:
        result = hard_feasible_and_margin(P, Q, a)
    if not result.feasible:
        raise ValueError(f"assignment {a} is infeasible; no separating normal vector exists")
    d = P.shape[1]
    a.check_dim(d)
    case = classify_case(a)
    if case == CASE2B:
        # mirror image of 2a
        return construct_omega(Q, P, a.swapped())
    k = _constants_from(pair_mins(P), pair_mins(Q), a)
    v = k.values
    iP, jP, iQ, jQ = (t - 1 for t in a.as_tuple())
    omega = np.zeros(d)
    if case == CASE1:
        A, B, C, D, E, F = (v[s] for s in "ABCDEF")
        u = min(max(0.5 * (D + B - A - E), -F), C)
        omega[jQ] = u
        omega[iP] = u + E
        omega[iQ] = B
    elif case == CASE2A:
        Ap, A, B, C = v["A'"], v["A"], v["B"], v["C"]
        omega[iP] = max(0.5 * (B + C - Ap), -A)
        omega[iQ] = B
    elif case == CASE3:
        # anchor at k2 = j_P; omega_{k1} - omega_{k2} is the midpoint
        omega[iP] = 0.5 * (v["min_q(k2-k1)"] + v["max_p(k2-k1)"])
    else:
        mP, mQ = pair_mins(P), pair_mins(Q)
        omega[iP] = mQ[jP, iP]
        omega[iQ] = mP[jP, iQ]
    X = np.vstack([P, Q])
    maps = constant_maps(a, P.shape[0], Q.shape[0])
    return _fill_free_coordinates(X, maps, omega, {iP, jP, iQ, jQ})


def achieved_margin(P, Q, a: IndexAssignment, omega) -> float:
    """Smallest gap ``(xi + omega)_i - (xi + omega)_j`` over all points."""
    P, Q = as_classes(P, Q)
    omega = np.asarray(omega, dtype=float)
    gp = (P[:, a.i_P - 1] + omega[a.i_P - 1]) - (P[:, a.j_P - 1] + omega[a.j_P - 1])
    gq = (Q[:, a.i_Q - 1] + omega[a.i_Q - 1]) - (Q[:, a.j_Q - 1] + omega[a.j_Q - 1])
    return float(min(gp.min(), gq.min()))


def hard_residual(P, Q, a: IndexAssignment, z: float, omega) -> float:
    """Largest violation of any hard-margin row at ``(z, omega)``."""
    lp = build_hard_lp(P, Q, a)
    return lp.max_violation(np.concatenate([[z], np.asarray(omega, dtype=float)]))


def iter_assignments(d: int) -> Iterable[IndexAssignment]:
    """All valid constant assignments in lexicographic order."""
    for iP in range(1, d + 1):
        for jP in range(1, d + 1):
            if jP == iP:
                continue
            for iQ in range(1, d + 1):
                if iQ == iP:
                    continue
                for jQ in range(1, d + 1):
                    if jQ != iQ:
                        yield IndexAssignment(iP, jP, iQ, jQ)


def enumerate_assignments(P, Q, tol: float = FEAS_TOL, with_omega: bool = True) -> HardMarginResult:
    """Best closed-form margin over every constant-per-class assignment.

    Ties in ``z`` keep the lexicographically smallest assignment. Only a
    strictly positive margin separates the classes, so when every feasible
    assignment has ``z = 0`` (or none is feasible) the result has
    ``feasible=False``; ``n_feasible`` still counts the LP-feasible ones.
    """
    P, Q = as_classes(P, Q)
    d = P.shape[1]
    mP, mQ = pair_mins(P), pair_mins(Q)
    ftol = tol * _scale(P, Q)
    best: tuple[float, IndexAssignment, CaseConstants] | None = None
    n_feasible = 0
    for a in iter_assignments(d):
        k = _constants_from(mP, mQ, a)
        feasible, z = _closed_form(k, ftol)
        if not feasible:
            continue
        n_feasible += 1
        if best is None or z > best[0]:
            best = (z, a, k)
    if best is None or best[0] <= ftol:
        return HardMarginResult(feasible=False, assignment=None, n_feasible=n_feasible)
    z, a, k = best
    res = HardMarginResult(feasible=True, assignment=a, z=z, constants=k, n_feasible=n_feasible)
    if with_omega:
        res = HardMarginResult(feasible=True, assignment=a, z=z, constants=k,
                               omega=construct_omega(P, Q, a, res), n_feasible=n_feasible)
    return res


def best_assignment_for_case(P, Q, case: str) -> IndexAssignment:
    """Assignment of the given case with the largest closed-form margin.

    The margin expression is evaluated even for infeasible assignments,
    where it is negative and measures how far the classes are from being
    separable that way. Ties keep the lexicographically smallest
    assignment.
    """
    if case not in CASES:
        raise ValueError(f"unknown case {case!r}")
    P, Q = as_classes(P, Q)
    mP, mQ = pair_mins(P), pair_mins(Q)
    best: tuple[float, IndexAssignment] | None = None
    for a in iter_assignments(P.shape[1]):
        if classify_case(a) != case:
            continue
        z = _raw_margin(_constants_from(mP, mQ, a))
        if best is None or z > best[0]:
            best = (z, a)
    if best is None:
        raise ValueError(f"dimension {P.shape[1]} admits no {case} assignment")
    return best[1]
