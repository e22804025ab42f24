"""Sector-lookup classifiers built on a trained tropical hyperplane.

A test point ``t`` is routed by the set of indices where ``omega + t``
attains its maximum, restricted to the indices of the training
assignment. Each of the four algorithms (one per case; case 2b reuses the
case-2a table with the classes exchanged) has two lookup tables, chosen by
whether the coalescent ratio ``C`` is at most the threshold ``eta``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import hard, soft
from .hard import CASE1, CASE2A, CASE2B, CASE3, CASE4, IndexAssignment
from .tropical import DEFAULT_TOL, sector_membership

DEFAULT_ETA = 4.8
MODEL_FORMAT = "tropsvm-model-v1"
STRATEGIES = ("hard_enumerate", "soft_fixed_assignment", "soft_enumerate")
LOW, HIGH = "C<=eta", "C>eta"

ALGORITHM_FOR_CASE = {CASE1: 1, CASE2A: 2, CASE2B: 2, CASE3: 3, CASE4: 4}
ROLES = {
    1: ("iP", "jP", "iQ", "jQ"),
    2: ("iP", "jP", "iQ"),
    3: ("k1", "k2"),
    4: ("iP", "iQ", "j"),
}

# rows sent to P; everything else in the power set of the roles goes to Q.
# Both halves are listed so the load-time check catches transcription slips.
_RAW_TABLES = {
    1: {
        LOW: {
            "P": [{"iP"}, {"jP"}, {"iP", "jP"}, {"iP", "iQ"}, {"jP", "iQ"}, {"jP", "jQ"},
                  {"jP", "iQ", "jQ"}, {"iP", "jP", "iQ", "jQ"}],
            "Q": [{"iQ"}, {"jQ"}, {"iQ", "jQ"}, {"iP", "jQ"}, {"iP", "jP", "iQ"},
                  {"iP", "jP", "jQ"}, {"iP", "iQ", "jQ"}, set()],
        },
        HIGH: {
            "P": [{"iP"}, {"jP"}, {"iP", "jP"}, {"iP", "iQ"}, {"jP", "jQ"}, {"iP", "iQ", "jQ"},
                  {"jP", "iQ", "jQ"}, {"iP", "jP", "iQ", "jQ"}],
            "Q": [{"iQ"}, {"jQ"}, {"iQ", "jQ"}, {"iP", "jQ"}, {"jP", "iQ"}, {"iP", "jP", "iQ"},
                  {"iP", "jP", "jQ"}, set()],
        },
    },
    2: {
        LOW: {
            "P": [{"iP"}, {"jP"}, {"iQ"}, {"iQ", "jP"}],
            "Q": [{"iP", "jP"}, {"iP", "iQ"}, {"iP", "iQ", "jP"}, set()],
        },
        HIGH: {
            "P": [{"iP"}, {"iP", "jP"}, {"iP", "iQ", "jP"}, set()],
            "Q": [{"jP"}, {"iQ"}, {"iP", "iQ"}, {"iQ", "jP"}],
        },
    },
    3: {
        LOW: {"P": [{"k1"}, {"k1", "k2"}], "Q": [{"k2"}, set()]},
        HIGH: {"P": [{"k1"}, set()], "Q": [{"k2"}, {"k1", "k2"}]},
    },
    4: {
        LOW: {
            "P": [{"iQ"}, {"iP", "iQ"}, {"iP", "j"}, {"j"}],
            "Q": [{"iP"}, {"iQ", "j"}, {"iP", "iQ", "j"}, set()],
        },
        HIGH: {
            "P": [{"iP"}, {"iP", "iQ"}, {"iP", "iQ", "j"}, set()],
            "Q": [{"iQ"}, {"iP", "j"}, {"iQ", "j"}, {"j"}],
        },
    },
}


class TableError(RuntimeError):
    pass


def _compile_tables(raw) -> dict[int, dict[str, dict[frozenset[str], str]]]:
    """Check every table is total and disjoint over its power set, then index it."""
    out = {}
    for alg, regimes in raw.items():
        roles = ROLES[alg]
        power = {frozenset(c) for r in range(len(roles) + 1) for c in itertools.combinations(roles, r)}
        out[alg] = {}
        for regime, rows in regimes.items():
            table: dict[frozenset[str], str] = {}
            for label in ("P", "Q"):
                for row in rows[label]:
                    key = frozenset(row)
                    if key not in power:
                        raise TableError(f"algorithm {alg} {regime}: unknown roles {sorted(key)}")
                    if key in table:
                        raise TableError(f"algorithm {alg} {regime}: {sorted(key)} listed twice")
                    table[key] = label
            missing = power - set(table)
            if missing:
                raise TableError(f"algorithm {alg} {regime}: uncovered {sorted(map(sorted, missing))}")
            out[alg][regime] = table
    return out


TABLES = _compile_tables(_RAW_TABLES)


def role_indices(a: IndexAssignment) -> tuple[int, dict[str, int], bool]:
    """(algorithm, role -> 1-based index, whether labels are swapped) for ``a``."""
    case = a.case
    if case == CASE1:
        return 1, {"iP": a.i_P, "jP": a.j_P, "iQ": a.i_Q, "jQ": a.j_Q}, False
    if case == CASE2A:
        return 2, {"iP": a.i_P, "jP": a.j_P, "iQ": a.i_Q}, False
    if case == CASE2B:
        # the mirror image of 2a: Q plays the part of P
        return 2, {"iP": a.i_Q, "jP": a.j_Q, "iQ": a.i_P}, True
    if case == CASE3:
        return 3, {"k1": a.i_P, "k2": a.i_Q}, False
    return 4, {"iP": a.i_P, "iQ": a.i_Q, "j": a.j_P}, False


def regime(ratio_c: float, eta: float) -> str:
    return LOW if ratio_c <= eta else HIGH


class NoFeasibleAssignment(ValueError):
    """Hard-margin training found no separating assignment."""


@dataclass(frozen=True)
class TrainedModel:
    omega: np.ndarray
    assignment: IndexAssignment
    margin: float
    ratio_c: float
    eta: float = DEFAULT_ETA
    tradeoff: float = 1.0
    tol: float = DEFAULT_TOL
    strategy: str = "soft_fixed_assignment"
    objective: float | None = None

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        object.__setattr__(self, "omega", omega)
        if omega.ndim != 1 or omega.size < 2 or not np.all(np.isfinite(omega)):
            raise ValueError("omega must be a finite vector of length >= 2")
        self.assignment.check_dim(omega.size)
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.ratio_c > 0:
            raise ValueError("ratio_c must be positive")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")

    @property
    def dimension(self) -> int:
        return self.omega.size

    @property
    def case(self) -> str:
        return self.assignment.case

    @property
    def algorithm(self) -> int:
        return ALGORITHM_FOR_CASE[self.case]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(dumps_model(self))

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        return loads_model(Path(path).read_text())


def dumps_model(m: TrainedModel) -> str:
    """Versioned ``key=value`` text; floats use repr so they round-trip exactly."""
    lines = [
        f"format={MODEL_FORMAT}",
        f"dimension={m.dimension}",
        f"case={m.case}",
        f"algorithm={m.algorithm}",
        f"assignment={m.assignment}",
        f"strategy={m.strategy}",
        f"margin={m.margin!r}",
        f"objective={'' if m.objective is None else repr(m.objective)}",
        f"tradeoff={m.tradeoff!r}",
        f"ratio_c={m.ratio_c!r}",
        f"eta={m.eta!r}",
        f"tolerance={m.tol!r}",
        "omega=" + ",".join(repr(float(v)) for v in m.omega),
    ]
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> TrainedModel:
    fields: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"model line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    if fields.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {fields.get('format')!r}")
    try:
        omega = np.array([float(v) for v in fields["omega"].split(",")])
        m = TrainedModel(
            omega=omega,
            assignment=IndexAssignment.parse(fields["assignment"]),
            margin=float(fields["margin"]),
            ratio_c=float(fields["ratio_c"]),
            eta=float(fields["eta"]),
            tradeoff=float(fields["tradeoff"]),
            tol=float(fields["tolerance"]),
            strategy=fields.get("strategy", "soft_fixed_assignment"),
            objective=float(fields["objective"]) if fields.get("objective") else None,
        )
    except KeyError as exc:
        raise ValueError(f"model file is missing field {exc.args[0]!r}") from None
    if int(fields["dimension"]) != omega.size:
        raise ValueError("model dimension does not match omega length")
    if fields.get("case", m.case) != m.case:
        raise ValueError(f"model case {fields['case']!r} does not match its assignment")
    return m


def assign_point(t, m: TrainedModel) -> str:
    """Label ``t`` as ``"P"`` or ``"Q"`` by the model's sector table."""
    t = np.asarray(t, dtype=float)
    if t.size != m.dimension:
        raise ValueError(f"point has dimension {t.size}, model expects {m.dimension}")
    alg, roles, swapped = role_indices(m.assignment)
    sectors = sector_membership(t, m.omega, m.tol)
    present = frozenset(r for r, idx in roles.items() if idx in sectors)
    label = TABLES[alg][regime(m.ratio_c, m.eta)][present]
    if swapped:
        label = "Q" if label == "P" else "P"
    return label


@dataclass(frozen=True)
class PredictionReport:
    predicted: tuple[str, ...]
    confusion: dict[tuple[str, str], int]
    accuracy: float

    def summary(self) -> str:
        c = self.confusion
        return (f"accuracy={self.accuracy!r}\n"
                f"true_P_pred_P={c[('P', 'P')]}\ntrue_P_pred_Q={c[('P', 'Q')]}\n"
                f"true_Q_pred_P={c[('Q', 'P')]}\ntrue_Q_pred_Q={c[('Q', 'Q')]}\n")


def predict(points, m: TrainedModel) -> tuple[str, ...]:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != m.dimension:
        raise ValueError(f"data has dimension {points.shape[1]}, model expects {m.dimension}")
    return tuple(assign_point(t, m) for t in points)


def score(labels: Sequence[str], predicted: Sequence[str]) -> PredictionReport:
    if len(labels) == 0:
        raise ValueError("cannot score an empty test set")
    if len(labels) != len(predicted):
        raise ValueError(f"{len(predicted)} predictions for {len(labels)} labels")
    confusion = {(a, b): 0 for a in "PQ" for b in "PQ"}
    for truth, guess in zip(labels, predicted):
        if truth not in "PQ" or guess not in "PQ" or len(truth) != 1 or len(guess) != 1:
            raise ValueError(f"labels must be P or Q, got {truth!r}/{guess!r}")
        confusion[(truth, guess)] += 1
    correct = confusion[("P", "P")] + confusion[("Q", "Q")]
    return PredictionReport(tuple(predicted), confusion, correct / len(labels))


def evaluate(points, labels: Sequence[str], m: TrainedModel) -> PredictionReport:
    if len(labels) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    return score(labels, predict(points, m))


def split_classes(points, labels: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lab = np.asarray(labels)
    if lab.size != points.shape[0]:
        raise ValueError(f"{lab.size} labels for {points.shape[0]} points")
    P, Q = points[lab == "P"], points[lab == "Q"]
    if P.shape[0] == 0 or Q.shape[0] == 0:
        raise ValueError("training data must contain both classes")
    return P, Q


def train(points, labels: Sequence[str], strategy: str, ratio_c: float,
          assignment: IndexAssignment | None = None, eta: float = DEFAULT_ETA,
          tradeoff: float = 1.0, tol: float = DEFAULT_TOL) -> TrainedModel:
    """Fit a hyperplane and wrap it with the classifier parameters.

    ``hard_enumerate`` searches every constant assignment by closed form;
    ``soft_fixed_assignment`` solves the reduced soft program for the
    given ``assignment``; ``soft_enumerate`` solves it for every
    assignment and keeps the best objective (first in lexicographic order
    on ties).
    """
    P, Q = split_classes(points, labels)
    common = dict(ratio_c=ratio_c, eta=eta, tradeoff=tradeoff, tol=tol, strategy=strategy)
    if strategy == "hard_enumerate":
        res = hard.enumerate_assignments(P, Q)
        if not res.feasible:
            raise NoFeasibleAssignment(
                "no constant assignment separates the classes; use a soft strategy")
        return TrainedModel(omega=res.omega, assignment=res.assignment, margin=res.z, **common)
    if strategy == "soft_fixed_assignment":
        if assignment is None:
            raise ValueError("soft_fixed_assignment needs an assignment")
        r = soft.solve_soft(P, Q, soft.SoftMarginConfig(assignment, tradeoff))
        return TrainedModel(omega=r.omega, assignment=assignment, margin=r.z,
                            objective=r.objective, **common)
    if strategy == "soft_enumerate":
        best = None
        for a in hard.iter_assignments(P.shape[1]):
            r = soft.solve_soft(P, Q, soft.SoftMarginConfig(a, tradeoff))
            if best is None or r.objective > best[0].objective + 1e-9 * max(1.0, abs(best[0].objective)):
                best = (r, a)
        r, a = best
        return TrainedModel(omega=r.omega, assignment=a, margin=r.z, objective=r.objective, **common)
    raise ValueError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")


def with_regime(m: TrainedModel, ratio_c: float | None = None, eta: float | None = None) -> TrainedModel:
    """Copy of ``m`` with a different ``C`` or ``eta``."""
    return replace(m, ratio_c=m.ratio_c if ratio_c is None else ratio_c,
                   eta=m.eta if eta is None else eta)
