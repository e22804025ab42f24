import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from tropsvm.hard import CASE2A, CASE2B, CASE3, CASE4, IndexAssignment


# four ultrametrics on 4 leaves; (5,6,4,2) separates them with margin 2
WORKED_P = np.array([[4, 10, 20, 10, 20, 20], [8, 16, 20, 16, 20, 20]], dtype=float)
WORKED_Q = np.array([[2, 20, 20, 20, 20, 10], [6, 20, 20, 20, 20, 18]], dtype=float)
WORKED_ASSIGNMENT = IndexAssignment(5, 6, 4, 2)


@pytest.fixture
def worked():
    return WORKED_P.copy(), WORKED_Q.copy(), WORKED_ASSIGNMENT


def random_assignment(rng, case, d):
    """Uniformly drawn assignment of the requested case in dimension ``d``."""
    while True:
        iP, jP, iQ, jQ = (int(v) + 1 for v in rng.choice(d, 4, replace=False))
        if case == CASE2A:
            jQ = iP
        elif case == CASE2B:
            jP = iQ
        elif case == CASE3:
            jQ, jP = iP, iQ
        elif case == CASE4:
            jQ = jP
        a = IndexAssignment(iP, jP, iQ, jQ)
        if a.case == case:
            return a


def planted_classes(rng, a, n, d, margin=1.0, omega=None):
    """Points whose ``omega + x`` is largest at i, second at j, with gap >= margin."""
    omega = rng.normal(0, 3, d) if omega is None else omega

    def draw(i, j):
        y = rng.uniform(0, 1, (n, d))
        y[:, j - 1] = 1.0 + rng.uniform(0, 0.5, n)
        y[:, i - 1] = y[:, j - 1] + margin + rng.uniform(0, 0.5, n)
        return y - omega + rng.normal(0, 5, (n, 1))

    return draw(a.i_P, a.j_P), draw(a.i_Q, a.j_Q), omega


def mixed_instance(rng, a, n, d):
    """Half the time planted-separable (with noise), half pure noise."""
    if rng.random() < 0.5:
        P, Q, _ = planted_classes(rng, a, n, d, margin=rng.uniform(0.1, 2.0))
        return P + rng.normal(0, 0.3, P.shape), Q + rng.normal(0, 0.3, Q.shape)
    return rng.normal(0, 2, (n, d)), rng.normal(0, 2, (n, d))


def scipy_verdict(lp):
    """Independent LP verdict via HiGHS; resolves its 'infeasible or unbounded' status."""
    bounds = [(0, None) if nn else (None, None) for nn in lp.nonneg]
    r = linprog(-lp.c, A_ub=lp.A, b_ub=lp.b, bounds=bounds, method="highs")
    if r.status == 0:
        return "optimal", -r.fun
    if r.status == 3:
        return "unbounded", None
    feas = linprog(np.zeros_like(lp.c), A_ub=lp.A, b_ub=lp.b, bounds=bounds, method="highs")
    return ("unbounded", None) if feas.status == 0 else ("infeasible", None)


def _best_vertex(c, G, h):
    n = c.size
    subsets = np.array(list(itertools.combinations(range(G.shape[0]), n)))
    M = G[subsets]
    ok = np.abs(np.linalg.det(M)) > 1e-9
    subsets, M = subsets[ok], M[ok]
    X = np.linalg.solve(M, h[subsets][..., None])[..., 0]
    feas = np.all(X @ G.T <= h + 1e-9 * np.maximum(1.0, np.abs(h)), axis=1)
    if not feas.any():
        return None
    return float((X[feas] @ c).max())


def vertex_enumeration(c, A, b, nonneg, box=1e4):
    """Brute-force LP oracle: best basic feasible point of the boxed program.

    The box ``|x_k| <= box`` guarantees vertices exist. Solving again with
    a ten times larger box tells bounded programs (same value) from
    unbounded ones (value grows).
    """
    c = np.asarray(c, float)
    A = np.asarray(A, float).reshape(-1, c.size)
    b = np.asarray(b, float)
    n = c.size
    sign_rows = -np.eye(n)[np.asarray(nonneg, bool)]
    values = []
    for B in (box, 10 * box):
        G = np.vstack([A, sign_rows, np.eye(n), -np.eye(n)])
        h = np.concatenate([b, np.zeros(sign_rows.shape[0]), np.full(2 * n, B)])
        values.append(_best_vertex(c, G, h))
    if values[0] is None:
        return "infeasible", None
    if abs(values[1] - values[0]) > 1e-6 * max(1.0, abs(values[0])):
        return "unbounded", None
    return "optimal", values[0]
