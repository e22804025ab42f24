import warnings

import numpy as np
import pytest

from conftest import mixed_instance, planted_classes, random_assignment
from tropsvm.hard import CASE4, CASES, IndexAssignment, hard_feasible_and_margin
from tropsvm.lp import INFEASIBLE, OPTIMAL, UNBOUNDED, NumericalBreakdown, solve
from tropsvm.soft import (SoftMarginConfig, UnboundedSoftMargin, build_soft_lp_case,
                          build_soft_lp_general, evaluate_solution, objective_upper_bound, solve_soft,
                          verify_gamma_vanishing, zero_margin_witness)
from tropsvm.tropical import sector_membership

SINGLE_CLASS_P = np.array([[5.0, 5, 4, 3, 2, 1]])


def random_maps(rng, n_p, n_q, d):
    """Per-point (i, j) maps with no largest index shared across the classes."""
    split = rng.permutation(d) + 1
    cut = int(rng.integers(1, d))
    own_p, own_q = split[:cut], split[cut:]
    maps = []
    for own, n in ((own_p, n_p), (own_q, n_q)):
        for _ in range(n):
            i = int(rng.choice(own))
            j = int(rng.choice([v for v in range(1, d + 1) if v != i]))
            maps.append((i, j))
    return maps


def test_config_validation():
    with pytest.raises(ValueError):
        SoftMarginConfig(tradeoff=0)
    assert SoftMarginConfig(tradeoff=0.5).warning
    assert SoftMarginConfig(tradeoff=1).warning is None


def test_general_program_size():
    rng = np.random.default_rng(0)
    for d, n in [(4, 1), (6, 3), (10, 5)]:
        P, Q = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        lp, _ = build_soft_lp_general(P, Q, assignment=IndexAssignment(1, 2, 3, 4))
        assert lp.n_vars == 2 * d * n + d + 1
        assert lp.n_rows == 2 * d * n


def test_case_program_sizes():
    # Case3: (z; alpha; beta) has 4n+1 sign-restricted entries, plus d free omegas
    P, Q = np.array([[0.0, 1.0, 0.0]]), np.array([[0.0, 0.0, 1.0]])
    lp, layout = build_soft_lp_case(P, Q, IndexAssignment(2, 3, 3, 2))
    assert lp.nonneg.sum() == 4 * 1 + 1 and lp.n_vars == 4 + 1 + 3
    rng = np.random.default_rng(1)
    P, Q = rng.normal(size=(2, 6)), rng.normal(size=(2, 6))
    lp, layout = build_soft_lp_case(P, Q, IndexAssignment(1, 2, 3, 4))
    assert (layout.gamma >= 0).sum() == 8
    assert lp.nonneg.sum() == 8 * 2 + 1


@pytest.mark.parametrize("quad, per_p, per_q", [
    ((1, 2, 3, 4), {3, 4}, {1, 2}),
    ((1, 2, 3, 1), {3}, {2}),
    ((1, 2, 2, 3), {3}, {1}),
    ((1, 2, 2, 1), set(), set()),
    ((1, 3, 2, 3), {2}, {1}),
])
def test_case_programs_keep_printed_slacks(quad, per_p, per_q):
    rng = np.random.default_rng(2)
    P, Q = rng.normal(size=(2, 5)), rng.normal(size=(3, 5))
    _, layout = build_soft_lp_case(P, Q, IndexAssignment(*quad))
    for k in range(5):
        kept = {l0 + 1 for l0 in np.flatnonzero(layout.gamma[k] >= 0)}
        assert kept == (per_p if k < 2 else per_q)


def test_invalid_maps_rejected():
    P, Q = np.zeros((1, 4)), np.ones((1, 4))
    with pytest.raises(ValueError):
        build_soft_lp_general(P, Q, [(1, 1), (2, 3)])
    with pytest.raises(ValueError, match="share"):
        build_soft_lp_general(P, Q, [(1, 2), (1, 3)])
    with pytest.raises(ValueError):
        build_soft_lp_general(P, Q, [(1, 2)])
    with pytest.raises(ValueError, match="non-empty"):
        solve_soft(P, np.zeros((0, 4)), SoftMarginConfig(IndexAssignment(1, 2, 3, 4)))


def test_zero_margin_witness_always_feasible():
    rng = np.random.default_rng(3)
    for _ in range(100):
        d = int(rng.integers(3, 8))
        P, Q = rng.normal(0, 3, (int(rng.integers(1, 4)), d)), rng.normal(0, 3, (int(rng.integers(1, 4)), d))
        maps = random_maps(rng, P.shape[0], Q.shape[0], d)
        lp, _ = build_soft_lp_general(P, Q, maps)
        x = zero_margin_witness(P, Q, maps, omega=rng.normal(0, 3, d))
        assert lp.max_violation(x) <= 1e-9
        assert solve(lp).status != INFEASIBLE


def test_single_class_is_unbounded():
    lp, _ = build_soft_lp_general(SINGLE_CLASS_P, np.zeros((0, 6)), [(1, 2)], allow_empty_q=True)
    assert solve(lp).status == UNBOUNDED


def test_bounded_with_both_classes():
    rng = np.random.default_rng(4)
    for _ in range(60):
        d = int(rng.integers(3, 8))
        P, Q = rng.normal(0, 3, (int(rng.integers(1, 5)), d)), rng.normal(0, 3, (int(rng.integers(1, 5)), d))
        maps = random_maps(rng, P.shape[0], Q.shape[0], d)
        res = solve_soft(P, Q, index_maps=maps)
        assert res.status == OPTIMAL
        assert res.z >= 0 and res.hinge_loss >= 0
        # the explicit bound from any pair of points
        for p, mp in zip(P, maps):
            for q, mq in zip(Q, maps[P.shape[0]:]):
                assert res.objective <= objective_upper_bound(p, q, mp, mq) + 1e-7


def test_shared_second_index_bound():
    # j(p) = j(q): objective <= p_i - p_j + q_j - q_i for every pair
    rng = np.random.default_rng(5)
    for _ in range(40):
        a = random_assignment(rng, CASE4, 6)
        P, Q = rng.normal(0, 3, (3, 6)), rng.normal(0, 3, (3, 6))
        res = solve_soft(P, Q, SoftMarginConfig(a))
        i, j = a.i_P - 1, a.j_P - 1
        bound = min(p[i] - p[j] + q[j] - q[i] for p in P for q in Q)
        assert res.objective <= bound + 1e-7


def test_tradeoff_threshold_exists():
    rng = np.random.default_rng(0)
    a = IndexAssignment(1, 2, 3, 4)
    P, Q = rng.normal(0, 3, (3, 6)), rng.normal(0, 3, (3, 6))
    verdicts = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for c in (0.01, 0.05, 0.1, 0.2, 0.5, 1.0):
            verdicts.append(solve_soft(P, Q, SoftMarginConfig(a, tradeoff=c), general=True).status)
    assert verdicts[0] == UNBOUNDED and verdicts[-1] == OPTIMAL
    first_bounded = verdicts.index(OPTIMAL)
    assert all(v == OPTIMAL for v in verdicts[first_bounded:])


def test_low_tradeoff_warns():
    P, Q = np.zeros((1, 4)), np.ones((1, 4)) * [0, 1, 2, 3]
    with pytest.warns(RuntimeWarning, match="tradeoff below 1"):
        res = solve_soft(P, Q, SoftMarginConfig(IndexAssignment(1, 2, 3, 4), tradeoff=0.5))
    assert res.warning


def _general_optimum(P, Q, a):
    return solve_soft(P, Q, SoftMarginConfig(a), general=True)


@pytest.mark.parametrize("case", CASES)
def test_gamma_vanishing_and_reduction(case):
    rng = np.random.default_rng(10 + CASES.index(case))
    for k in range(25):
        d, n = [4, 6, 10][k % 3], [1, 3, 5][(k // 3) % 3]
        a = random_assignment(rng, case, d)
        P, Q = mixed_instance(rng, a, n, d)
        full = _general_optimum(P, Q, a)
        reduced = solve_soft(P, Q, SoftMarginConfig(a))
        assert full.status == OPTIMAL and reduced.status == OPTIMAL
        assert verify_gamma_vanishing(a, full, 1e-7)
        assert full.objective == pytest.approx(reduced.objective, abs=1e-6)


def test_planted_extraneous_slack_detected():
    rng = np.random.default_rng(6)
    a = IndexAssignment(1, 2, 3, 4)
    P, Q = mixed_instance(rng, a, 3, 6)
    lp, layout = build_soft_lp_general(P, Q, assignment=a)
    best = _general_optimum(P, Q, a)
    x = best.lp_outcome.x.copy()
    # raise omega_6 (outside the assignment) and pay for it with the
    # smallest slacks that keep every row satisfied
    x[6] += 5.0
    X = np.vstack([P, Q])
    for k, (pt, (i, j)) in enumerate(zip(X, layout.maps)):
        need = (x[6] - x[j]) - (pt[j - 1] - pt[5])
        x[layout.gamma[k, 5]] = max(0.0, need)
    planted = evaluate_solution(lp, layout, x)
    assert not verify_gamma_vanishing(a, planted, 1e-7)
    assert planted.objective < best.objective - 1e-6


def test_closed_sector_when_own_slacks_vanish():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(60):
        a = random_assignment(rng, rng.choice(CASES), 6)
        P, Q = mixed_instance(rng, a, 4, 6)
        res = _general_optimum(P, Q, a)
        for k, p in enumerate(P):
            if np.all(res.gamma[k] <= 1e-7):
                checked += 1
                assert sector_membership(p, res.omega, 1e-7) & {a.i_P, a.j_P}
    assert checked > 50


def test_separable_soft_matches_hard():
    rng = np.random.default_rng(8)
    for case in CASES:
        for _ in range(8):
            a = random_assignment(rng, case, 6)
            P, Q, _ = planted_classes(rng, a, 4, 6, margin=rng.uniform(0.2, 2))
            hard = hard_feasible_and_margin(P, Q, a)
            soft = solve_soft(P, Q, SoftMarginConfig(a))
            assert soft.objective == pytest.approx(hard.z, abs=1e-6)
            assert soft.z >= hard.z - 1e-6


def test_example_soft(worked):
    P, Q, a = worked
    res = solve_soft(P, Q, SoftMarginConfig(a))
    assert res.objective == pytest.approx(2) and res.z == pytest.approx(2)
    assert res.hinge_loss == pytest.approx(0, abs=1e-9)


def test_identical_points_zero_margin():
    x = np.array([[0.0, 1.0, 3.0, 2.0]])
    for quad in [(1, 2, 3, 4), (1, 2, 2, 1), (3, 4, 2, 4), (1, 2, 3, 1)]:
        res = solve_soft(x, x, SoftMarginConfig(IndexAssignment(*quad)))
        assert res.objective == pytest.approx(0, abs=1e-9)
        assert res.z == pytest.approx(0, abs=1e-9)


def test_hinge_loss_monotone_in_tradeoff():
    rng = np.random.default_rng(9)
    for _ in range(20):
        a = random_assignment(rng, rng.choice(CASES), 6)
        P, Q = mixed_instance(rng, a, 4, 6)
        losses = [solve_soft(P, Q, SoftMarginConfig(a, tradeoff=c), general=True).hinge_loss
                  for c in (1, 2, 4, 8)]
        assert all(b <= a_ + 1e-7 for a_, b in zip(losses, losses[1:]))


def test_unbounded_with_tradeoff_one_is_an_error(monkeypatch):
    from tropsvm import soft
    from tropsvm.lp import LPOutcome
    monkeypatch.setattr(soft.lpmod, "solve", lambda lp: LPOutcome(UNBOUNDED, 0))
    with pytest.raises(UnboundedSoftMargin):
        solve_soft(np.zeros((1, 4)), np.ones((1, 4)), SoftMarginConfig(IndexAssignment(1, 2, 3, 4)))
    monkeypatch.setattr(soft.lpmod, "solve", lambda lp: LPOutcome(INFEASIBLE, 0))
    with pytest.raises(NumericalBreakdown):
        solve_soft(np.zeros((1, 4)), np.ones((1, 4)), SoftMarginConfig(IndexAssignment(1, 2, 3, 4)))


def test_closed_sector_claim_fails_without_zero_slacks():
    # extraneous slacks vanish, but slacks on the other class's indices can
    # stay positive and push a point out of both of its closed sectors
    rng = np.random.default_rng(7)
    outside = 0
    for _ in range(60):
        a = random_assignment(rng, rng.choice(CASES), 6)
        P, Q = mixed_instance(rng, a, 4, 6)
        res = _general_optimum(P, Q, a)
        for k, p in enumerate(P):
            if not sector_membership(p, res.omega, 1e-7) & {a.i_P, a.j_P}:
                outside += 1
                assert res.gamma[k].max() > 1e-7
    assert outside > 0
