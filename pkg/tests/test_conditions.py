import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnsparse import formats
from nnsparse.conditions import (
    ConditionReport,
    GroundTruth,
    check_apmrc,
    check_apmrc_nnls,
    check_base,
    check_erc_mrc,
    check_perc_amax,
    check_perc_max,
    erc,
    evaluate_conditions,
    gamma_interval,
    perc,
    psc,
    psc_per_atom,
    residual_correlations,
)
from nnsparse.core import build_cache
from nnsparse.errors import PreconditionError, RankDeficientError
from nnsparse.solvers import Problem, restricted_closed_form, solve_nlasso

from conftest import random_instance


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


# metrics -------------------------------------------------------------------


def test_erc_orthogonal_outside_atom():
    assert erc(np.eye(2), [0]) == pytest.approx(1.0)


def test_erc_hand_example():
    A = np.column_stack([[1, 0], [0, 1], [0.6, 0.8]])
    assert erc(A, [0, 1]) == pytest.approx(-0.4)


def test_erc_duplicate_outside_atom():
    a, b = unit([1, 2, 0]), unit([0, 1, 1])
    assert erc(np.column_stack([a, b, a]), [0, 1]) == pytest.approx(0.0, abs=1e-12)


def test_erc_rank_deficient_is_an_error():
    a = unit([1, 1, 0])
    with pytest.raises(RankDeficientError):
        erc(np.column_stack([a, a, [0, 0, 1]]), [0, 1])


def test_psc_examples():
    c = build_cache(np.eye(3)[:, :2], [0, 1])
    assert psc(c, [0, 0, 1]) == pytest.approx(1.0)
    c2 = build_cache(np.eye(2), [0, 1])
    assert psc(c2, [0.6, 0.8]) == pytest.approx(-0.4)
    # affine combination of the support atoms lies on the hyperplane
    A = np.array([[1.0, 0.2], [0.3, 1.0], [0.5, -0.4]])
    c3 = build_cache(A, [0, 1])
    assert psc(c3, 0.3 * A[:, 0] + 0.7 * A[:, 1]) == pytest.approx(0.0, abs=1e-12)


def test_perc_examples(rng):
    assert perc(np.eye(3), [0]) == pytest.approx(1.0)
    A = np.column_stack([[1, 0, 0], [0, 1, 0], unit([0.3, 0.2, 1])])
    assert perc(A, [0, 1]) == pytest.approx(psc(build_cache(A, [0, 1]), A[:, 2]))
    B = rng.standard_normal((10, 7))
    assert perc(B, [2, 5]) == min(psc_per_atom(B, [2, 5]).values())


def test_perc_needs_outside_atom():
    with pytest.raises(ValueError):
        perc(np.eye(2), [0, 1])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_metric_consistency(seed, J):
    r = np.random.default_rng(seed)
    A = r.standard_normal((10, 6))
    S = np.sort(r.choice(6, size=J, replace=False))
    c = build_cache(A, S)
    value = erc(A, S, c)
    assert value <= 1.0
    for j, s in psc_per_atom(A, S, c).items():
        coords = c.coordinates(A[:, j])
        assert s <= 1 + np.sum(np.abs(coords)) + 1e-12
        assert s >= value - 1e-12
        if np.all(coords >= 0):
            assert s == pytest.approx(1 - np.sum(np.abs(coords)))


# APMRC and the PERC corollaries ---------------------------------------------


def test_apmrc_identity(identity_problem):
    m = check_apmrc(identity_problem, [0])
    assert m.mcc_margin == pytest.approx(0.5)
    assert m.nscc_margins == {1: pytest.approx(0.5)}
    assert m.holds
    assert solve_nlasso(identity_problem).support.tolist() == [0]


def test_apmrc_missed_detection():
    p = Problem(np.eye(2), [0.3, 0.0], 0.5)
    m = check_apmrc(p, [0])
    assert m.mcc_margin == pytest.approx(-0.2)
    assert not m.holds
    assert solve_nlasso(p).support.tolist() == []


def test_apmrc_aligned_distortion_breaks_recovery(rng):
    A = rng.standard_normal((20, 5))
    A /= np.linalg.norm(A, axis=0)
    S = [0, 1, 2]
    c = build_cache(A, S)
    x = np.array([1.0, 0.8, 0.6, 0, 0])
    r = c.residual(A[:, 3])
    gamma = 0.05
    s = psc(c, A[:, 3])
    beta = 2 * max(gamma * abs(s), 0.05) / np.linalg.norm(r)
    y = A @ x + beta * r
    p = Problem(A, y, gamma)
    m = check_apmrc(p, S, c)
    assert m.nscc_margins[3] < 0 and not m.holds
    assert solve_nlasso(p).support.tolist() != S


def test_apmrc_nnls_specialisation():
    assert check_apmrc_nnls(np.eye(2), [0], None, [1.0, 0.0]) is False  # NSCC margin 0 is not strict
    assert check_apmrc_nnls(np.eye(2), [0], None, [1.0, -0.1])
    assert not check_apmrc_nnls(np.eye(2), [0], None, [1.0, 0.1])


def test_nscc_margins_match_definition(rng):
    A, x, e, S = random_instance(rng, L=12, N=6, J=2, noise=0.05)
    p = Problem(A, A @ x + e, 0.03)
    c = build_cache(A, S)
    m = check_apmrc(p, S, c)
    for j, v in m.nscc_margins.items():
        expect = p.gamma * (1 - np.sum(np.linalg.pinv(A[:, S]) @ A[:, j]))
        expect -= p.y @ (A[:, j] - A[:, S] @ np.linalg.lstsq(A[:, S], A[:, j], rcond=None)[0])
        assert v == pytest.approx(expect, abs=1e-10)


def test_perc_max_examples():
    A = np.column_stack([[1, 0, 0], [0, 1, 0], unit([0.2, 0.2, 1])])
    y = np.array([0.7, 0.4, 0.0])
    p = Problem(A, y, 0.1)
    assert check_perc_max(p, [0, 1]) == pytest.approx(0.1 * perc(A, [0, 1]))
    assert check_perc_amax(p, [0, 1]) == pytest.approx(0.1 * perc(A, [0, 1]))
    # negative PERC: conservative failure without any distortion
    B = np.column_stack([[1, 0, 0], [0, 1, 0], unit([0.8, 0.8, 0.2])])
    q = Problem(B, y, 0.1)
    assert perc(B, [0, 1]) < 0
    rep = evaluate_conditions(q, [0, 1])
    assert not rep.verdicts["perc_max"] and not rep.verdicts["perc_amax"]


def test_strictness_chain(rng):
    counts = dict(amax=0, max=0)
    for _ in range(1000):
        N = rng.integers(4, 9)
        J = rng.integers(1, 4)
        A, x, _, S = random_instance(rng, L=12, N=N, J=J)
        # distortion and gamma scales vary widely to populate every branch
        y = A @ x + rng.choice([0.0, 0.01, 0.1]) * rng.standard_normal(12)
        p = Problem(A, y, rng.uniform(0.001, 0.3))
        c = build_cache(A, S)
        pam = check_perc_amax(p, S, c)
        pm = check_perc_max(p, S, c)
        nscc = check_apmrc(p, S, c).nscc_margins
        if pam > 0:
            counts["amax"] += 1
            assert pm > 0
        if pm > 0:
            counts["max"] += 1
            assert all(v > 0 for v in nscc.values())
    assert counts["amax"] > 50 and counts["max"] > counts["amax"]


def test_in_support_correlations_vanish(rng):
    A, x, e, S = random_instance(rng, L=15, N=7, J=3, noise=0.1)
    y = A @ x + e
    c = build_cache(A, S)
    corr = residual_correlations(A, c, y)
    assert np.max(np.abs(corr[S])) < 1e-10
    out = np.setdiff1d(np.arange(7), S)
    assert np.max(np.abs(corr)) == np.max(np.abs(corr[out]))


def test_apmrc_implies_positive_closed_form(rng):
    seen = 0
    for _ in range(300):
        A, x, e, S = random_instance(rng, L=12, N=6, J=3, noise=0.02)
        p = Problem(A, A @ x + e, rng.uniform(0.005, 0.2))
        c = build_cache(A, S)
        if check_apmrc(p, S, c).holds:
            seen += 1
            assert np.all(restricted_closed_form(c, p.y, p.gamma) > 0)
    assert seen > 20


# ERC-based condition --------------------------------------------------------


def test_erc_mrc_noiseless_large_coefficients():
    A = np.column_stack([[1, 0, 0], [0, 1, 0], unit([0.2, 0.1, 1])])
    truth = GroundTruth([3.0, 2.0, 0.0], np.zeros(3))
    m = check_erc_mrc(truth, A, [0, 1], None, 0.1)
    assert m.erc > 0 and m.holds
    assert m.noise_margin == pytest.approx(0.1 * m.erc)


def test_erc_mrc_negative_erc_fails():
    A = np.column_stack([[1, 0, 0], [0, 1, 0], unit([0.9, 0.9, 0.1])])
    truth = GroundTruth([3.0, 2.0, 0.0], np.zeros(3))
    m = check_erc_mrc(truth, A, [0, 1], None, 0.1)
    assert m.erc < 0 and not m.holds


def test_residual_identity(rng):
    # ||A^T (y - A_S A_S^+ y)||_inf == ||A^T P_perp e||_inf when y = A_S x_S + e
    for _ in range(50):
        A, x, e, S = random_instance(rng, L=20, N=8, J=3, noise=0.3)
        y = A @ x + e
        coef = np.linalg.lstsq(A[:, S], y, rcond=None)[0]
        lhs = np.max(np.abs(A.T @ (y - A[:, S] @ coef)))
        rhs = np.max(np.abs(residual_correlations(A, build_cache(A, S), e)))
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, lhs)


def test_ground_truth_validation():
    with pytest.raises(ValueError):
        GroundTruth([-1.0, 0.0], [0.0])
    t = GroundTruth([0.0, 2.0, 1.0], [0.1, 0.2])
    assert t.support.tolist() == [1, 2]


# base conditions --------------------------------------------------------------


def test_base_identity(identity_problem):
    b = check_base(identity_problem, [0], np.array([0.5, 0.0]))
    assert b.margins == {1: pytest.approx(0.5)} and b.holds


def test_base_nnls_form():
    p = Problem(np.eye(2), [1.0, -0.2], 0.0)
    b = check_base(p, [0], np.array([1.0, 0.0]))
    assert b.margins[1] == pytest.approx(0.2) and b.holds


def test_base_rejects_uncertified_solution(identity_problem):
    with pytest.raises(PreconditionError):
        check_base(identity_problem, [0], np.array([0.9, 0.0]))
    with pytest.raises(PreconditionError):
        check_base(identity_problem, [0], np.array([0.5, 0.1]))


def test_base_weak_accepts_zero_margin():
    # outside atom correlation exactly gamma
    p = Problem(np.eye(2), [1.0, 0.5], 0.5)
    strict = check_base(p, [0], np.array([0.5, 0.0]))
    weak = check_base(p, [0], np.array([0.5, 0.0]), strict=False)
    assert not strict.holds and weak.holds


# gamma interval ----------------------------------------------------------------


def test_gamma_interval_identity():
    assert gamma_interval(np.eye(2), [1.0, 0.0], [0]) == (0.0, pytest.approx(1.0))


def test_gamma_interval_empty_for_obtuse_geometry():
    a = np.array([0.6, 0.6, np.sqrt(1 - 0.72)])
    A = np.column_stack([[1, 0, 0], [0, 1, 0], a])
    y = np.array([1.0, 1.0, 0.05])
    assert psc(build_cache(A, [0, 1]), a) < 0
    assert gamma_interval(A, y, [0, 1]) is None
    for g in np.linspace(1e-3, 2, 200):
        assert solve_nlasso(Problem(A, y, g)).support.tolist() != [0, 1]


def test_gamma_interval_noiseless_upper_bound_from_mcc(rng):
    while True:
        A, x, _, S = random_instance(rng, L=12, N=6, J=2)
        c = build_cache(A, S)
        if min(psc_per_atom(A, S, c).values()) > 0:
            break
    y = A @ x
    lo, hi = gamma_interval(A, y, S, c)
    g = c.gram_inverse.sum(axis=1)
    cy = c.coordinates(y)
    assert lo == pytest.approx(0.0, abs=1e-12)
    assert hi == pytest.approx(np.min(np.where(g > 0, cy / g, np.inf)))
    for gam in np.linspace(hi / 50, hi, 50)[:-1]:
        assert solve_nlasso(Problem(A, y, gam)).support.tolist() == S.tolist()


def test_gamma_interval_matches_verdicts(rng):
    for _ in range(40):
        A, x, e, S = random_instance(rng, L=15, N=6, J=2, noise=0.05)
        y = A @ x + e
        iv = gamma_interval(A, y, S)
        for g in np.geomspace(1e-4, 2.0, 40):
            holds = check_apmrc(Problem(A, y, g), S).holds
            inside = iv is not None and iv[0] < g < iv[1]
            assert holds == inside


# reports -------------------------------------------------------------------------


def test_report_round_trip(rng, tmp_path):
    A, x, e, S = random_instance(rng, L=12, N=5, J=2, noise=0.02)
    p = Problem(A, A @ x + e, 0.05)
    rep = evaluate_conditions(p, S, GroundTruth(x, e))
    path = tmp_path / "r.json"
    formats.write_json(path, rep.to_dict())
    back = ConditionReport.from_dict(json.loads(path.read_text()))
    assert back.verdicts == rep.verdicts
    assert back.nscc_margins == rep.nscc_margins
    assert back.mcc_margin == rep.mcc_margin


def test_report_full_support_has_infinite_margins(tmp_path):
    p = Problem(np.eye(2), [1.0, 1.0], 0.1)
    rep = evaluate_conditions(p, [0, 1])
    assert rep.erc is None and rep.perc_max_margin == np.inf
    back = ConditionReport.from_dict(json.loads(formats.dumps(rep.to_dict())))
    assert back.perc_max_margin == np.inf and back.verdicts == rep.verdicts


def test_report_verdict_invariants(rng):
    for _ in range(30):
        A, x, e, S = random_instance(rng, L=12, N=6, J=2, noise=0.05)
        rep = evaluate_conditions(Problem(A, A @ x + e, 0.05), S)
        assert rep.perc == min(rep.psc_per_atom.values())
        assert rep.verdicts["apmrc"] == (rep.mcc_margin > 0 and min(rep.nscc_margins.values()) > 0)
        if rep.verdicts["perc_amax"]:
            assert rep.verdicts["perc_max"]
        if rep.verdicts["perc_max"]:
            assert rep.verdicts["apmrc"]
