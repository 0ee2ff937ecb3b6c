import math
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fairtopk import Bonus, Coefficients, Population, Quota, Selection, admit, calibrate_topk, selection_score
from fairtopk.model import Candidate
from fairtopk.policies import (
    CalibrationError,
    calibrate_bonus_binary_search,
    check_weights,
    dumps_policy,
    kth_score,
    l1_normalize,
    loads_policy,
    policy_from_dict,
    policy_scores,
    policy_to_dict,
    quota_counts,
    raw_scores,
    round_half_up,
    target_count,
)

import oracles

W1 = (1.0,)


def ids_of(sel):
    return set(int(i) for i in sel.ids)


# -- weights and counts ------------------------------------------------------

def test_weights_must_be_l1_normalised_and_non_negative():
    assert check_weights([0.25, 0.75]) == (0.25, 0.75)
    with pytest.raises(ValueError, match="sum to 1"):
        check_weights([0.5, 0.6])
    with pytest.raises(ValueError, match="non-negative"):
        check_weights([1.5, -0.5])
    assert l1_normalize([2, 6]) == (0.25, 0.75)
    with pytest.raises(ValueError):
        l1_normalize([0, 0])


@pytest.mark.parametrize("x, expected", [(2.5, 3), (3.5, 4), (0.49, 0), (1.5, 2), (Decimal("0.5"), 1)])
def test_round_half_up(x, expected):
    assert round_half_up(x) == expected


@pytest.mark.parametrize("theta, n, k", [(0.5, 6, 3), (0.3, 1000, 300), (0.25, 10, 3), (0.15, 10, 2), (1.0, 7, 7)])
def test_target_count(theta, n, k):
    assert target_count(theta, n) == k == oracles.target_count(theta, n)


@pytest.mark.parametrize("theta", [0.0, -0.1, 1.01])
def test_target_count_rejects_theta(theta):
    with pytest.raises(ValueError, match="theta"):
        target_count(theta, 10)


def test_target_count_rejects_empty_admission():
    with pytest.raises(ValueError, match="selects nobody"):
        target_count(0.01, 10)


def test_quota_counts():
    assert quota_counts(1 / 3, 3, 3, 3) == (1, 2)
    assert quota_counts(0.5, 5, 3, 3) == (3, 2)
    with pytest.raises(ValueError, match="needs"):
        quota_counts(1.0, 4, 3, 3)


def test_bonus_validation():
    with pytest.raises(ValueError, match="non-negative"):
        Bonus(W1, {"g": -1.0})
    with pytest.raises(ValueError, match="favored"):
        Bonus(W1, {"g": 1.0}, favored={"h": True})
    with pytest.raises(ValueError, match="quota"):
        Quota(W1, "g", 1.2)


# -- scoring -------------------------------------------------------------------

def test_selection_score_examples():
    a10 = Candidate(1, {"g": True}, (10.0,))
    b40 = Candidate(4, {"g": False}, (40.0,))
    assert selection_score(Coefficients(W1), b40) == 40
    assert selection_score(Bonus(W1, {"g": 25.0}), a10) == 35
    assert selection_score(Bonus(W1, {"g": 25.0}), b40) == 40
    assert selection_score(Bonus(W1, {"g": 25.0}, favored={"g": False}), b40) == 65
    with pytest.raises(ValueError, match="weights"):
        selection_score(Coefficients((0.5, 0.5)), a10)


def test_policy_scores_match_selection_score(pop6):
    pol = Bonus(W1, {"g": 7.0})
    assert list(policy_scores(pol, pop6)) == [selection_score(pol, c) for c in pop6.candidates]


# -- admission -----------------------------------------------------------------

def test_admit_threshold_examples(pop6):
    assert ids_of(admit(Coefficients(W1, 40.0), pop6)) == {4, 5, 6}
    assert ids_of(admit(Bonus(W1, {"g": 25.0}, 50.0), pop6)) == {3, 5, 6}
    assert ids_of(admit(Coefficients(W1), pop6)) == {1, 2, 3, 4, 5, 6}


def test_admit_quota_uses_per_group_thresholds(pop6):
    assert ids_of(admit(Quota(W1, "g", 1 / 3, 30.0, 50.0), pop6)) == {3, 5, 6}
    with pytest.raises(KeyError):
        admit(Quota(W1, "h", 0.5, 0.0, 0.0), pop6)


def test_selection_properties(pop6):
    sel = Selection.from_ids(pop6, [6, 4])
    assert sel.admitted_ids == {4, 6} and sel.k == 2 and sel.theta_effective == pytest.approx(1 / 3)
    assert sel == Selection.from_mask(pop6, [False, False, False, True, False, True])
    with pytest.raises(KeyError):
        Selection.from_ids(pop6, [9])


# -- calibration ---------------------------------------------------------------

def test_calibrate_examples(pop6):
    pol = calibrate_topk(Coefficients(W1), pop6, 0.5)
    assert (pol.k, pol.tau) == (3, 40.0)
    assert ids_of(admit(pol, pop6)) == {4, 5, 6}
    full = calibrate_topk(Coefficients(W1), pop6, 1.0)
    assert (full.k, full.tau) == (6, 10.0) and admit(full, pop6).k == 6


def test_calibrate_bonus_tie_goes_to_lower_id(pop6):
    pol = calibrate_topk(Bonus(W1, {"g": 30.0}), pop6, 0.5)
    # a: {40, 50, 60} and complement {40, 50, 60}; the tie at 50 is between ids 2 and 5
    assert ids_of(admit(pol, pop6)) == {3, 6, 2}
    assert pol.tau == 50.0


def test_calibrate_quota(pop6):
    pol = calibrate_topk(Quota(W1, "g", 1 / 3), pop6, 0.5)
    assert pol.counts == (1, 2) and (pol.tau_in, pol.tau_out) == (30.0, 50.0)
    assert ids_of(admit(pol, pop6)) == {3, 5, 6}


@pytest.mark.parametrize("b, expected", [(0.0, 40.0), (25.0, 50.0), (30.0, 50.0)])
def test_binary_search_examples(pop6, b, expected):
    assert calibrate_bonus_binary_search(W1, "g", b, pop6, 0.5, 40.0) == expected


def test_binary_search_detects_bad_interval(pop6):
    with pytest.raises(CalibrationError):
        calibrate_bonus_binary_search(W1, "g", 5.0, pop6, 0.5, 100.0)


def populations(min_n=10, max_n=200, d_max=3, tie_prone=False):
    @st.composite
    def build(draw):
        n = draw(st.integers(min_n, max_n))
        d = draw(st.integers(1, d_max))
        seed = draw(st.integers(0, 2**32 - 1))
        rng = np.random.default_rng(seed)
        x = rng.integers(0, 20, (n, d)).astype(float) if tie_prone else rng.normal(500, 100, (n, d))
        g = rng.random(n) < draw(st.floats(0.1, 0.9))
        assume(0 < g.sum() < n)
        w = rng.dirichlet(np.ones(d))
        ids = rng.permutation(10 * n)[:n]
        return Population.from_arrays(ids, x, {"g": g}), tuple(w)
    return build()


@given(populations(10, 2000, tie_prone=False) | populations(10, 300, tie_prone=True),
       st.sampled_from([0.1, 0.25, 0.5]), st.floats(0, 100))
@settings(max_examples=60, deadline=None)
def test_calibration_is_exact(pw, theta, b):
    pop, w = pw
    k = oracles.target_count(theta, pop.n)
    for pol in (Coefficients(w), Bonus(w, {"g": b}), Quota(w, "g", 0.5)):
        try:
            cal = calibrate_topk(pol, pop, theta)
        except ValueError:
            assert isinstance(pol, Quota)  # a group too small for half the admits
            continue
        assert admit(cal, pop).k == k


@given(populations(10, 120, tie_prone=True), st.sampled_from([0.1, 0.25, 0.5]), st.floats(0, 20))
@settings(max_examples=60, deadline=None)
def test_calibrated_selection_matches_sort_oracle(pw, theta, b):
    pop, w = pw
    k = oracles.target_count(theta, pop.n)
    pol = calibrate_topk(Bonus(w, {"g": b}), pop, theta)
    adj = policy_scores(pol, pop)
    assert ids_of(admit(pol, pop)) == oracles.top_k(list(adj), list(pop.ids), k)
    assert pol.tau == oracles.kth_score(list(adj), list(pop.ids), k)


@given(populations(10, 300, tie_prone=True), st.sampled_from([0.1, 0.25, 0.5]),
       st.floats(0, 30), st.floats(0, 30))
@settings(max_examples=60, deadline=None)
def test_threshold_monotone_in_bonus(pw, theta, b1, b2):
    pop, w = pw
    b1, b2 = sorted((b1, b2))
    k = target_count(theta, pop.n)
    tau = kth_score(raw_scores(w, pop), k)
    t1 = calibrate_bonus_binary_search(w, "g", b1, pop, theta, tau)
    t2 = calibrate_bonus_binary_search(w, "g", b2, pop, theta, tau)
    assert tau <= t1 <= t2 <= tau + b2
    # the hint only narrows the search
    assert calibrate_bonus_binary_search(w, "g", b2, pop, theta, tau, t1) == t2
    # and the search agrees with a full sort
    assert t2 == calibrate_topk(Bonus(w, {"g": b2}), pop, theta).tau


@given(populations(10, 300, tie_prone=True), st.sampled_from([0.1, 0.25, 0.5]))
@settings(max_examples=40, deadline=None)
def test_zero_bonus_matches_coefficients(pw, theta):
    pop, w = pw
    a = admit(calibrate_topk(Coefficients(w), pop, theta), pop)
    b = admit(calibrate_topk(Bonus(w, {"g": 0.0}), pop, theta), pop)
    assert a == b


@given(populations(10, 300, tie_prone=True), st.sampled_from([0.1, 0.25, 0.5]),
       st.floats(0, 10), st.sampled_from([0.5, 2.0, 4.0, 1024.0]))
@settings(max_examples=40, deadline=None)
def test_ranking_is_scale_covariant(pw, theta, b, scale):
    # powers of two keep the float scores exactly proportional
    pop, w = pw
    scaled = pop.with_scores(pop.scores * scale)
    a = admit(calibrate_topk(Bonus(w, {"g": b}), pop, theta), pop)
    s = admit(calibrate_topk(Bonus(w, {"g": b * scale}), scaled, theta), scaled)
    assert a == s


# -- serialization -------------------------------------------------------------

@pytest.mark.parametrize(
    "policy",
    [
        Coefficients((0.3, 0.7), 12.5, 4),
        Coefficients((1.0,)),
        Bonus((0.5, 0.5), {"g": 3.25, "h": 0.0}, 10.0, 7, {"h": False}),
        Quota((0.2, 0.8), "g", 0.4, 1.5, -math.inf, (2, 3)),
        Quota((1.0,), "g", 0.4),
    ],
)
def test_policy_json_round_trip(policy):
    text = dumps_policy(policy)
    back = loads_policy(text)
    assert back == policy
    assert dumps_policy(back) == text


def test_policy_json_layout():
    doc = policy_to_dict(Bonus((0.5, 0.5), {"g": 2.0}, 10.0, 3), ["math", "lang"])
    assert doc == {
        "kind": "bonus", "score_names": ["math", "lang"], "weights": [0.5, 0.5],
        "threshold": 10.0, "k": 3, "bonuses": {"g": {"value": 2.0, "group": "designated"}},
    }
    with pytest.raises(ValueError, match="score_names"):
        policy_to_dict(Coefficients((1.0,)), ["a", "b"])
    with pytest.raises(ValueError, match="unknown policy kind"):
        policy_from_dict({"kind": "lottery", "weights": [1.0]})
