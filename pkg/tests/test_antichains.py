import math
from dataclasses import replace

import numpy as np
import pytest

from carpetq.errors import BudgetExceeded, InvalidParam, NoBracket, SeparationRequired
from carpetq.models.symbolic import AntichainKind
from carpetq.services.antichain_service import (
    antichain_entropy_ratio,
    antichain_exponent,
    antichain_rows,
    build_antichain,
    cardinality_sandwich,
    comparable_pairs,
    depth_window,
    membership_violations,
    psi_sandwich,
    refined_members,
    shell_counts,
)
from carpetq.services.dims_service import s0, solve_sr


def _within(lo, value, hi):
    return math.nextafter(lo, 0.0) <= value <= math.nextafter(hi, math.inf)


# --- two-map carpet: every depth-d word has value 4^-d at r = 1 -------------------------


def test_twomap_lambda_one_is_depth_three(twomap_carpet):
    ac = build_antichain(twomap_carpet, AntichainKind.LAMBDA_0J, 1)
    assert len(ac) == 8
    assert (ac.stats.min_depth, ac.stats.max_depth) == (3, 3)
    assert psi_sandwich(twomap_carpet, ac) == (4, 8, 16)


@pytest.mark.parametrize("j, count, depth", [(1, 4, 2), (10, 16, 4)])
def test_twomap_gamma_counts(twomap_carpet, j, count, depth):
    ac = build_antichain(twomap_carpet, AntichainKind.GAMMA_JR, j, r=1.0)
    assert len(ac) == count
    assert (ac.stats.min_depth, ac.stats.max_depth) == (depth, depth)
    assert antichain_exponent(ac) == pytest.approx(1.0, abs=1e-10)


def test_twomap_shells_by_hand(twomap_carpet):
    counts = shell_counts(twomap_carpet, 1.0, 3)
    assert [row.k for row in counts.rows] == [0, 1, 2, 3]
    assert [row.phi for row in counts.rows] == [2, 12, 16, 96]
    assert [row.phi_tilde for row in counts.rows] == [0, 4, 16, 32]
    for row in counts.rows[1:]:
        assert row.delta_kr == pytest.approx(1.0, abs=1e-9)
        u = row.delta_kr / (row.delta_kr + 1.0)
        assert row.bracket_lo - 1e-12 <= u <= row.bracket_hi + 1e-12
    assert counts.rows[1].tilde_exponent == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_shell_tilde_counts_match_antichains(worked_carpet, twomap_carpet):
    for carpet, k_max in ((worked_carpet, 1), (twomap_carpet, 4)):
        counts = shell_counts(carpet, 1.0, k_max)
        for row in counts.rows[1:]:
            ac = build_antichain(carpet, AntichainKind.LAMBDA_TILDE_KR, row.k, r=1.0, retain_words=False)
            assert row.phi_tilde == len(ac)
            assert ac.stats.min_depth >= row.k


# --- the worked example at r = 1 ---------------------------------------------------------


@pytest.mark.parametrize("j", [100.0, 1000.0])
def test_gamma_sandwiches(worked_carpet, j):
    ac = build_antichain(worked_carpet, AntichainKind.GAMMA_JR, j, r=1.0, retain_words=False)
    assert ac.stats.mass == pytest.approx(1.0, abs=1e-10)
    lo, count, hi = cardinality_sandwich(worked_carpet, ac)
    assert _within(lo, count, hi)
    l1, l2 = depth_window(worked_carpet, 1.0, j)["exact"]
    assert l1 - 1e-9 <= ac.stats.min_depth
    assert ac.stats.max_depth <= l2 + 1e-9
    if worked_carpet.lambda1(1.0) <= math.log(j) + worked_carpet.lambda2(1.0):
        a1, a2 = depth_window(worked_carpet, 1.0, j)["asymptotic"]
        assert a1 - 1e-9 <= ac.stats.min_depth and ac.stats.max_depth <= a2 + 1e-9


def test_gamma_members_satisfy_the_two_sided_rule(worked_carpet):
    ac = build_antichain(worked_carpet, AntichainKind.GAMMA_JR, 100.0, r=1.0)
    words = ac.words()
    assert len(words) == len(ac)
    assert membership_violations(worked_carpet, ac, words) == []
    assert comparable_pairs(worked_carpet, words) == []
    rows = antichain_rows(worked_carpet, words[:5], 1.0)
    assert {"depth", "pairs", "tail", "weight", "value"} <= set(rows[0])


def test_asymptotic_window_where_it_applies(worked_carpet):
    lam1, lam2 = worked_carpet.lambda1(1.0), worked_carpet.lambda2(1.0)
    j = 1e4
    assert lam1 <= math.log(j) + lam2
    exact = depth_window(worked_carpet, 1.0, j)["exact"]
    asymptotic = depth_window(worked_carpet, 1.0, j)["asymptotic"]
    assert asymptotic[0] <= exact[0] and exact[1] <= asymptotic[1]


@pytest.mark.parametrize("j", [10.0, 100.0])
def test_lambda_j_sandwich_and_weight_window(worked_carpet, j):
    ac = build_antichain(worked_carpet, AntichainKind.LAMBDA_0J, j, retain_words=False)
    lo, psi, hi = psi_sandwich(worked_carpet, ac)
    assert lo <= psi <= hi
    mu = np.exp(ac.log_weights)
    upper = worked_carpet.eta0 / j
    lower = upper * worked_carpet.pmin * worked_carpet.qmin / worked_carpet.qmax
    assert np.all(mu < upper)
    assert np.all(mu >= lower * (1 - 1e-12))
    assert ac.stats.mass == pytest.approx(1.0, abs=1e-10)


def test_entropy_ratio_approaches_s0(worked_carpet):
    ac = build_antichain(worked_carpet, AntichainKind.LAMBDA_0J, 100.0, retain_words=False)
    t_j = antichain_entropy_ratio(ac)
    assert abs(t_j - s0(worked_carpet)) < 0.05


def test_refined_members_keep_the_mass(worked_carpet):
    base = build_antichain(worked_carpet, AntichainKind.GAMMA_JR, 50.0, r=1.0, retain_words=False)
    lw0, dp0, _, _, md0 = refined_members(worked_carpet, AntichainKind.GAMMA_JR, 50.0, 1.0, levels=0)
    assert lw0.size == len(base)
    assert np.array_equal(dp0, md0)
    lw, dp, x_lo, y_lo, md = refined_members(worked_carpet, AntichainKind.GAMMA_JR, 50.0, 1.0, levels=2)
    assert np.all(dp == md + 2)
    assert math.fsum(np.exp(lw)) == pytest.approx(1.0, abs=1e-10)
    assert np.all((x_lo >= 0) & (x_lo < 1) & (y_lo >= 0) & (y_lo < 1))


def test_parameter_errors(worked_carpet):
    with pytest.raises(InvalidParam):
        build_antichain(worked_carpet, AntichainKind.GAMMA_JR, 100.0, r=0.0)
    with pytest.raises(InvalidParam):
        build_antichain(worked_carpet, AntichainKind.GAMMA_JR, 0.5, r=1.0)
    with pytest.raises(InvalidParam):
        build_antichain(worked_carpet, AntichainKind.LAMBDA_TILDE_KR, 1.5, r=1.0)
    ac = build_antichain(worked_carpet, AntichainKind.LAMBDA_0J, 10.0, retain_words=False)
    with pytest.raises(InvalidParam):
        antichain_exponent(ac)
    with pytest.raises(ValueError):
        ac.words()
    with pytest.raises(InvalidParam):
        shell_counts(worked_carpet, 0.0, 2)


def test_lambda_j_needs_separation():
    from carpetq.models.carpet import CarpetSpec
    from carpetq.services.carpet_service import validate_spec

    raw = CarpetSpec.model_validate(
        {"n": 3, "m": 2, "digits": [{"i": 0, "j": 0, "p": "0.5"}, {"i": 1, "j": 1, "p": "0.5"}]}
    )
    carpet = validate_spec(raw, separation_gap=2)
    with pytest.raises(SeparationRequired):
        build_antichain(carpet, AntichainKind.LAMBDA_0J, 10.0)


def test_budget_is_enforced(worked_carpet):
    with pytest.raises(BudgetExceeded) as info:
        build_antichain(worked_carpet, AntichainKind.GAMMA_JR, 1e4, r=1.0, budget=1000)
    assert info.value.context["budget"] == 1000


@pytest.mark.slow
def test_gamma_exponents_converge_to_s_r(worked_carpet):
    target = solve_sr(worked_carpet, 1.0)
    gaps = []
    for j in (1e2, 1e3, 1e4):
        ac = build_antichain(worked_carpet, AntichainKind.GAMMA_JR, j, r=1.0, retain_words=False)
        assert ac.stats.mass == pytest.approx(1.0, abs=1e-10)
        lo, count, hi = cardinality_sandwich(worked_carpet, ac)
        assert _within(lo, count, hi)
        if j == 1e4:
            a1, a2 = depth_window(worked_carpet, 1.0, j)["asymptotic"]
            assert a1 - 1e-9 <= ac.stats.min_depth and ac.stats.max_depth <= a2 + 1e-9
        gaps.append(abs(antichain_exponent(ac) - target))
    assert gaps[-1] < 0.05
    for before, after in zip(gaps, gaps[1:]):
        assert after <= before * 1.1


@pytest.mark.slow
def test_lambda_j_sandwich_at_thousand(worked_carpet):
    ac = build_antichain(worked_carpet, AntichainKind.LAMBDA_0J, 1000.0, retain_words=False)
    lo, psi, hi = psi_sandwich(worked_carpet, ac)
    assert lo <= psi <= hi


def test_singleton_antichain_has_no_exponent(worked_carpet):
    ac = build_antichain(worked_carpet, AntichainKind.GAMMA_JR, 10.0, r=1.0, retain_words=False)
    single = replace(ac, log_weights=ac.log_weights[:1], depths=ac.depths[:1])
    with pytest.raises(NoBracket):
        antichain_exponent(single)


def test_tilde_shells_never_outnumber_shells(worked_carpet, unequal_carpet):
    for carpet, k_max in ((worked_carpet, 1), (unequal_carpet, 4)):
        counts = shell_counts(carpet, 1.0, k_max)
        assert any(row.phi_tilde > 0 for row in counts.rows)
        for row in counts.rows:
            assert row.phi_tilde <= row.phi


@pytest.mark.slow
def test_entropy_ratios_approach_s0(worked_carpet):
    target = s0(worked_carpet)
    gaps = []
    for j in (1e2, 1e3, 1e4):
        ac = build_antichain(worked_carpet, AntichainKind.LAMBDA_0J, j, retain_words=False)
        assert ac.stats.mass == pytest.approx(1.0, abs=1e-9)
        gaps.append(abs(antichain_entropy_ratio(ac) - target))
    assert gaps[-1] < 0.05
