import math

import numpy as np
import pytest

from carpetq.errors import InvalidParam, RootHasNoParent
from carpetq.models.symbolic import Word
from carpetq.services.antichain_service import omega_words
from carpetq.services.symbolic_service import (
    check_word,
    children,
    entropy_Ik,
    is_prefix,
    mean_exponent_sk0,
    parent_flat,
    random_word,
    roots,
    square_geometry,
    telescoped_weight,
    uniform_random_word,
    word_log_weight,
    word_weight,
)
from carpetq.services.dims_service import chi_constant, s0


def test_roots_are_the_rows(worked_carpet):
    words = roots(worked_carpet)
    assert [w.tail for w in words] == [(0,), (1,)]
    assert [w.weight for w in words] == pytest.approx([0.5, 0.5], abs=1e-15)


def test_twomap_children_split_mass_evenly(twomap_carpet):
    root = roots(twomap_carpet)[0]
    kids = children(twomap_carpet, root)
    # ell(2) = 1: the head row is promoted to a full digit
    assert [child.pairs for child, _ in kids] == [(0,), (0,)]
    assert [ratio for _, ratio in kids] == pytest.approx([0.5, 0.5], abs=1e-15)


@pytest.mark.parametrize("depth, expected", [(1, 2), (2, 4), (3, 8), (4, 16)])
def test_omega_cardinality_twomap(twomap_carpet, depth, expected):
    assert len(omega_words(twomap_carpet, depth)) == expected


def test_omega_cardinality_formula(worked_carpet):
    for k in range(1, 6):
        l = worked_carpet.ell(k)
        words = omega_words(worked_carpet, k)
        assert len(words) == worked_carpet.N ** l * len(worked_carpet.Gy) ** (k - l)
        assert len(set(words)) == len(words)
        assert math.fsum(w.weight for w in words) == pytest.approx(1.0, abs=1e-12)


def test_children_ratios_sum_to_one_and_parent_inverts(worked_carpet):
    rng = np.random.default_rng(3)
    for _ in range(50):
        word = uniform_random_word(worked_carpet, int(rng.integers(1, 9)), rng)
        kids = children(worked_carpet, word)
        assert math.fsum(ratio for _, ratio in kids) == pytest.approx(1.0, abs=1e-14)
        for child, _ in kids:
            assert parent_flat(worked_carpet, child) == word
            check_word(worked_carpet, child)


def test_root_has_no_parent(worked_carpet):
    with pytest.raises(RootHasNoParent):
        parent_flat(worked_carpet, roots(worked_carpet)[0])


def test_check_word_rejects_wrong_pair_count(worked_carpet):
    with pytest.raises(InvalidParam):
        check_word(worked_carpet, Word(pairs=(), tail=(0, 1)))


def test_weights_telescope_along_the_path(worked_carpet):
    rng = np.random.default_rng(5)
    for _ in range(20):
        word = random_word(worked_carpet, 6, rng)
        path = [word]
        while path[0].depth > 1:
            path.insert(0, parent_flat(worked_carpet, path[0]))
        assert telescoped_weight(worked_carpet, path) == pytest.approx(word_weight(worked_carpet, word), rel=1e-14)
        assert word.log_weight == pytest.approx(word_log_weight(worked_carpet, word), rel=1e-13)


def test_value_ratios_stay_within_lambda_bounds(worked_carpet, unequal_carpet):
    rng = np.random.default_rng(9)
    for carpet in (worked_carpet, unequal_carpet):
        for r in (0.5, 1.0, 2.0):
            lo, hi = math.exp(-carpet.lambda1(r)), math.exp(-carpet.lambda2(r))
            for _ in range(30):
                word = uniform_random_word(carpet, int(rng.integers(2, 10)), rng)
                parent = parent_flat(carpet, word)
                ratio = word_weight(carpet, word) / word_weight(carpet, parent) * carpet.m ** (-r)
                assert lo * (1 - 1e-12) <= ratio <= hi * (1 + 1e-12)


def test_squares_nest_and_tile(twomap_carpet):
    for depth in range(2, 6):
        words = omega_words(twomap_carpet, depth)
        squares = [square_geometry(twomap_carpet, w) for w in words]
        assert len({(sq.p, sq.q) for sq in squares}) == len(squares)
        for word, sq in zip(words, squares):
            assert sq.width == twomap_carpet.n ** -twomap_carpet.ell(depth)
            assert sq.height == twomap_carpet.m ** -depth
            parent = parent_flat(twomap_carpet, word)
            assert square_geometry(twomap_carpet, parent).contains(sq)
            assert is_prefix(twomap_carpet, parent, word)


def test_is_prefix_rejects_other_branches(twomap_carpet):
    a, b = roots(twomap_carpet)
    child = children(twomap_carpet, a)[0][0]
    assert is_prefix(twomap_carpet, a, child)
    assert not is_prefix(twomap_carpet, b, child)


def test_mean_exponents_approach_s0(worked_carpet, unequal_carpet):
    for carpet in (worked_carpet, unequal_carpet):
        chi = chi_constant(carpet)
        base = s0(carpet)
        for k in (1, 2, 5, 17, 100):
            assert abs(mean_exponent_sk0(carpet, k) - base) <= chi / k + 1e-12
        # I_k agrees with the brute-force sum over Omega_k
        words = omega_words(carpet, 4)
        brute = math.fsum(w.weight * w.log_weight for w in words)
        assert entropy_Ik(carpet, 4) == pytest.approx(brute, rel=1e-12)


def test_entropy_needs_positive_depth(worked_carpet):
    with pytest.raises(InvalidParam):
        entropy_Ik(worked_carpet, 0)
