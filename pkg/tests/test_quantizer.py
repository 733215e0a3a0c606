import logging
import math

import numpy as np
import pytest

from carpetq.errors import GridTooCoarse, InvalidK, InvalidParam, SeparationRequired
from carpetq.models.symbolic import AntichainKind
from carpetq.services import quantizer_service
from carpetq.services.antichain_service import build_antichain, omega_words
from carpetq.services.carpet_service import chaos_sample
from carpetq.services.quantizer_service import (
    LOG_FLOOR,
    antichain_cloud,
    antichain_upper_bound,
    bound_check,
    bound_rows,
    brute_force_error,
    discretize,
    error_curve,
    geometric_bound,
    lloyd,
    objective,
    refine_cloud,
    sample_cloud,
    to_error,
)
from carpetq.services.symbolic_service import square_geometry

CELL = math.sqrt(2) / 64


@pytest.fixture(scope="module")
def twomap_cloud(twomap_carpet):
    return discretize(twomap_carpet, 3)


def test_discretize_places_atoms_at_square_centres(twomap_carpet, twomap_cloud):
    assert len(twomap_cloud) == 8
    assert np.allclose(twomap_cloud.weights, 1 / 8, atol=1e-15)
    centres = [square_geometry(twomap_carpet, w).center for w in omega_words(twomap_carpet, 3)]
    assert np.allclose(twomap_cloud.points, centres, atol=1e-15)
    assert twomap_cloud.bias == pytest.approx(math.sqrt(10) / 8)
    assert twomap_cloud.provenance == {"source": "omega", "depth": 3}


def test_sample_cloud_is_uniform(worked_carpet):
    cloud = sample_cloud(chaos_sample(worked_carpet, seed=1, count=200), seed=1)
    assert len(cloud) == 200
    assert cloud.weights.sum() == pytest.approx(1.0)
    assert not cloud.separated


def test_refined_cloud_keeps_mass(worked_carpet):
    cloud = refine_cloud(worked_carpet, AntichainKind.GAMMA_JR, 20.0, r=1.0, levels=1)
    members = build_antichain(worked_carpet, AntichainKind.GAMMA_JR, 20.0, r=1.0, retain_words=False)
    assert len(cloud) > len(members)
    assert cloud.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all((cloud.points > 0) & (cloud.points < 1))


def test_antichain_cloud_needs_geometry(twomap_carpet):
    bare = build_antichain(twomap_carpet, AntichainKind.GAMMA_JR, 10.0, r=1.0)
    with pytest.raises(InvalidParam):
        antichain_cloud(twomap_carpet, bare)
    with_geometry = build_antichain(twomap_carpet, AntichainKind.GAMMA_JR, 10.0, r=1.0, geometry=True)
    assert len(antichain_cloud(twomap_carpet, with_geometry)) == 16


# --- grid oracle ------------------------------------------------------------------


def test_oracle_single_centre_sits_at_the_centroid(twomap_cloud):
    # the cloud is symmetric about (1/2, 1/2), a grid point for even g
    spread = math.sqrt(float(np.sum(twomap_cloud.weights * np.sum((twomap_cloud.points - 0.5) ** 2, axis=1))))
    for g in (8, 64):
        assert brute_force_error(twomap_cloud, 1, 2.0, grid_res=g) == pytest.approx(spread, abs=1e-12)
    assert lloyd(twomap_cloud, 1, 2.0, seed=0).error == pytest.approx(spread, abs=1e-12)


def test_finer_grids_never_do_worse(twomap_cloud):
    errors = [brute_force_error(twomap_cloud, 2, 1.0, grid_res=g) for g in (8, 16, 32, 64)]
    assert all(b <= a + 1e-15 for a, b in zip(errors, errors[1:]))


def test_oracle_r_zero_is_finite(twomap_cloud):
    value = brute_force_error(twomap_cloud, 2, 0.0, grid_res=16)
    assert 0 < value < 1


def test_oracle_rejects_bad_requests(twomap_cloud, worked_carpet):
    with pytest.raises(InvalidK):
        brute_force_error(twomap_cloud, 4, 2.0)
    with pytest.raises(GridTooCoarse):
        brute_force_error(twomap_cloud, 3, 2.0, grid_res=1)
    with pytest.raises(InvalidParam):
        brute_force_error(twomap_cloud, 1, 2.0, grid_res=65)
    unseparated = sample_cloud(chaos_sample(worked_carpet, seed=2, count=50), seed=2)
    with pytest.raises(SeparationRequired):
        brute_force_error(unseparated, 1, 0.0, grid_res=8)


@pytest.mark.parametrize("name", ["twomap_carpet", "unequal_carpet"])
@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("r", [1.0, 2.0])
def test_lloyd_agrees_with_oracle(request, name, k, r):
    cloud = discretize(request.getfixturevalue(name), 3)
    found = lloyd(cloud, k, r, seed=0, restarts=32).error
    exact = brute_force_error(cloud, k, r, grid_res=64)
    assert abs(found - exact) <= max(1e-6, CELL)


@pytest.mark.slow
@pytest.mark.parametrize("name", ["twomap_carpet", "unequal_carpet", "worked_carpet"])
@pytest.mark.parametrize("r", [1.0, 2.0])
def test_lloyd_agrees_with_oracle_three_centres(request, name, r):
    cloud = discretize(request.getfixturevalue(name), 3)
    found = lloyd(cloud, 3, r, seed=0, restarts=32).error
    exact = brute_force_error(cloud, 3, r, grid_res=64)
    assert abs(found - exact) <= max(1e-6, CELL)


# --- Lloyd --------------------------------------------------------------------------


def test_one_centre_per_atom_has_zero_error(twomap_cloud):
    assert lloyd(twomap_cloud, 8, 2.0, seed=0).error < 1e-12


def test_lloyd_history_never_increases(unequal_carpet):
    cloud = discretize(unequal_carpet, 5)
    for r in (0.0, 1.0, 2.0, 3.5):
        result = lloyd(cloud, 5, r, seed=3, restarts=4)
        assert all(b <= a + 1e-12 * max(1.0, abs(a)) for a, b in zip(result.history, result.history[1:]))
        assert result.objective == pytest.approx(objective(cloud, result.codebook, r), abs=1e-12)
        assert result.error == pytest.approx(to_error(result.objective, r))


def test_lloyd_is_deterministic(unequal_carpet):
    cloud = discretize(unequal_carpet, 5)
    a = lloyd(cloud, 6, 1.0, seed=11, restarts=4)
    b = lloyd(cloud, 6, 1.0, seed=11, restarts=4, workers=3)
    assert np.array_equal(a.codebook, b.codebook)
    assert a.restart == b.restart


def test_lloyd_rejects_bad_k(twomap_cloud):
    for k in (0, 9):
        with pytest.raises(InvalidK):
            lloyd(twomap_cloud, k, 2.0)


def test_warm_start_never_loses(unequal_carpet):
    cloud = discretize(unequal_carpet, 5)
    first = lloyd(cloud, 4, 2.0, seed=0, restarts=1)
    warm = lloyd(cloud, 4, 2.0, seed=5, restarts=1, init=first.codebook)
    assert warm.objective <= first.objective + 1e-12


def test_error_curve_rejects_unordered_k(twomap_carpet):
    with pytest.raises(InvalidParam):
        error_curve(twomap_carpet, 2.0, [4, 2], depth=4)


def test_error_curve_rows(twomap_carpet):
    curve = error_curve(twomap_carpet, 2.0, [1, 2, 4, 8], depth=5, seed=0, restarts=4)
    assert [row.k for row in curve.rows] == [1, 2, 4, 8]
    assert all(row.monotone for row in curve.rows)
    errors = [row.e for row in curve.rows]
    assert all(b <= a + 1e-9 for a, b in zip(errors, errors[1:]))
    assert curve.s == pytest.approx(1.0, abs=1e-9)
    assert curve.rows[2].coefficient == pytest.approx(4 * curve.rows[2].e)


@pytest.mark.slow
@pytest.mark.parametrize("name, target", [("twomap_carpet", 1.0), ("uniform_carpet", 2.0)])
def test_error_curve_slope(request, name, target):
    carpet = request.getfixturevalue(name)
    curve = error_curve(carpet, 2.0, [2, 4, 8, 16, 32, 64], depth=8, seed=0, restarts=8)
    assert abs(curve.slope - target) <= 0.2 * target, curve.rows
    assert curve.coefficient_ratio < 10


# --- bounds -------------------------------------------------------------------------


def test_twomap_antichain_bound(twomap_carpet):
    count, bound, xi = antichain_upper_bound(twomap_carpet, 1.0, 10.0)
    assert count == 16
    assert bound == pytest.approx(math.sqrt(10) / 16, rel=1e-12)
    assert xi == pytest.approx(math.sqrt(10), rel=1e-9)


def test_twomap_geometric_bound(twomap_carpet):
    psi, upper, proxy = geometric_bound(twomap_carpet, 1.0)
    assert psi == 8
    assert upper == pytest.approx(0.5 * math.log(10) - 3 * math.log(2), abs=1e-12)
    assert proxy == pytest.approx(0.5 * math.log(10), abs=1e-9)
    rows = bound_rows(twomap_carpet, 0.0, [1.0])
    assert (rows[0].count, rows[0].bound) == (psi, upper)


def test_lloyd_stays_under_the_bounds(twomap_carpet, unequal_carpet):
    error, bound = bound_check(twomap_carpet, 1.0, 10.0)
    assert error <= bound + 1e-12
    log_error, upper = bound_check(twomap_carpet, 0.0, 1.0)
    assert log_error <= upper + 1e-6
    log_error, upper = bound_check(unequal_carpet, 0.0, 1.0)
    assert log_error <= upper + 1e-6


@pytest.mark.slow
@pytest.mark.parametrize("j", [100.0, 1000.0])
def test_lloyd_stays_under_the_bounds_on_the_worked_example(worked_carpet, j):
    error, bound = bound_check(worked_carpet, 1.0, j)
    assert error <= bound + 1e-12
    log_error, upper = bound_check(worked_carpet, 0.0, j)
    assert log_error <= upper + 1e-6


def test_errors_grow_with_r(unequal_carpet):
    # each run starts from the previous codebook, so e_r can only fall as r falls
    cloud = discretize(unequal_carpet, 5)
    for k in (2, 4):
        previous, errors = None, []
        for r in (3.5, 2.0, 1.0, 0.5, 0.0):
            init = None if previous is None else previous.codebook
            previous = lloyd(cloud, k, r, seed=0, restarts=1, init=init)
            errors.append(previous.error)
        assert all(lo <= hi + 1e-9 for hi, lo in zip(errors, errors[1:])), errors


@pytest.mark.parametrize("r", [1.0, 2.0])
def test_deeper_clouds_stay_within_the_bias(unequal_carpet, r):
    coarse, fine = discretize(unequal_carpet, 3), discretize(unequal_carpet, 5)
    a = lloyd(coarse, 4, r, seed=0, restarts=4)
    b = lloyd(fine, 4, r, seed=0, restarts=1, init=a.codebook)
    c = lloyd(coarse, 4, r, seed=0, restarts=1, init=b.codebook)
    assert b.error <= a.error + coarse.bias
    assert c.error <= b.error + coarse.bias


def test_r_zero_reports_the_log_floor(twomap_cloud):
    result = lloyd(twomap_cloud, 8, 0.0, seed=0)
    assert result.objective == pytest.approx(math.log(LOG_FLOOR), rel=1e-12)
    assert result.objective == pytest.approx(objective(twomap_cloud, result.codebook, 0.0), rel=1e-12)


def test_capped_descent_is_logged(unequal_carpet, monkeypatch, caplog):
    monkeypatch.setattr(quantizer_service, "INNER_STEPS", 1)
    caplog.set_level(logging.DEBUG, logger="carpetq.services.quantizer_service")
    lloyd(discretize(unequal_carpet, 5), 2, 1.0, seed=0, restarts=1)
    assert "cell descent stopped" in caplog.text
