"""Repair-matrix construction, rank conditions, planning and I/O accounting."""

import itertools
from fractions import Fraction

import numpy as np
import pytest

from zigzag3.code import CodeParams, build_coding_matrices, encode_parts_array
from zigzag3.gf3 import Gf3Matrix, rank
from zigzag3.repair import (
    FIRST_PARITY,
    SECOND_PARITY,
    RepairMatrixPair,
    brute_force_min_io,
    build_helpers,
    build_repair_pair,
    compute_downloads,
    enumerate_rref,
    execute_repair,
    expected_repair_io,
    io_lower_bound,
    plan_repair,
    repair_bandwidth,
    verify_duality,
    verify_repair_conditions,
    verify_zero_column_structure,
)

VARIANTS = (FIRST_PARITY, SECOND_PARITY)


def setup_k(k):
    p = CodeParams(k)
    return p, build_coding_matrices(p)


# ---------------------------------------------------------------------------
# recursive construction
# ---------------------------------------------------------------------------


def test_helper_seeds():
    h = build_helpers(2, FIRST_PARITY)
    assert h.e.tolist() == [[0, 2]] and h.f.tolist() == [[2, 0]]
    h = build_helpers(2, SECOND_PARITY)
    assert h.e.tolist() == [[2, 0]] and h.f.tolist() == [[0, 2]]


def test_helper_one_level():
    h = build_helpers(3, FIRST_PARITY)
    assert h.e.tolist() == [[0, 2, 0, 0], [0, 0, 2, 0]]
    assert h.f.tolist() == [[2, 0, 0, 0], [0, 0, 0, 2]]


@pytest.mark.parametrize("k", range(2, 9))
@pytest.mark.parametrize("variant", VARIANTS)
def test_helper_dimensions(k, variant):
    h = build_helpers(k, variant)
    assert h.e.shape == h.f.shape == (1 << (k - 2), 1 << (k - 1))


def test_helpers_reject_k1():
    with pytest.raises(ValueError):
        build_helpers(1, FIRST_PARITY)


def test_pair_seeds():
    p = build_repair_pair(2, FIRST_PARITY)
    assert p.s.tolist() == [[0, 1]] and p.s_tilde.tolist() == [[1, 1]]
    p = build_repair_pair(2, SECOND_PARITY)
    assert p.s.tolist() == [[0, 1]] and p.s_tilde.tolist() == [[1, 2]]


def test_pair_k3_goldens():
    p = build_repair_pair(3, FIRST_PARITY)
    assert p.s == Gf3Matrix([[0, 1, 0, -1], [0, 0, 1, 1]])
    assert p.s_tilde == Gf3Matrix([[1, 1, 1, 0], [0, 0, 0, 1]])
    p = build_repair_pair(3, SECOND_PARITY)
    assert p.s == Gf3Matrix([[0, 1, 0, 1], [0, 0, 1, -1]])
    assert p.s_tilde == Gf3Matrix([[1, -1, -1, 0], [0, 0, 0, 1]])


@pytest.mark.parametrize("k", range(2, 9))
@pytest.mark.parametrize("variant", VARIANTS)
def test_pair_ranks(k, variant):
    pair = build_repair_pair(k, variant)
    half = 1 << (k - 2)
    assert pair.s.shape == pair.s_tilde.shape == (half, 2 * half)
    assert rank(pair.s) == rank(pair.s_tilde) == half


# ---------------------------------------------------------------------------
# rank conditions, duality
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("k", range(2, 9))
@pytest.mark.parametrize("variant", VARIANTS)
def test_repair_conditions_hold(k, variant):
    p, cm = setup_k(k)
    report = verify_repair_conditions(build_repair_pair(k, variant), cm)
    assert report.ok, report.violations


def test_repair_conditions_reject_duplicated_matrix():
    p, cm = setup_k(3)
    s = build_repair_pair(3, FIRST_PARITY).s
    report = verify_repair_conditions(RepairMatrixPair(s, s, FIRST_PARITY), cm)
    full = report.checks[0]
    assert full.name == "full-rank" and full.actual == p.n_rows // 2
    assert not report.ok


@pytest.mark.parametrize("k", range(2, 9))
@pytest.mark.parametrize("variant", VARIANTS)
def test_duality(k, variant):
    _, cm = setup_k(k)
    pair = build_repair_pair(k, variant)
    report = verify_duality(pair, cm)
    assert report.ok
    assert report.swapped_report.variant != variant


def test_duality_swap_is_involution():
    _, cm = setup_k(4)
    pair = build_repair_pair(4, FIRST_PARITY)
    again = pair.swapped().swapped()
    assert again.s == pair.s and again.s_tilde == pair.s_tilde and again.variant == pair.variant
    assert verify_duality(again, cm) == verify_duality(pair, cm)


# ---------------------------------------------------------------------------
# zero-column structure
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("k", range(2, 9))
@pytest.mark.parametrize("variant", VARIANTS)
def test_zero_column_census_and_propagation(k, variant):
    p = CodeParams(k)
    report = verify_zero_column_structure(build_repair_pair(k, variant), p)
    assert report.zero_cols_s == (0,)
    assert report.zero_cols_s_tilde == ()
    assert report.nonzero_cols_s == p.n_rows - 1
    assert report.nonzero_cols_s_tilde == p.n_rows
    assert report.per_matrix_floor == p.n_rows - Fraction(p.n_rows, 2 * (k - 1))
    assert report.ok, report.propagation_violations


# ---------------------------------------------------------------------------
# planning
# ---------------------------------------------------------------------------


def test_plan_first_parity_k3():
    p, cm = setup_k(3)
    plan = plan_repair(p, cm, 3)
    assert plan.io_per_node == {0: 3, 1: 3, 2: 3, 4: 4}
    assert plan.total_io == 13 == expected_repair_io(p)
    assert plan.bandwidth == 8


def test_plan_second_parity_k4():
    p, cm = setup_k(4)
    plan = plan_repair(p, cm, 5)
    assert plan.total_io == 36
    assert plan.bandwidth == 20
    assert plan.helper_nodes == [0, 1, 2, 3, 4]


@pytest.mark.parametrize("k", range(2, 9))
def test_plan_meters_both_parities(k):
    p, cm = setup_k(k)
    for failed in (k, k + 1):
        plan = plan_repair(p, cm, failed)
        assert plan.total_io == expected_repair_io(p)
        assert plan.bandwidth == repair_bandwidth(p) == (k + 1) * p.n_rows // 2
        assert all(m.rows == p.n_rows // 2 for m in plan.downloads.values())


def test_plan_rejects_systematic_node():
    p, cm = setup_k(3)
    with pytest.raises(ValueError):
        plan_repair(p, cm, 1)


# ---------------------------------------------------------------------------
# executing repairs
# ---------------------------------------------------------------------------


def run_repair(p, cm, parts, failed):
    shards = encode_parts_array(p, cm, parts)
    plan = plan_repair(p, cm, failed)
    downloads = compute_downloads(plan, {h: shards[h] for h in plan.helper_nodes})
    return execute_repair(plan, downloads), shards[failed]


def test_repair_exhaustive_k2():
    p, cm = setup_k(2)
    for failed in (2, 3):
        for vals in itertools.product(range(3), repeat=4):
            parts = np.array(vals, dtype=np.uint8).reshape(2, 2)
            got, want = run_repair(p, cm, parts, failed)
            assert np.array_equal(got, want)


@pytest.mark.parametrize("k", [3, 4, 5, 6])
def test_repair_random_files(k):
    p, cm = setup_k(k)
    rng = np.random.default_rng(300 + k)
    parts = rng.integers(0, 3, size=(k, 200, p.n_rows), dtype=np.uint8)
    for failed in (k, k + 1):
        got, want = run_repair(p, cm, parts, failed)
        assert np.array_equal(got, want)


def test_repair_zero_file():
    p, cm = setup_k(4)
    got, want = run_repair(p, cm, np.zeros((4, p.n_rows), dtype=np.uint8), 4)
    assert not got.any() and np.array_equal(got, want)


def test_execute_repair_validates_downloads():
    p, cm = setup_k(3)
    plan = plan_repair(p, cm, 3)
    shards = encode_parts_array(p, cm, np.zeros((3, 4), dtype=np.uint8))
    downloads = compute_downloads(plan, {h: shards[h] for h in plan.helper_nodes})
    with pytest.raises(ValueError):
        execute_repair(plan, {0: downloads[0]})
    bad = dict(downloads)
    bad[0] = bad[0][..., :1]
    with pytest.raises(ValueError):
        execute_repair(plan, bad)


# ---------------------------------------------------------------------------
# lower bound
# ---------------------------------------------------------------------------


def test_bound_k3():
    r = io_lower_bound(3)
    assert (r.lower_bound, r.achieved_io, r.gap) == (12, 13, 1)
    assert not r.clamped


def test_bound_k4():
    r = io_lower_bound(4)
    assert r.lower_bound == Fraction(100, 3)
    assert r.achieved_io == 36
    assert r.lower_bound_ceil == 34


def test_bound_k5():
    r = io_lower_bound(5)
    assert (r.lower_bound, r.achieved_io) == (84, 91)


def test_bound_k2_clamped():
    r = io_lower_bound(2)
    assert r.lower_bound == 3 and r.achieved_io == 4
    assert r.clamped
    assert r.displayed_bound == r.bandwidth_floor == 3


def test_bound_rejects_k1():
    with pytest.raises(ValueError):
        io_lower_bound(1)


@pytest.mark.parametrize("k", range(2, 11))
def test_achieved_at_least_ceiling(k):
    r = io_lower_bound(k)
    assert r.achieves_bound


# ---------------------------------------------------------------------------
# brute force
# ---------------------------------------------------------------------------


def test_rref_enumeration_counts():
    assert sum(1 for _ in enumerate_rref(1, 2)) == 4
    assert sum(1 for _ in enumerate_rref(2, 4)) == 130


def test_brute_force_k2():
    r = brute_force_min_io(2)
    assert r.min_io == 4  # frozen from the enumeration itself
    assert r.lower_bound_ceil == 3 and r.construction_io == 4
    assert r.valid_pairs == 4


def test_brute_force_witness_is_valid():
    _, cm = setup_k(2)
    r = brute_force_min_io(2)
    assert verify_repair_conditions(r.witness, cm).ok


def test_brute_force_rejects_large_k():
    with pytest.raises(ValueError, match="k <= 3"):
        brute_force_min_io(4)
