"""Code construction, encoding and decoding tests."""

import itertools

import numpy as np
import pytest

from zigzag3.code import (
    CodeParams,
    CodingMatrixSet,
    FileParts,
    InconsistentShardsError,
    InsufficientShardsError,
    basis_index,
    beta,
    build_coding_matrices,
    coding_matrix_from_zigzag,
    decode_from_any_k,
    decode_shards_array,
    encode,
    encode_parts_array,
    index_bits,
    index_from_bits,
    permutation_apply,
    second_parity_by_matrices,
    second_parity_by_rows,
    verify_mds,
    zigzag_set,
)
from zigzag3.gf3 import Gf3Matrix, SignedPermutation


def cm_for(k):
    return build_coding_matrices(CodeParams(k))


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def test_params_derived_quantities():
    p = CodeParams(4)
    assert (p.n_rows, p.n_nodes, p.file_symbols) == (8, 6, 32)


def test_params_rejects_small_k():
    with pytest.raises(ValueError):
        CodeParams(1)


def test_params_cap_is_adjustable():
    with pytest.raises(ValueError):
        CodeParams(17)
    assert CodeParams(17, max_k=20).n_rows == 1 << 16


# ---------------------------------------------------------------------------
# permutations, zigzag sets, coefficients
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("k", [2, 3, 5])
def test_index_bits_roundtrip(k):
    p = CodeParams(k)
    for i in range(p.n_rows):
        bits = index_bits(p, i)
        assert len(bits) == k - 1
        assert index_from_bits(p, bits) == i
    # most significant bit first: e_1 has value 2^(k-2)
    assert index_from_bits(p, (1,) + (0,) * (k - 2)) == 1 << (k - 2)


def test_permutation_zero_is_identity():
    p = CodeParams(3)
    for x in range(p.n_rows):
        assert permutation_apply(p, 0, x) == x


def test_permutation_bit_value():
    assert permutation_apply(CodeParams(3), 1, 0) == 2


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_permutation_self_inverse(k):
    p = CodeParams(k)
    for j in range(k):
        for x in range(p.n_rows):
            assert permutation_apply(p, j, permutation_apply(p, j, x)) == x


def test_permutation_range_checks():
    p = CodeParams(3)
    with pytest.raises(ValueError):
        permutation_apply(p, 3, 0)
    with pytest.raises(ValueError):
        permutation_apply(p, 0, 4)


def test_zigzag_set_small_cases():
    assert set(zigzag_set(CodeParams(2), 0)) == {(0, 0), (1, 1)}
    assert set(zigzag_set(CodeParams(3), 0)) == {(0, 0), (2, 1), (1, 2)}


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_zigzag_set_covers_every_part_once(k):
    p = CodeParams(k)
    for l in range(p.n_rows):
        pairs = zigzag_set(p, l)
        assert len(pairs) == k
        assert sorted(j for _, j in pairs) == list(range(k))


def test_beta_examples():
    p = CodeParams(3)
    for i in range(p.n_rows):
        assert beta(p, i, 0) == 1
    assert beta(p, 2, 1) == 2
    assert beta(p, 3, 2) == 1


# ---------------------------------------------------------------------------
# coding matrices
# ---------------------------------------------------------------------------


def test_matrices_k2_golden():
    cm = cm_for(2)
    assert cm.dense(0) == Gf3Matrix.identity(2)
    assert cm.dense(1) == Gf3Matrix([[0, 2], [1, 0]])


def test_matrices_k3_golden():
    cm = cm_for(3)
    assert cm.dense(1) == Gf3Matrix([[0, 0, 2, 0], [0, 0, 0, 2], [1, 0, 0, 0], [0, 1, 0, 0]])
    assert cm.dense(2) == Gf3Matrix([[0, 2, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 2, 0]])


@pytest.mark.parametrize("k", range(2, 9))
def test_block_recursion_matches_row_rule(k):
    p = CodeParams(k)
    cm = cm_for(k)
    for j in range(k):
        assert cm.dense(j) == coding_matrix_from_zigzag(p, j)


@pytest.mark.parametrize("k", range(2, 9))
def test_matrices_square_to_minus_identity(k):
    cm = cm_for(k)
    n = CodeParams(k).n_rows
    minus_i = Gf3Matrix((-np.eye(n, dtype=int)) % 3)
    for j in range(1, k):
        d = cm.dense(j)
        assert d @ d == minus_i
        # one nonzero per row and per column
        nz = d.array != 0
        assert (nz.sum(axis=0) == 1).all() and (nz.sum(axis=1) == 1).all()


@pytest.mark.parametrize("k", [9, 10])
def test_matrices_square_to_minus_identity_compact(k):
    # Same claim at the sizes where dense products get slow: row r of A@A
    # lands on target[target[r]] with sign[r]*sign[target[r]].
    cm = cm_for(k)
    for j in range(1, k):
        m = cm.matrix(j)
        assert np.array_equal(m.target[m.target], np.arange(m.size))
        assert (m.sign * m.sign[m.target] == -1).all()


@pytest.mark.parametrize("k", range(2, 7))
def test_mds_ranks_hold(k):
    assert verify_mds(cm_for(k)).ok


def test_mds_detects_duplicate_matrix():
    p = CodeParams(3)
    cm = cm_for(3)
    broken = CodingMatrixSet(p, (cm.matrices[1], cm.matrices[1], cm.matrices[2]))
    report = verify_mds(broken)
    assert not report.ok
    assert any("A_0 - A_1" in v for v in report.violations)


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------


def test_encode_k2_worked_example():
    p = CodeParams(2)
    cw = encode(FileParts(p, [[1, 0], [0, 1]]))
    assert cw.shard(2).tolist() == [1, 1]
    assert cw.shard(3).tolist() == [0, 0]


def test_encode_zero_file():
    p = CodeParams(3)
    cw = encode(FileParts(p, np.zeros((3, 4), dtype=np.uint8)))
    assert not cw.shards.any()


@pytest.mark.parametrize("k", range(2, 9))
def test_encoder_forms_agree_on_random_data(k):
    p = CodeParams(k)
    cm = cm_for(k)
    rng = np.random.default_rng(100 + k)
    parts = rng.integers(0, 3, size=(k, 40, p.n_rows), dtype=np.uint8)
    assert np.array_equal(
        second_parity_by_rows(p, parts), second_parity_by_matrices(cm, parts)
    )


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_single_symbol_update_touches_one_symbol_per_parity(k):
    p = CodeParams(k)
    cm = cm_for(k)
    rng = np.random.default_rng(200 + k)
    parts = rng.integers(0, 3, size=(k, p.n_rows), dtype=np.uint8)
    base = encode_parts_array(p, cm, parts)
    for j in range(k):
        for i in range(p.n_rows):
            bumped = parts.copy()
            bumped[j, i] = (bumped[j, i] + 1) % 3
            delta = encode_parts_array(p, cm, bumped) != base
            assert delta[k].sum() == 1 and delta[k + 1].sum() == 1
            assert delta[:k].sum() == 1  # only the rewritten symbol itself


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------


def all_k_subsets(k):
    return itertools.combinations(range(k + 2), k)


def test_decode_systematic_passthrough():
    p = CodeParams(4)
    cm = cm_for(4)
    rng = np.random.default_rng(31)
    parts = rng.integers(0, 3, size=(4, p.n_rows), dtype=np.uint8)
    shards = encode_parts_array(p, cm, parts)
    got = decode_from_any_k(p, cm, {j: shards[j] for j in range(4)})
    assert np.array_equal(got.parts, parts)


def test_decode_from_parities_only_k2_exhaustive():
    p = CodeParams(2)
    cm = cm_for(2)
    for vals in itertools.product(range(3), repeat=4):
        parts = np.array(vals, dtype=np.uint8).reshape(2, 2)
        shards = encode_parts_array(p, cm, parts)
        got = decode_shards_array(p, cm, {2: shards[2], 3: shards[3]})
        assert np.array_equal(got, parts)


@pytest.mark.parametrize("k", [2, 3])
def test_decode_every_subset_exhaustive_small(k):
    p = CodeParams(k)
    cm = cm_for(k)
    rng = np.random.default_rng(40 + k)
    parts = rng.integers(0, 3, size=(k, 25, p.n_rows), dtype=np.uint8)
    shards = encode_parts_array(p, cm, parts)
    for subset in all_k_subsets(k):
        got = decode_shards_array(p, cm, {i: shards[i] for i in subset})
        assert np.array_equal(got, parts), subset


@pytest.mark.parametrize("k", [4, 5, 6])
def test_decode_every_subset_sampled(k):
    p = CodeParams(k)
    cm = cm_for(k)
    rng = np.random.default_rng(50 + k)
    parts = rng.integers(0, 3, size=(k, 5, p.n_rows), dtype=np.uint8)
    shards = encode_parts_array(p, cm, parts)
    for subset in all_k_subsets(k):
        got = decode_shards_array(p, cm, {i: shards[i] for i in subset})
        assert np.array_equal(got, parts), subset


def test_decode_drop_two_systematic_repeated():
    p = CodeParams(4)
    cm = cm_for(4)
    rng = np.random.default_rng(60)
    parts = rng.integers(0, 3, size=(4, 100, p.n_rows), dtype=np.uint8)
    shards = encode_parts_array(p, cm, parts)
    available = {i: shards[i] for i in (0, 2, 4, 5)}  # drop nodes 1 and 3
    assert np.array_equal(decode_shards_array(p, cm, available), parts)


def test_decode_insufficient_shards():
    p = CodeParams(3)
    cm = cm_for(3)
    shards = encode_parts_array(p, cm, np.zeros((3, 4), dtype=np.uint8))
    with pytest.raises(InsufficientShardsError):
        decode_shards_array(p, cm, {0: shards[0], 1: shards[1]})


def test_decode_detects_inconsistent_extra_shard():
    p = CodeParams(3)
    cm = cm_for(3)
    rng = np.random.default_rng(61)
    parts = rng.integers(0, 3, size=(3, p.n_rows), dtype=np.uint8)
    shards = encode_parts_array(p, cm, parts)
    tampered = shards[4].copy()
    tampered[0] = (tampered[0] + 1) % 3
    available = {0: shards[0], 1: shards[1], 2: shards[2], 4: tampered}
    with pytest.raises(InconsistentShardsError):
        decode_shards_array(p, cm, available)


def test_signed_permutation_compact_dense_roundtrip_on_coding_matrices():
    cm = cm_for(5)
    for m in cm.matrices:
        assert SignedPermutation.from_dense(m.dense()) == m
