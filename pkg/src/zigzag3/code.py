"""Construction of the (k+2,k) zigzag code over GF(3).

A file of M = k*N symbols (N = 2^(k-1)) is split into k parts f_0..f_{k-1}.
Nodes 0..k-1 store the parts uncoded, node k stores the row sums, and node
k+1 stores the zigzag parity: row l combines one symbol from each part,
picked by XOR-ing the row index with a basis vector and weighted by a +-1
coefficient.  Equivalently, node k+1 stores sum_j A_j f_j for k signed
permutation matrices A_j, built here both by the recursive block definition
and directly from the row/coefficient description; the two constructions
must agree entrywise and the encoder cross-checks them.

All symbols live in GF(3) with 2 standing for -1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gf3 import Gf3Matrix, SignedPermutation, rank, solve_square

__all__ = [
    "MAX_K_DEFAULT",
    "CodeParams",
    "CodingMatrixSet",
    "FileParts",
    "Codeword",
    "InsufficientShardsError",
    "InconsistentShardsError",
    "basis_index",
    "index_bits",
    "index_from_bits",
    "permutation_apply",
    "zigzag_set",
    "beta",
    "beta_row_coefficients",
    "build_coding_matrices",
    "coding_matrix_from_zigzag",
    "second_parity_by_rows",
    "second_parity_by_matrices",
    "encode_parts_array",
    "encode",
    "MdsReport",
    "verify_mds",
    "decode_shards_array",
    "decode_from_any_k",
]

# Guard for dense rank checks; N doubles with every k. Raise per-call if needed.
MAX_K_DEFAULT = 16


class InsufficientShardsError(ValueError):
    """Fewer than k distinct shards were supplied."""


class InconsistentShardsError(ValueError):
    """Supplied shards do not agree with any single codeword."""


@dataclass(frozen=True)
class CodeParams:
    """Validity gate shared by every operation: k data nodes, N = 2^(k-1)."""

    k: int
    max_k: int = MAX_K_DEFAULT

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.k > self.max_k:
            raise ValueError(f"k={self.k} exceeds the configured cap {self.max_k}")

    @property
    def n_rows(self) -> int:
        """Symbols per node, N = 2^(k-1)."""
        return 1 << (self.k - 1)

    @property
    def n_nodes(self) -> int:
        return self.k + 2

    @property
    def file_symbols(self) -> int:
        """Total symbols per stripe, M = k*N."""
        return self.k * self.n_rows


# ---------------------------------------------------------------------------
# Row-index machinery: bit flips and +-1 coefficients
# ---------------------------------------------------------------------------


def index_bits(params: CodeParams, i: int) -> tuple[int, ...]:
    """Row index as its k-1 bits (i_1, ..., i_{k-1}), most significant first."""
    if not 0 <= i < params.n_rows:
        raise ValueError(f"row index {i} out of range [0, {params.n_rows})")
    return tuple((i >> (params.k - 1 - j)) & 1 for j in range(1, params.k))


def index_from_bits(params: CodeParams, bits) -> int:
    bits = tuple(bits)
    if len(bits) != params.k - 1 or any(b not in (0, 1) for b in bits):
        raise ValueError(f"need {params.k - 1} bits in {{0,1}}, got {bits}")
    return sum(b << (params.k - 1 - j) for j, b in enumerate(bits, start=1))


def basis_index(params: CodeParams, j: int) -> int:
    """Integer value of e_j under the big-endian bit convention; e_0 = 0.

    Bit 1 is the most significant of the k-1 index bits, so e_j = 2^(k-1-j).
    """
    if not 0 <= j < params.k:
        raise ValueError(f"node index {j} out of range [0, {params.k})")
    return 0 if j == 0 else 1 << (params.k - 1 - j)


def permutation_apply(params: CodeParams, j: int, x: int) -> int:
    """Row permutation used by part j: flip bit j of x (identity for j=0).

    Self-inverse, since XOR undoes itself.
    """
    if not 0 <= x < params.n_rows:
        raise ValueError(f"row index {x} out of range [0, {params.n_rows})")
    return x ^ basis_index(params, j)


def zigzag_set(params: CodeParams, l: int) -> list[tuple[int, int]]:
    """The k (row, part) pairs feeding row l of the zigzag parity."""
    if not 0 <= l < params.n_rows:
        raise ValueError(f"row index {l} out of range [0, {params.n_rows})")
    return [(l ^ basis_index(params, j), j) for j in range(params.k)]


def beta(params: CodeParams, i: int, j: int) -> int:
    """Coefficient of part j's row-i symbol in the zigzag parity, in GF(3).

    1 for j=0, otherwise the parity of the first j index bits decides
    between +1 and -1 (returned as 1 or 2).
    """
    if not 0 <= i < params.n_rows:
        raise ValueError(f"row index {i} out of range [0, {params.n_rows})")
    if not 0 <= j < params.k:
        raise ValueError(f"node index {j} out of range [0, {params.k})")
    if j == 0:
        return 1
    bit_sum = (i >> (params.k - 1 - j)).bit_count()
    return 1 if bit_sum % 2 == 0 else 2


def beta_row_coefficients(params: CodeParams, j: int) -> np.ndarray:
    """Vector of beta(i, j) over all rows i, as uint8 field elements."""
    return np.array([beta(params, i, j) for i in range(params.n_rows)], dtype=np.uint8)


# ---------------------------------------------------------------------------
# Coding matrices
# ---------------------------------------------------------------------------


def _recursion_level(k: int) -> list[SignedPermutation]:
    """Block recursion for the k signed permutations at level k.

    A_0 = I; A_1 swaps halves with a -1 on the upper right; for j >= 2,
    A_j = diag(B, -B) with B the (j-1)-th matrix one level down.
    """
    n = 1 << (k - 1)
    if k == 2:
        return [
            SignedPermutation.identity(2),
            SignedPermutation([1, 0], [-1, 1]),
        ]
    prev = _recursion_level(k - 1)
    half = n >> 1
    mats = [SignedPermutation.identity(n)]
    mats.append(
        SignedPermutation(
            np.concatenate([np.arange(half) + half, np.arange(half)]),
            np.concatenate([-np.ones(half, dtype=np.int8), np.ones(half, dtype=np.int8)]),
        )
    )
    for j in range(2, k):
        b = prev[j - 1]
        mats.append(
            SignedPermutation(
                np.concatenate([b.target, b.target + half]),
                np.concatenate([b.sign, -b.sign]),
            )
        )
    return mats


@dataclass(frozen=True)
class CodingMatrixSet:
    """The k coding matrices, compact with dense views on demand."""

    params: CodeParams
    matrices: tuple[SignedPermutation, ...]
    _dense_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def matrix(self, j: int) -> SignedPermutation:
        return self.matrices[j]

    def dense(self, j: int) -> Gf3Matrix:
        if j not in self._dense_cache:
            self._dense_cache[j] = self.matrices[j].dense()
        return self._dense_cache[j]


def build_coding_matrices(params: CodeParams) -> CodingMatrixSet:
    """Coding matrices from the recursive block definition."""
    return CodingMatrixSet(params, tuple(_recursion_level(params.k)))


def coding_matrix_from_zigzag(params: CodeParams, j: int) -> Gf3Matrix:
    """Coding matrix j built entrywise from the row/coefficient description.

    Row l has its single nonzero at column l ^ e_j with value beta(l ^ e_j, j).
    Independent of the block recursion; the two must agree entrywise.
    """
    if not 0 <= j < params.k:
        raise ValueError(f"node index {j} out of range [0, {params.k})")
    n = params.n_rows
    out = np.zeros((n, n), dtype=np.uint8)
    for l in range(n):
        i = l ^ basis_index(params, j)
        out[l, i] = beta(params, i, j)
    return Gf3Matrix(out)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def second_parity_by_rows(params: CodeParams, parts: np.ndarray) -> np.ndarray:
    """Zigzag parity via the per-row combination rule.

    ``parts`` has shape (k, ..., N); the result row l sums, over parts j,
    the coefficient beta(l ^ e_j, j) times symbol l ^ e_j of part j.
    """
    n = params.n_rows
    acc = np.zeros(parts.shape[1:], dtype=np.int16)
    for j in range(params.k):
        idx = np.arange(n) ^ basis_index(params, j)
        coeff = beta_row_coefficients(params, j)[idx]
        acc += parts[j][..., idx].astype(np.int16) * coeff
    return (acc % 3).astype(np.uint8)


def second_parity_by_matrices(cm: CodingMatrixSet, parts: np.ndarray) -> np.ndarray:
    """Zigzag parity as sum_j A_j f_j using the compact permutations."""
    acc = np.zeros(parts.shape[1:], dtype=np.int16)
    for j, m in enumerate(cm.matrices):
        acc += m.apply(parts[j])
    return (acc % 3).astype(np.uint8)


def encode_parts_array(params: CodeParams, cm: CodingMatrixSet, parts: np.ndarray) -> np.ndarray:
    """Encode parts of shape (k, ..., N) into shards of shape (k+2, ..., N).

    The zigzag parity is produced by the O(kN) permutation path; under
    asserts the per-row rule is recomputed and compared, keeping the
    matrix/row-rule equivalence continuously exercised.
    """
    if parts.shape[0] != params.k or parts.shape[-1] != params.n_rows:
        raise ValueError(f"parts shape {parts.shape} does not match k={params.k}, N={params.n_rows}")
    parts = parts.astype(np.uint8, copy=False) % 3
    row_sum = parts.sum(axis=0, dtype=np.int16) % 3
    zigzag = second_parity_by_matrices(cm, parts)
    assert np.array_equal(zigzag, second_parity_by_rows(params, parts)), (
        "coding-matrix and row-rule parities diverged"
    )
    return np.concatenate([parts, row_sum[None].astype(np.uint8), zigzag[None]], axis=0)


@dataclass(frozen=True)
class FileParts:
    """One stripe of source data: k column vectors of N symbols each."""

    params: CodeParams
    parts: np.ndarray  # shape (k, N), uint8 mod 3

    def __post_init__(self):
        a = np.mod(np.asarray(self.parts), 3).astype(np.uint8)
        if a.shape != (self.params.k, self.params.n_rows):
            raise ValueError(
                f"parts shape {a.shape} != ({self.params.k}, {self.params.n_rows})"
            )
        a.setflags(write=False)
        object.__setattr__(self, "parts", a)

    def part(self, j: int) -> np.ndarray:
        return self.parts[j]


@dataclass(frozen=True)
class Codeword:
    """One encoded stripe: k systematic shards plus the two parities."""

    params: CodeParams
    shards: np.ndarray  # shape (k+2, N), uint8 mod 3

    def __post_init__(self):
        a = np.mod(np.asarray(self.shards), 3).astype(np.uint8)
        if a.shape != (self.params.n_nodes, self.params.n_rows):
            raise ValueError(
                f"shards shape {a.shape} != ({self.params.n_nodes}, {self.params.n_rows})"
            )
        a.setflags(write=False)
        object.__setattr__(self, "shards", a)

    def shard(self, node: int) -> np.ndarray:
        return self.shards[node]


def encode(parts: FileParts, cm: CodingMatrixSet | None = None) -> Codeword:
    params = parts.params
    if cm is None:
        cm = build_coding_matrices(params)
    return Codeword(params, encode_parts_array(params, cm, parts.parts))


# ---------------------------------------------------------------------------
# MDS verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MdsReport:
    params: CodeParams
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_mds(cm: CodingMatrixSet) -> MdsReport:
    """Check rank(A_i) = rank(A_i - A_j) = N for all i != j."""
    params = cm.params
    n = params.n_rows
    violations = []
    dense = [cm.dense(j) for j in range(params.k)]
    for i in range(params.k):
        r = rank(dense[i])
        if r != n:
            violations.append(f"rank(A_{i}) = {r}, expected {n}")
    for i in range(params.k):
        for j in range(params.k):
            if i == j:
                continue
            r = rank(dense[i] - dense[j])
            if r != n:
                violations.append(f"rank(A_{i} - A_{j}) = {r}, expected {n}")
    return MdsReport(params, tuple(violations))


# ---------------------------------------------------------------------------
# Decoding from any k shards
# ---------------------------------------------------------------------------


def _flatten_tail(x: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
    """View (..., N) as (S, N); returns the flat array and the lead shape."""
    lead = x.shape[:-1]
    return x.reshape(-1, x.shape[-1]), lead


def decode_shards_array(
    params: CodeParams, cm: CodingMatrixSet, available: dict[int, np.ndarray]
) -> np.ndarray:
    """Recover all k parts (shape (k, ..., N)) from any >= k shards.

    Case split: all systematic present -> copy; one missing -> peel it off
    a parity (inverting a single signed permutation); two missing -> solve
    the stacked 2N x 2N system built from both parities.  With more than k
    shards the extras are cross-checked against a re-encode.
    """
    k, n = params.k, params.n_rows
    for node, data in available.items():
        if not 0 <= node < params.n_nodes:
            raise ValueError(f"unknown node id {node}")
        if data.shape[-1] != n:
            raise ValueError(f"shard {node} has row length {data.shape[-1]}, expected {n}")
    if len(available) < k:
        raise InsufficientShardsError(f"got {len(available)} shards, need at least {k}")

    missing_sys = [j for j in range(k) if j not in available]
    lead = next(iter(available.values())).shape[:-1]
    parts = np.zeros((k,) + lead + (n,), dtype=np.uint8)
    for j in range(k):
        if j in available:
            parts[j] = available[j] % 3

    if len(missing_sys) == 1:
        j = missing_sys[0]
        if k in available:
            acc = available[k].astype(np.int16)
            for l in range(k):
                if l != j:
                    acc = acc - parts[l]
            parts[j] = acc % 3
        else:
            acc = available[k + 1].astype(np.int16)
            for l in range(k):
                if l != j:
                    acc = acc - cm.matrices[l].apply(parts[l])
            parts[j] = cm.matrices[j].inverse().apply(acc % 3)
    elif len(missing_sys) == 2:
        j1, j2 = missing_sys
        r1 = available[k].astype(np.int16)
        r2 = available[k + 1].astype(np.int16)
        for l in range(k):
            if l not in missing_sys:
                r1 = r1 - parts[l]
                r2 = r2 - cm.matrices[l].apply(parts[l])
        system = Gf3Matrix.stack(
            Gf3Matrix.hstack(Gf3Matrix.identity(n), Gf3Matrix.identity(n)),
            Gf3Matrix.hstack(cm.dense(j1), cm.dense(j2)),
        )
        flat1, _ = _flatten_tail(r1 % 3)
        flat2, _ = _flatten_tail(r2 % 3)
        rhs = Gf3Matrix(np.concatenate([flat1.T, flat2.T], axis=0))
        sol = solve_square(system, rhs).array
        parts[j1] = sol[:n].T.reshape(lead + (n,))
        parts[j2] = sol[n:].T.reshape(lead + (n,))

    if len(available) > k:
        shards = encode_parts_array(params, cm, parts)
        for node, data in available.items():
            if not np.array_equal(shards[node], data % 3):
                raise InconsistentShardsError(f"shard {node} disagrees with the reconstruction")
    return parts


def decode_from_any_k(
    params: CodeParams, cm: CodingMatrixSet, available: dict[int, np.ndarray]
) -> FileParts:
    return FileParts(params, decode_shards_array(params, cm, available))
