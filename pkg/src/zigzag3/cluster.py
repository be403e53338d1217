"""Deterministic in-process simulation of a k+2 node storage cluster.

Byte files are expanded six trits per byte (256 <= 3^6), zero-padded to
whole stripes of k*N symbols, and encoded stripe by stripe; the code is a
fixed-size block code, so striping is the standard lift and all meters
aggregate across stripes.  Repair reads are metered by the nonzero columns
of the matrix a helper applies, which is exactly the disk-I/O quantity the
repair strategy optimizes, even though the simulator could trivially read
whole shards.

On disk a shard packs five trits per byte (3^5 = 243 <= 256) behind a
fixed little-endian header and a CRC32 trailer; see ``shard_to_bytes``.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .code import (
    CodeParams,
    CodingMatrixSet,
    build_coding_matrices,
    decode_shards_array,
    encode_parts_array,
)
from .repair import compute_downloads, execute_repair, plan_repair

__all__ = [
    "CorruptDataError",
    "ShardFormatError",
    "DataLossError",
    "FileMeta",
    "bytes_to_trits",
    "trits_to_bytes",
    "ingest",
    "extract",
    "SHARD_MAGIC",
    "SHARD_VERSION",
    "shard_to_bytes",
    "shard_from_bytes",
    "write_shard_file",
    "read_shard_file",
    "NodeStore",
    "RepairReport",
    "ScrubReport",
    "ClusterState",
]


class CorruptDataError(ValueError):
    """Recombined trits do not form valid bytes."""


class ShardFormatError(ValueError):
    """Shard bytes violate the on-disk format or fail CRC."""


class DataLossError(RuntimeError):
    """More failures than the code can tolerate."""


# ---------------------------------------------------------------------------
# Byte <-> trit mapping
# ---------------------------------------------------------------------------

_POW3_6 = np.array([243, 81, 27, 9, 3, 1], dtype=np.int32)
_POW3_5 = np.array([81, 27, 9, 3, 1], dtype=np.int32)

# byte value -> its 6 base-3 digits, most significant first
_BYTE_TO_TRITS = np.array(
    [[(b // int(p)) % 3 for p in _POW3_6] for b in range(256)], dtype=np.uint8
)
# packed byte value -> its 5 base-3 digits (values >= 243 are invalid)
_PACKED_TO_TRITS = np.array(
    [[(b // int(p)) % 3 for p in _POW3_5] for b in range(243)], dtype=np.uint8
)


def bytes_to_trits(data: bytes) -> np.ndarray:
    """Expand each byte to 6 trits, most significant digit first."""
    if not data:
        return np.zeros(0, dtype=np.uint8)
    return _BYTE_TO_TRITS[np.frombuffer(data, dtype=np.uint8)].reshape(-1)


def trits_to_bytes(trits: np.ndarray, byte_count: int) -> bytes:
    """Recombine groups of 6 trits into bytes; groups >= 256 are corrupt."""
    need = 6 * byte_count
    if trits.shape[0] < need:
        raise CorruptDataError(f"need {need} trits for {byte_count} bytes, got {trits.shape[0]}")
    vals = trits[:need].reshape(-1, 6).astype(np.int32) @ _POW3_6
    if vals.size and int(vals.max()) > 255:
        bad = int(np.argmax(vals > 255))
        raise CorruptDataError(f"trit group {bad} recombines to {int(vals[bad])} >= 256")
    return vals.astype(np.uint8).tobytes()


def _pack_trits(trits: np.ndarray) -> bytes:
    """Pack 5 trits per byte, earliest trit in the highest place value."""
    pad = (-trits.shape[0]) % 5
    if pad:
        trits = np.concatenate([trits, np.zeros(pad, dtype=np.uint8)])
    vals = trits.reshape(-1, 5).astype(np.int32) @ _POW3_5
    return vals.astype(np.uint8).tobytes()


def _unpack_trits(blob: bytes, trit_count: int) -> np.ndarray:
    arr = np.frombuffer(blob, dtype=np.uint8)
    if arr.size and int(arr.max()) >= 243:
        raise ShardFormatError("payload byte >= 243 cannot encode 5 trits")
    trits = _PACKED_TO_TRITS[arr].reshape(-1)
    if trits.shape[0] < trit_count:
        raise ShardFormatError(f"payload holds {trits.shape[0]} trits, header claims {trit_count}")
    return trits[:trit_count].copy()


# ---------------------------------------------------------------------------
# Ingest / extract
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FileMeta:
    """Original byte length plus the stripe geometry it padded out to."""

    original_len: int
    stripe_count: int


def ingest(params: CodeParams, data: bytes) -> tuple[np.ndarray, FileMeta]:
    """Split a byte string into parts of shape (k, stripes, N).

    The trit stream is zero-padded to whole stripes; an empty file still
    occupies one all-zero stripe.  Within a stripe, part j takes trits
    [j*N, (j+1)*N).
    """
    k, n = params.k, params.n_rows
    trits = bytes_to_trits(data)
    per_stripe = k * n
    stripes = max(1, -(-trits.shape[0] // per_stripe))
    padded = np.zeros(stripes * per_stripe, dtype=np.uint8)
    padded[: trits.shape[0]] = trits
    parts = padded.reshape(stripes, k, n).transpose(1, 0, 2)
    return np.ascontiguousarray(parts), FileMeta(len(data), stripes)


def extract(params: CodeParams, parts: np.ndarray, meta: FileMeta) -> bytes:
    """Inverse of ingest: reassemble the trit stream and strip the padding."""
    k, n = params.k, params.n_rows
    if parts.shape != (k, meta.stripe_count, n):
        raise ValueError(f"parts shape {parts.shape} != ({k}, {meta.stripe_count}, {n})")
    trits = parts.transpose(1, 0, 2).reshape(-1)
    return trits_to_bytes(trits, meta.original_len)


# ---------------------------------------------------------------------------
# Shard files
# ---------------------------------------------------------------------------

SHARD_MAGIC = b"ZZG3"
SHARD_VERSION = 1
_HEADER_LEN = 4 + 1 + 1 + 1 + 4 + 8


def shard_to_bytes(params: CodeParams, node_id: int, payload: np.ndarray) -> bytes:
    """Serialize one node's payload (stripes, N) to the shard wire format."""
    if not 0 <= node_id < params.n_nodes:
        raise ValueError(f"node id {node_id} out of range")
    stripes, n = payload.shape
    if n != params.n_rows:
        raise ValueError(f"payload row length {n} != {params.n_rows}")
    trits = payload.astype(np.uint8).reshape(-1) % 3
    packed = _pack_trits(trits)
    head = (
        SHARD_MAGIC
        + bytes([SHARD_VERSION, params.k, node_id])
        + stripes.to_bytes(4, "little")
        + trits.shape[0].to_bytes(8, "little")
    )
    crc = zlib.crc32(packed) & 0xFFFFFFFF
    return head + packed + crc.to_bytes(4, "little")


def shard_from_bytes(blob: bytes) -> tuple[CodeParams, int, np.ndarray]:
    """Parse and validate a shard; returns (params, node_id, payload)."""
    if len(blob) < _HEADER_LEN + 4:
        raise ShardFormatError("shard too short for header and CRC")
    if blob[:4] != SHARD_MAGIC:
        raise ShardFormatError(f"bad magic {blob[:4]!r}")
    if blob[4] != SHARD_VERSION:
        raise ShardFormatError(f"unsupported version {blob[4]}")
    k = blob[5]
    node_id = blob[6]
    stripes = int.from_bytes(blob[7:11], "little")
    trit_count = int.from_bytes(blob[11:19], "little")
    try:
        params = CodeParams(k)
    except ValueError as exc:
        raise ShardFormatError(str(exc)) from exc
    if node_id >= params.n_nodes:
        raise ShardFormatError(f"node id {node_id} out of range for k={k}")
    if trit_count != stripes * params.n_rows:
        raise ShardFormatError(
            f"trit count {trit_count} != stripes*N = {stripes * params.n_rows}"
        )
    payload_len = (trit_count + 4) // 5
    expected_len = _HEADER_LEN + payload_len + 4
    if len(blob) != expected_len:
        raise ShardFormatError(f"shard length {len(blob)} != expected {expected_len}")
    packed = blob[_HEADER_LEN : _HEADER_LEN + payload_len]
    crc_stored = int.from_bytes(blob[-4:], "little")
    if zlib.crc32(packed) & 0xFFFFFFFF != crc_stored:
        raise ShardFormatError("payload CRC mismatch")
    trits = _unpack_trits(packed, trit_count)
    return params, node_id, trits.reshape(stripes, params.n_rows)


def write_shard_file(path, params: CodeParams, node_id: int, payload: np.ndarray) -> int:
    """Write a shard file; returns the payload CRC32."""
    blob = shard_to_bytes(params, node_id, payload)
    with open(path, "wb") as fh:
        fh.write(blob)
    return int.from_bytes(blob[-4:], "little")


def read_shard_file(path) -> tuple[CodeParams, int, np.ndarray]:
    with open(path, "rb") as fh:
        return shard_from_bytes(fh.read())


# ---------------------------------------------------------------------------
# Cluster
# ---------------------------------------------------------------------------

HEALTHY = "healthy"
FAILED = "failed"


@dataclass
class NodeStore:
    """One storage node: its symbols plus monotone read/sent meters."""

    node_id: int
    payload: Optional[np.ndarray]  # (stripes, N) or None while failed
    status: str = HEALTHY
    read_count: int = 0
    sent_count: int = 0

    def serve(self, reads: int, sent: int) -> np.ndarray:
        """Hand out the payload for a repair, charging the meters."""
        if self.status != HEALTHY or self.payload is None:
            raise DataLossError(f"node {self.node_id} cannot serve reads while failed")
        self.read_count += reads
        self.sent_count += sent
        return self.payload


@dataclass(frozen=True)
class RepairReport:
    node_id: int
    method: str  # "parity-plan" | "full-download" | "noop"
    optimal: bool
    reads_per_node: dict[int, int]
    total_reads: int
    total_sent: int
    expected_reads: Optional[int]  # only for parity-plan repairs
    stripes: int
    warning: Optional[str] = None

    @property
    def matches_expectation(self) -> Optional[bool]:
        if self.expected_reads is None:
            return None
        return self.total_reads == self.expected_reads


@dataclass(frozen=True)
class ScrubReport:
    mismatches: tuple[tuple[int, int, int], ...]  # (node, stripe, row)

    @property
    def ok(self) -> bool:
        return not self.mismatches


@dataclass
class ClusterState:
    """A k+2 node cluster holding one striped file.

    Single-writer: every mutation goes through fail_node/repair_node on one
    thread; NodeStore payloads are only read elsewhere.
    """

    params: CodeParams
    nodes: list[NodeStore]
    meta: FileMeta
    cm: CodingMatrixSet = field(repr=False, default=None)

    def __post_init__(self):
        if self.cm is None:
            self.cm = build_coding_matrices(self.params)

    # -- construction --------------------------------------------------------

    @classmethod
    def from_bytes(cls, params: CodeParams, data: bytes) -> "ClusterState":
        cm = build_coding_matrices(params)
        parts, meta = ingest(params, data)
        shards = encode_parts_array(params, cm, parts)
        nodes = [NodeStore(i, shards[i].copy()) for i in range(params.n_nodes)]
        return cls(params, nodes, meta, cm)

    # -- queries --------------------------------------------------------------

    @property
    def failed_nodes(self) -> list[int]:
        return [n.node_id for n in self.nodes if n.status == FAILED]

    @property
    def healthy_nodes(self) -> list[int]:
        return [n.node_id for n in self.nodes if n.status == HEALTHY]

    def payloads(self, ids) -> dict[int, np.ndarray]:
        out = {}
        for i in ids:
            node = self.nodes[i]
            if node.status != HEALTHY or node.payload is None:
                raise DataLossError(f"node {i} is failed")
            out[i] = node.payload
        return out

    def extract_file(self) -> bytes:
        """Reassemble the original bytes from any k healthy nodes."""
        healthy = self.healthy_nodes
        if len(healthy) < self.params.k:
            raise DataLossError(f"only {len(healthy)} healthy nodes, need {self.params.k}")
        chosen = healthy[: self.params.k]
        parts = decode_shards_array(self.params, self.cm, self.payloads(chosen))
        return extract(self.params, parts, self.meta)

    # -- failure and repair ----------------------------------------------------

    def fail_node(self, node_id: int) -> None:
        node = self.nodes[node_id]
        if node.status == FAILED:
            return
        if len(self.failed_nodes) >= 2:
            raise DataLossError("a third failure exceeds the two-erasure tolerance")
        node.status = FAILED
        node.payload = None

    def repair_node(self, node_id: int) -> RepairReport:
        node = self.nodes[node_id]
        stripes = self.meta.stripe_count
        if node.status == HEALTHY:
            return RepairReport(
                node_id, "noop", False, {}, 0, 0, None, stripes,
                warning=f"node {node_id} is healthy; nothing to repair",
            )
        k = self.params.k
        is_parity = node_id in (k, k + 1)
        others_healthy = all(
            self.nodes[i].status == HEALTHY for i in range(self.params.n_nodes) if i != node_id
        )
        if is_parity and others_healthy:
            return self._repair_parity_optimal(node_id)
        return self._repair_full_download(node_id)

    def _repair_parity_optimal(self, node_id: int) -> RepairReport:
        stripes = self.meta.stripe_count
        plan = plan_repair(self.params, self.cm, node_id)
        payloads = {}
        reads_per_node = {}
        sent_each = stripes * (self.params.n_rows // 2)
        for helper in plan.helper_nodes:
            reads = stripes * plan.io_per_node[helper]
            payloads[helper] = self.nodes[helper].serve(reads, sent_each)
            reads_per_node[helper] = reads
        downloads = compute_downloads(plan, payloads)
        restored = execute_repair(plan, downloads)
        node = self.nodes[node_id]
        node.payload = restored
        node.status = HEALTHY
        from .repair import expected_repair_io

        return RepairReport(
            node_id=node_id,
            method="parity-plan",
            optimal=True,
            reads_per_node=reads_per_node,
            total_reads=sum(reads_per_node.values()),
            total_sent=sent_each * len(plan.helper_nodes),
            expected_reads=stripes * expected_repair_io(self.params),
            stripes=stripes,
        )

    def _repair_full_download(self, node_id: int) -> RepairReport:
        """Fallback: pull k whole shards, decode, re-encode the lost shard.

        Used for systematic nodes (whose half-download rebuild is out of
        scope here) and for a parity whose peer is also down.
        """
        k = self.params.k
        stripes = self.meta.stripe_count
        healthy = self.healthy_nodes
        if len(healthy) < k:
            raise DataLossError(f"only {len(healthy)} healthy nodes, need {k}")
        chosen = healthy[:k]
        per_node = stripes * self.params.n_rows
        payloads = {}
        reads_per_node = {}
        for helper in chosen:
            payloads[helper] = self.nodes[helper].serve(per_node, per_node)
            reads_per_node[helper] = per_node
        parts = decode_shards_array(self.params, self.cm, payloads)
        shards = encode_parts_array(self.params, self.cm, parts)
        node = self.nodes[node_id]
        node.payload = np.ascontiguousarray(shards[node_id])
        node.status = HEALTHY
        return RepairReport(
            node_id=node_id,
            method="full-download",
            optimal=False,
            reads_per_node=reads_per_node,
            total_reads=sum(reads_per_node.values()),
            total_sent=per_node * len(chosen),
            expected_reads=None,
            stripes=stripes,
        )

    # -- integrity --------------------------------------------------------------

    def scrub(self) -> ScrubReport:
        """Recompute both parities from the systematic shards and diff."""
        k = self.params.k
        for j in range(k):
            if self.nodes[j].status != HEALTHY:
                raise DataLossError(f"systematic node {j} is failed; cannot scrub")
        parts = np.stack([self.nodes[j].payload for j in range(k)])
        shards = encode_parts_array(self.params, self.cm, parts)
        mismatches = []
        for parity in (k, k + 1):
            node = self.nodes[parity]
            if node.status != HEALTHY:
                continue
            diff = node.payload != shards[parity]
            for stripe, row in zip(*np.nonzero(diff)):
                mismatches.append((parity, int(stripe), int(row)))
        return ScrubReport(tuple(mismatches))
