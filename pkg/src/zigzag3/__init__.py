"""(k+2,k) zigzag MSR erasure code over GF(3).

Systematic MDS array code storing 2^(k-1) symbols per node, tolerating any
two node failures, with half-download repair of both parity nodes and
exact disk-I/O accounting.
"""

from .code import (
    CodeParams,
    Codeword,
    CodingMatrixSet,
    FileParts,
    build_coding_matrices,
    decode_from_any_k,
    encode,
    verify_mds,
)
from .gf3 import Gf3Matrix, SignedPermutation
from .repair import (
    FIRST_PARITY,
    SECOND_PARITY,
    brute_force_min_io,
    build_repair_pair,
    execute_repair,
    io_lower_bound,
    plan_repair,
    verify_duality,
    verify_repair_conditions,
)
from .cluster import ClusterState, ingest, extract

__version__ = "0.1.0"

__all__ = [
    "CodeParams",
    "CodingMatrixSet",
    "FileParts",
    "Codeword",
    "Gf3Matrix",
    "SignedPermutation",
    "build_coding_matrices",
    "encode",
    "decode_from_any_k",
    "verify_mds",
    "FIRST_PARITY",
    "SECOND_PARITY",
    "build_repair_pair",
    "verify_repair_conditions",
    "verify_duality",
    "plan_repair",
    "execute_repair",
    "io_lower_bound",
    "brute_force_min_io",
    "ClusterState",
    "ingest",
    "extract",
    "__version__",
]
