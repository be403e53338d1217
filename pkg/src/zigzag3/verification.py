"""Full condition sweep: every structural claim the code rests on, per k.

Run over a range of k, this checks the MDS ranks, the equivalence of the
two coding-matrix constructions, the encoder's two parity formulas on
random data, both variants' repair rank conditions, the swap duality, the
zero-column census/propagation behind the I/O counts, and the I/O meter
formulas themselves.  A fault hook lets tests corrupt the coding matrices
and watch the sweep object.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .code import (
    CodeParams,
    CodingMatrixSet,
    build_coding_matrices,
    coding_matrix_from_zigzag,
    second_parity_by_matrices,
    second_parity_by_rows,
    verify_mds,
)
from .repair import (
    FIRST_PARITY,
    SECOND_PARITY,
    build_repair_pair,
    io_lower_bound,
    expected_repair_io,
    plan_repair,
    repair_bandwidth,
    verify_duality,
    verify_repair_conditions,
    verify_zero_column_structure,
)

__all__ = ["SweepCheck", "SweepReport", "run_sweep", "flip_one_sign"]


@dataclass(frozen=True)
class SweepCheck:
    k: int
    name: str
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"k": self.k, "name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass(frozen=True)
class SweepReport:
    k_values: tuple[int, ...]
    trials: int
    seed: int
    checks: tuple[SweepCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> tuple[SweepCheck, ...]:
        return tuple(c for c in self.checks if not c.passed)

    def to_dict(self) -> dict:
        return {
            "k_range": [min(self.k_values), max(self.k_values)],
            "trials": self.trials,
            "seed": self.seed,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }


def flip_one_sign(cm: CodingMatrixSet) -> CodingMatrixSet:
    """Fault hook: negate one entry of the second coding matrix."""
    from .gf3 import SignedPermutation

    mats = list(cm.matrices)
    bad = mats[1]
    sign = bad.sign.copy()
    sign[0] = -sign[0]
    mats[1] = SignedPermutation(bad.target, sign)
    return CodingMatrixSet(cm.params, tuple(mats))


def _check_equivalence(params: CodeParams, cm: CodingMatrixSet) -> tuple[bool, str]:
    for j in range(params.k):
        if cm.dense(j) != coding_matrix_from_zigzag(params, j):
            return False, f"matrix {j} differs from the row/coefficient construction"
    return True, f"all {params.k} matrices agree entrywise"

def _check_encoder_forms(
    params: CodeParams, cm: CodingMatrixSet, trials: int, rng: np.random.Generator
) -> tuple[bool, str]:
    parts = rng.integers(0, 3, size=(params.k, trials, params.n_rows), dtype=np.uint8)
    by_rows = second_parity_by_rows(params, parts)
    by_mats = second_parity_by_matrices(cm, parts)
    if not np.array_equal(by_rows, by_mats):
        return False, "row-rule and matrix parities diverge on random data"
    return True, f"{trials} random stripes agree"


def _check_meters(params: CodeParams, cm: CodingMatrixSet) -> tuple[bool, str]:
    expected = expected_repair_io(params)
    bound = io_lower_bound(params.k)
    details = []
    ok = True
    for failed in (params.k, params.k + 1):
        plan = plan_repair(params, cm, failed)
        if plan.total_io != expected:
            ok = False
            details.append(f"node {failed}: total_io {plan.total_io} != {expected}")
        if plan.bandwidth != repair_bandwidth(params):
            ok = False
            details.append(f"node {failed}: bandwidth {plan.bandwidth}")
        if plan.total_io < bound.lower_bound_ceil:
            ok = False
            details.append(f"node {failed}: below floor {bound.lower_bound_ceil}")
    return ok, "; ".join(details) or f"both parities read {expected}, floor {bound.lower_bound_ceil}"


def _check_alt_seed_census(params: CodeParams) -> tuple[bool, str]:
    """Reusing the row-sum-parity matrices for the zigzag parity must cost
    kN + N - 1 reads, one more than the dedicated seeds; census only."""
    pair = build_repair_pair(params.k, FIRST_PARITY)
    n = params.n_rows
    io = params.k * pair.s_tilde.nonzero_column_count() + pair.s.nonzero_column_count()
    expected = params.k * n + n - 1
    if io != expected:
        return False, f"alternative census {io} != {expected}"
    return True, f"costs {io} = kN+N-1 as predicted"


def run_sweep(
    k_values,
    trials: int = 20,
    seed: int = 0,
    fault_hook: Optional[Callable[[CodingMatrixSet], CodingMatrixSet]] = None,
) -> SweepReport:
    k_values = tuple(k_values)
    rng = np.random.default_rng(seed)
    checks: list[SweepCheck] = []

    def record(k: int, name: str, fn) -> None:
        # A corrupted matrix set may violate a precondition deep inside a
        # check; that is a failure to report, not a crash.
        try:
            ok, detail = fn()
        except Exception as exc:  # noqa: BLE001
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        checks.append(SweepCheck(k, name, ok, detail))

    for k in k_values:
        params = CodeParams(k)
        cm = build_coding_matrices(params)
        if fault_hook is not None:
            cm = fault_hook(cm)

        def check_mds():
            mds = verify_mds(cm)
            return mds.ok, "; ".join(mds.violations)

        record(k, "mds-ranks", check_mds)
        record(k, "coding-matrix-equivalence", lambda: _check_equivalence(params, cm))
        record(k, "encoder-forms", lambda: _check_encoder_forms(params, cm, trials, rng))

        for variant, tag in ((FIRST_PARITY, "first"), (SECOND_PARITY, "second")):
            pair = build_repair_pair(k, variant)

            def check_conditions(pair=pair):
                cond = verify_repair_conditions(pair, cm)
                return cond.ok, "; ".join(
                    f"{c.name}: {c.actual} != {c.expected}" for c in cond.violations
                )

            def check_duality(pair=pair):
                dual = verify_duality(pair, cm)
                return dual.ok, "" if dual.ok else "swapped-pair conditions or rank equalities failed"

            def check_zero_columns(pair=pair):
                zc = verify_zero_column_structure(pair, params)
                census_ok = zc.zero_cols_s == (0,) and zc.zero_cols_s_tilde == ()
                detail = (
                    f"zero cols s={zc.zero_cols_s} s_tilde={zc.zero_cols_s_tilde}; "
                    f"floor {zc.per_matrix_floor}"
                )
                if zc.propagation_violations:
                    detail += "; " + "; ".join(zc.propagation_violations)
                return zc.ok and census_ok, detail

            record(k, f"repair-conditions-{tag}", check_conditions)
            record(k, f"duality-{tag}", check_duality)
            record(k, f"zero-columns-{tag}", check_zero_columns)

        record(k, "io-meters", lambda: _check_meters(params, cm))
        record(k, "alt-seed-census", lambda: _check_alt_seed_census(params))
    return SweepReport(k_values, trials, seed, tuple(checks))
