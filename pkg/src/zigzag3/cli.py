"""Command-line surface: encode, decode, repair, verify, bound, bruteforce.

Exit codes are a scriptable contract:
  0  success
  2  verification failure
  3  insufficient data
  4  format or CRC error
  5  invalid parameters

Reports print as human text by default; ``--format json`` switches the
whole output to a single stable-ordered JSON document.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .code import (
    CodeParams,
    InconsistentShardsError,
    InsufficientShardsError,
    build_coding_matrices,
    decode_shards_array,
    encode_parts_array,
)
from .cluster import (
    CorruptDataError,
    DataLossError,
    FileMeta,
    ShardFormatError,
    extract,
    ingest,
    shard_from_bytes,
    write_shard_file,
)
from .repair import (
    brute_force_min_io,
    compute_downloads,
    execute_repair,
    expected_repair_io,
    io_lower_bound,
    plan_repair,
    repair_bandwidth,
)
from .verification import flip_one_sign, run_sweep

EXIT_OK = 0
EXIT_VERIFY = 2
EXIT_INSUFFICIENT = 3
EXIT_FORMAT = 4
EXIT_PARAMS = 5

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class Config:
    """Run-wide knobs shared by every command."""

    report_format: str = "text"
    seed: int = 0
    verbose: bool = False


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; remap to the params code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARAMS, f"{self.prog}: error: {message}\n")


def _emit(cfg: Config, payload: dict, text_lines: list[str]) -> None:
    if cfg.report_format == "json":
        print(json.dumps(payload, indent=2))
    else:
        for line in text_lines:
            print(line)


def _shard_name(node_id: int) -> str:
    return f"node_{node_id}.shard"


# ---------------------------------------------------------------------------
# encode
# ---------------------------------------------------------------------------


def cmd_encode(cfg: Config, args) -> int:
    try:
        params = CodeParams(args.k)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    data = Path(args.input).read_bytes()
    cm = build_coding_matrices(params)
    parts, meta = ingest(params, data)
    shards = encode_parts_array(params, cm, parts)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    crcs = []
    for node in range(params.n_nodes):
        crc = write_shard_file(out_dir / _shard_name(node), params, node, shards[node])
        crcs.append(crc)
    manifest = {
        "k": params.k,
        "stripes": meta.stripe_count,
        "original_len": meta.original_len,
        "shard_crc": crcs,
    }
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")
    _emit(
        cfg,
        {"command": "encode", **manifest, "out_dir": str(out_dir)},
        [
            f"encoded {meta.original_len} bytes at k={params.k}: "
            f"{meta.stripe_count} stripe(s), {params.n_nodes} shards in {out_dir}",
        ],
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# decode
# ---------------------------------------------------------------------------


def _load_shards(paths) -> tuple[CodeParams, int, dict[int, np.ndarray], dict[int, int]]:
    """Read shard files; returns (params, stripes, payloads, stored CRCs)."""
    payloads: dict[int, np.ndarray] = {}
    crcs: dict[int, int] = {}
    params = None
    stripes = None
    for p in paths:
        blob = Path(p).read_bytes()
        sp, node, payload = shard_from_bytes(blob)
        if params is None:
            params, stripes = sp, payload.shape[0]
        elif sp.k != params.k or payload.shape[0] != stripes:
            raise ShardFormatError(
                f"mixed manifests: {p} has k={sp.k}, stripes={payload.shape[0]}, "
                f"expected k={params.k}, stripes={stripes}"
            )
        if node in payloads:
            raise ShardFormatError(f"duplicate shard for node {node}")
        payloads[node] = payload
        crcs[node] = int.from_bytes(blob[-4:], "little")
    return params, stripes, payloads, crcs


def _load_manifest(args, shard_paths) -> dict:
    if getattr(args, "manifest", None):
        path = Path(args.manifest)
    else:
        path = Path(shard_paths[0]).parent / MANIFEST_NAME
    if not path.exists():
        raise ShardFormatError(f"manifest not found at {path} (pass --manifest)")
    manifest = json.loads(path.read_text())
    for key in ("k", "stripes", "original_len", "shard_crc"):
        if key not in manifest:
            raise ShardFormatError(f"manifest {path} lacks field {key!r}")
    return manifest


def cmd_decode(cfg: Config, args) -> int:
    params, stripes, payloads, crcs = _load_shards(args.shards)
    manifest = _load_manifest(args, args.shards)
    if manifest["k"] != params.k or manifest["stripes"] != stripes:
        raise ShardFormatError(
            f"mixed manifests: shards say k={params.k}/stripes={stripes}, "
            f"manifest says k={manifest['k']}/stripes={manifest['stripes']}"
        )
    for node, crc in crcs.items():
        if crc != manifest["shard_crc"][node]:
            raise ShardFormatError(f"shard for node {node} does not match the manifest CRC")
    if len(payloads) < params.k:
        raise InsufficientShardsError(
            f"got {len(payloads)} shards, need at least {params.k}"
        )
    cm = build_coding_matrices(params)
    parts = decode_shards_array(params, cm, payloads)
    meta = FileMeta(manifest["original_len"], stripes)
    data = extract(params, parts, meta)
    Path(args.out).write_bytes(data)
    _emit(
        cfg,
        {
            "command": "decode",
            "k": params.k,
            "shards_used": sorted(payloads),
            "bytes": len(data),
            "out": str(args.out),
        },
        [f"decoded {len(data)} bytes from shards {sorted(payloads)} -> {args.out}"],
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# repair
# ---------------------------------------------------------------------------


def cmd_repair(cfg: Config, args) -> int:
    params, stripes, payloads, _ = _load_shards(args.shards)
    rebuild = args.rebuild
    if not 0 <= rebuild < params.n_nodes:
        print(f"error: node {rebuild} out of range for k={params.k}", file=sys.stderr)
        return EXIT_PARAMS
    missing = sorted(set(range(params.n_nodes)) - set(payloads))
    if rebuild not in missing:
        print(f"error: node {rebuild} was supplied; nothing to rebuild", file=sys.stderr)
        return EXIT_PARAMS
    if len(payloads) < params.n_nodes - 1:
        raise InsufficientShardsError(
            f"repair needs {params.n_nodes - 1} shards (exactly one missing node), "
            f"got {len(payloads)}; missing {missing}"
        )

    k, n = params.k, params.n_rows
    cm = build_coding_matrices(params)
    is_parity = rebuild in (k, k + 1)
    if is_parity:
        plan = plan_repair(params, cm, rebuild)
        downloads = compute_downloads(plan, {h: payloads[h] for h in plan.helper_nodes})
        restored = execute_repair(plan, downloads)
        reads_per_node = {h: stripes * plan.io_per_node[h] for h in plan.helper_nodes}
        total_reads = sum(reads_per_node.values())
        expected = stripes * expected_repair_io(params)
        method = "parity-plan"
        sent = stripes * repair_bandwidth(params)
    else:
        chosen = sorted(payloads)[:k]
        parts = decode_shards_array(params, cm, {h: payloads[h] for h in chosen})
        restored = encode_parts_array(params, cm, parts)[rebuild]
        reads_per_node = {h: stripes * n for h in chosen}
        total_reads = sum(reads_per_node.values())
        expected = None
        method = "full-download"
        sent = total_reads

    out_dir = Path(args.out_dir) if args.out_dir else Path(args.shards[0]).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / _shard_name(rebuild)
    write_shard_file(out_path, params, rebuild, restored)

    payload = {
        "command": "repair",
        "node": rebuild,
        "method": method,
        "stripes": stripes,
        "reads_per_node": {str(h): c for h, c in sorted(reads_per_node.items())},
        "total_reads": total_reads,
        "total_sent": sent,
        "expected_reads": expected,
        "match": (total_reads == expected) if expected is not None else None,
        "out": str(out_path),
    }
    if is_parity:
        status = "MATCH" if total_reads == expected else "MISMATCH"
        lines = [
            f"rebuilt parity node {rebuild} via half-download plan -> {out_path}",
            f"reads={total_reads} expected={expected} ({expected_repair_io(params)}/stripe), {status}",
            f"per-node reads: {dict(sorted(reads_per_node.items()))}",
            f"transferred={sent} symbols ({repair_bandwidth(params)}/stripe)",
        ]
    else:
        lines = [
            f"rebuilt systematic node {rebuild} -> {out_path}",
            f"fallback: full download, reads={total_reads} (k*N={k * n}/stripe)",
        ]
    _emit(cfg, payload, lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify / bound / bruteforce
# ---------------------------------------------------------------------------


def _parse_k_range(text: str) -> range:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return range(int(lo), int(hi) + 1)
    k = int(text)
    return range(k, k + 1)


def cmd_verify(cfg: Config, args) -> int:
    try:
        ks = _parse_k_range(args.k_range)
        if len(ks) == 0 or ks[0] < 2:
            raise ValueError(f"bad k range {args.k_range!r}: need 2 <= a <= b")
        for k in ks:
            CodeParams(k)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    hook = flip_one_sign if args.inject_fault else None
    report = run_sweep(ks, trials=args.trials, seed=cfg.seed, fault_hook=hook)
    lines = [
        f"k={c.k:2d} {c.name:28s} {'PASS' if c.passed else 'FAIL'}"
        + (f"  {c.detail}" if (not c.passed or cfg.verbose) and c.detail else "")
        for c in report.checks
    ]
    lines.append(
        f"{'all checks passed' if report.passed else f'{len(report.failures)} check(s) FAILED'}"
        f" over k={ks[0]}..{ks[-1]}"
    )
    _emit(cfg, {"command": "verify", **report.to_dict()}, lines)
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_bound(cfg: Config, args) -> int:
    try:
        params = CodeParams(args.k)
        report = io_lower_bound(args.k)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    payload = {
        "command": "bound",
        "k": report.k,
        "N": report.n_rows,
        "achieved_io": report.achieved_io,
        "lower_bound": str(report.lower_bound),
        "lower_bound_ceil": report.lower_bound_ceil,
        "displayed_bound": str(report.displayed_bound),
        "clamped": report.clamped,
        "gap": str(report.gap),
        "per_matrix_floor": str(report.per_matrix_floor),
        "bandwidth": repair_bandwidth(params),
    }
    lines = [
        f"k={report.k}, N={report.n_rows}: repair reads {report.achieved_io} symbols per stripe",
        f"lower bound {report.lower_bound} (ceil {report.lower_bound_ceil}), gap {report.gap}",
        f"per-matrix nonzero-column floor: {report.per_matrix_floor}",
        f"repair bandwidth: {payload['bandwidth']} symbols per stripe",
    ]
    if report.clamped:
        lines.append(
            f"note: negative correction term clamped; displayed bound {report.displayed_bound}"
        )
    _emit(cfg, payload, lines)
    return EXIT_OK


def cmd_bruteforce(cfg: Config, args) -> int:
    try:
        result = brute_force_min_io(args.k)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    payload = {
        "command": "bruteforce",
        "k": result.k,
        "min_io": result.min_io,
        "lower_bound_ceil": result.lower_bound_ceil,
        "construction_io": result.construction_io,
        "valid_pairs": result.valid_pairs,
        "witness_s": result.witness.s.tolist(),
        "witness_s_tilde": result.witness.s_tilde.tolist(),
    }
    lines = [
        f"k={result.k}: exhaustive minimum repair I/O = {result.min_io} "
        f"over {result.valid_pairs} canonical valid pairs",
        f"rational floor (ceil): {result.lower_bound_ceil}; construction: {result.construction_io}",
        f"witness systematic-side matrix: {result.witness.s.tolist()}",
        f"witness parity-side matrix:     {result.witness.s_tilde.tolist()}",
    ]
    _emit(cfg, payload, lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="zigzag3", description=__doc__.splitlines()[0])
    parser.add_argument("--format", choices=("text", "json"), default="text")
    parser.add_argument("--seed", type=int, default=0, help="RNG seed for randomized checks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="split a file into k+2 shard files")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="rebuild the file from any k shards")
    p.add_argument("--shards", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", help="defaults to manifest.json beside the first shard")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("repair", help="rebuild one missing node from k+1 shards")
    p.add_argument("--shards", nargs="+", required=True)
    p.add_argument("--rebuild", type=int, required=True)
    p.add_argument("--out-dir", help="defaults to the first shard's directory")
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("verify", help="run the full condition sweep")
    p.add_argument("--k-range", required=True, help="e.g. 2..8 or a single k")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bound", help="report the repair disk-I/O lower bound")
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("bruteforce", help="exhaustive minimum repair I/O (k <= 3)")
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_bruteforce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = Config(report_format=args.format, seed=args.seed, verbose=args.verbose)
    try:
        return args.func(cfg, args)
    except InsufficientShardsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except DataLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except (ShardFormatError, CorruptDataError, InconsistentShardsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMS


if __name__ == "__main__":
    sys.exit(main())
