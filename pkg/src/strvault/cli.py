"""Command-line interface.

Exit codes: 0 success / match, 1 no match, 2 bad input, 3 I/O failure,
4 corrupt vault.
"""

from __future__ import annotations

import argparse
import csv
import os
import random
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .errors import (
    CorruptVault,
    DuplicateRecordId,
    Exhausted,
    FrequencyTableError,
    IoFailure,
    OversizeBlob,
    OversizeMetadata,
    ProfileError,
    RefusedOverwrite,
    StrVaultError,
)
from .keygen import derive_search_key, shared_bits
from .population import (
    ATTACK_ROSTER,
    RELATIONS,
    RelationStats,
    kinship_attack,
    load_frequency_table,
    locus_entropy,
    key_code_entropy,
    sample_pair,
    sample_pairs,
    sample_population,
    security_report,
    shared_bits_array,
    total_entropy,
)
from .profile import CORE_LOCI, format_profile, read_profile
from .record import PlainRecord, seal
from .search import (
    SCALE_FACTOR,
    benchmark,
    build_synthetic_vault,
    extrapolate,
    format_bench,
    physical_cores,
    search,
)
from .vault import Vault

EXIT_OK = 0
EXIT_NO_MATCH = 1
EXIT_INPUT = 2
EXIT_IO = 3
EXIT_CORRUPT = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _int_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("worker counts must be >= 1")
    return values


def _rng_seed(args) -> int:
    return args.seed if args.seed is not None else int.from_bytes(os.urandom(8), "little")


def _emit_kv(pairs: dict) -> None:
    for k, v in pairs.items():
        print(f"{k}={v}")


# -- build -------------------------------------------------------------------


def _read_text(path) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _collect_inputs(args) -> list[tuple[str, PlainRecord]]:
    triples = []
    if args.manifest:
        with open(args.manifest, encoding="utf-8", newline="") as fh:
            base = Path(args.manifest).parent
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].startswith("#"):
                    continue
                if len(row) not in (3, 4):
                    raise CliError(
                        f"{args.manifest}:{lineno}: expected profile,metadata,blob[,record_id]",
                        EXIT_INPUT,
                    )
                paths = [base / p.strip() for p in row[:3]]
                rid = row[3].strip() if len(row) == 4 else None
                triples.append((*paths, rid))
    profiles = args.profile or []
    metas = args.metadata or []
    blobs = args.blob or []
    if not (len(profiles) == len(metas) == len(blobs)):
        raise CliError("--profile, --metadata and --blob must be given the same number of times",
                       EXIT_INPUT)
    ids = args.id or []
    if ids and len(ids) != len(profiles):
        raise CliError("--id must be given once per --profile", EXIT_INPUT)
    for i, (p, m, b) in enumerate(zip(profiles, metas, blobs)):
        triples.append((Path(p), Path(m), Path(b), ids[i] if ids else None))
    if not triples:
        raise CliError("nothing to build: give --manifest or --profile/--metadata/--blob", EXIT_INPUT)

    out = []
    for profile_path, meta_path, blob_path, rid in triples:
        profile = read_profile(profile_path)
        try:
            record = PlainRecord(profile, _read_text(meta_path), _read_bytes(blob_path))
        except UnicodeDecodeError as exc:
            raise CliError(f"{meta_path}: metadata is not UTF-8 ({exc})", EXIT_INPUT)
        out.append((rid or profile_path.stem, record))
    return out


def cmd_build(args) -> int:
    # parse everything before touching the vault
    records = _collect_inputs(args)
    seen = set()
    for rid, _ in records:
        if rid in seen:
            raise CliError(f"duplicate record id {rid!r}", EXIT_INPUT)
        seen.add(rid)
    rng = random.Random(args.seed) if args.seed is not None else None
    if args.append:
        vault = Vault.open(args.vault, writable=True)
    else:
        vault = Vault.create(args.vault, force=args.force)
    with vault:
        for rid, record in records:
            vault.append(seal(record, rid, rng=rng))
        count = len(vault)
    if args.format == "kv":
        _emit_kv({"appended": len(records), "record_count": count, "vault": args.vault})
    else:
        print(f"sealed {len(records)} record(s); vault {args.vault} holds {count}")
    return EXIT_OK


# -- query -------------------------------------------------------------------


def cmd_query(args) -> int:
    query = read_profile(args.profile)
    with Vault.open(args.vault) as vault:
        report = search(vault, query, args.workers)
    if not report.matches:
        print("NO MATCH")
        if args.format == "kv":
            sys.stdout.write(report.to_kv())
        return EXIT_NO_MATCH
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for n, m in enumerate(report.matches):
        if args.blob and len(report.matches) == 1:
            blob_path = Path(args.blob)
        elif args.blob:
            blob_path = Path(f"{args.blob}.{n}")
        else:
            safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in m.record_id)
            blob_path = out_dir / f"{safe}.blob"
        with open(blob_path, "wb") as fh:
            fh.write(m.plain.blob)
        if args.format == "kv":
            _emit_kv({
                f"match.{n}.record_id": m.record_id,
                f"match.{n}.record_index": m.record_index,
                f"match.{n}.blob_path": blob_path,
                f"match.{n}.blob_bytes": len(m.plain.blob),
            })
        else:
            print(f"MATCH record {m.record_index} id={m.record_id} blob={blob_path} "
                  f"({len(m.plain.blob)} bytes)")
        sys.stdout.write(m.plain.metadata)
        if m.plain.metadata and not m.plain.metadata.endswith("\n"):
            sys.stdout.write("\n")
    if args.format == "kv":
        sys.stdout.write(report.to_kv())
    return EXIT_OK


# -- bench -------------------------------------------------------------------


def cmd_bench(args) -> int:
    workers = args.workers_list or sorted({1, physical_cores()})
    seed = _rng_seed(args)
    if args.vault:
        path = Path(args.vault)
        if path.exists() and not args.force:
            raise CliError(f"{path} exists; pass --force to overwrite", EXIT_IO)
        vault = build_synthetic_vault(path, args.records, args.record_size, seed)
        cleanup = None
    else:
        cleanup = tempfile.TemporaryDirectory()
        vault = build_synthetic_vault(Path(cleanup.name) / "bench.vault", args.records,
                                      args.record_size, seed)
    try:
        with vault:
            rows = benchmark(vault, workers, repeats=args.repeats, seed=seed)
    finally:
        if cleanup is not None:
            cleanup.cleanup()
    measured = rows[0].records_per_sec
    # measured single-worker rate, and the same scaled by the 100x multi-node factor
    extra = extrapolate() + extrapolate((measured, measured * SCALE_FACTOR), "measured")
    sys.stdout.write(format_bench(rows, extra, args.format))
    return EXIT_OK


# -- analysis ----------------------------------------------------------------


def cmd_entropy(args) -> int:
    table = load_frequency_table(args.freq_table)
    total = total_entropy(table)
    codes = key_code_entropy(table)
    if args.format == "kv":
        pairs = {f"locus.{l}.entropy_bits": f"{locus_entropy(table, l):.6f}" for l in CORE_LOCI}
        pairs["total_entropy_bits"] = f"{total:.6f}"
        pairs["key_code_entropy_bits"] = f"{codes:.6f}"
        pairs["meets_80_bits"] = str(total >= 80.0).lower()
        _emit_kv(pairs)
    else:
        for l in CORE_LOCI:
            print(f"{l:<10} {locus_entropy(table, l):8.4f} bits")
        print(f"{'total':<10} {total:8.4f} bits ({'>=' if total >= 80 else '<'} 80)")
        print(f"{'key codes':<10} {codes:8.4f} bits carried by the 80-bit key encoding")
    return EXIT_OK


def cmd_simulate(args) -> int:
    table = load_frequency_table(args.freq_table)
    seed = _rng_seed(args)
    if args.relation == "all":
        report = security_report(table, args.n, seed)
        sys.stdout.write(report.to_kv() if args.format == "kv" else report.to_text())
        return EXIT_OK
    rng = np.random.default_rng(seed)
    a, b = sample_pairs(table, args.relation, args.n, rng)
    stats = RelationStats.from_samples(args.relation, shared_bits_array(a, b))
    lo, hi = stats.ci99
    if args.format == "kv":
        _emit_kv({
            "relation": stats.relation, "n": stats.n, "seed": seed,
            "shared_bits_mean": f"{stats.mean:.4f}", "shared_bits_sd": f"{stats.sd:.4f}",
            "shared_bits_ci99": f"{lo:.4f},{hi:.4f}",
            "shared_bits_min": stats.minimum, "shared_bits_max": stats.maximum,
            "effective_bits_mean": f"{stats.effective_bits:.4f}",
            "histogram": ",".join(f"{k}:{v}" for k, v in stats.histogram.items()),
        })
    else:
        print(f"{stats.relation}: n={stats.n} seed={seed}")
        print(f"shared bits mean {stats.mean:.2f} (99% CI {lo:.2f}-{hi:.2f}), "
              f"min {stats.minimum}, max {stats.maximum}")
        print(f"effective bits mean {stats.effective_bits:.2f}")
        for k, v in stats.histogram.items():
            print(f"  {k:>3} {v}")
    return EXIT_OK


def cmd_attack(args) -> int:
    table = load_frequency_table(args.freq_table)
    seed = _rng_seed(args)
    rng = np.random.default_rng(seed)
    target, relative = sample_pair(table, args.relation, rng).profiles
    roster = ATTACK_ROSTER
    if args.known == "none":
        known = []
    elif args.known == "shared":
        known = [l for l in roster if target[l] == relative[l]]
    else:
        known = [x.strip() for x in args.known.split(",") if x.strip()]
    enc = seal(PlainRecord(target, "attack target", b""), "target", loci=roster,
               rng=random.Random(seed))
    unknown_bits = 4 * (len(roster) - len(known))
    try:
        result = kinship_attack(enc, relative, known, roster)
    except Exhausted as exc:
        recovered, trials = None, exc.trials
    else:
        recovered, trials = result, result.trials
    true_key = derive_search_key(target, roster)
    rel_key = derive_search_key(relative, roster)
    info = {
        "seed": seed,
        "relation": args.relation,
        "roster": ",".join(roster),
        "known_loci": ",".join(known),
        "key_bits": true_key.nbits,
        "relative_shared_bits": shared_bits(true_key, rel_key),
        "unknown_bits": unknown_bits,
        "max_trials": 2 ** unknown_bits,
        "trials": trials,
        "recovered": "yes" if recovered else "no",
    }
    if recovered:
        info["recovered_key"] = recovered.search_key.bits
        info["key_correct"] = str(recovered.search_key == true_key).lower()
    if args.format == "kv":
        _emit_kv(info)
    else:
        for k, v in info.items():
            print(f"{k:>22}: {v}")
    return EXIT_OK if recovered else EXIT_NO_MATCH


def cmd_sample(args) -> int:
    table = load_frequency_table(args.freq_table)
    rng = np.random.default_rng(_rng_seed(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, p in enumerate(sample_population(table, args.n, rng)):
        (out / f"person{i:04d}.str").write_text(format_profile(p), encoding="utf-8")
    print(f"wrote {args.n} profile(s) to {out}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strvault",
        description="STR-keyed encrypted identity vault searched by trial decryption.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "kv"), default="text")
    common.add_argument("--seed", type=int, default=None,
                        help="seed for reproducible output (default: OS entropy)")

    p = sub.add_parser("build", parents=[common], help="seal records into a vault")
    p.add_argument("--vault", required=True)
    p.add_argument("--profile", action="append", help="profile file (repeatable)")
    p.add_argument("--metadata", action="append", help="UTF-8 metadata file (repeatable)")
    p.add_argument("--blob", action="append", help="biometric blob file (repeatable)")
    p.add_argument("--id", action="append", help="record id per --profile (default: file stem)")
    p.add_argument("--manifest", help="CSV of profile,metadata,blob[,record_id] paths")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--force", action="store_true", help="overwrite an existing vault")
    g.add_argument("--append", action="store_true", help="append to an existing vault")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", parents=[common], help="search a vault for a profile")
    p.add_argument("--vault", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--blob", help="where to write the decrypted blob")
    p.add_argument("--out-dir", default=".", help="directory for blobs when --blob is not given")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", parents=[common], help="throughput benchmark on a synthetic vault")
    p.add_argument("--records", type=_positive_int, default=64)
    p.add_argument("--record-size", type=_positive_int, default=1 << 20, help="blob bytes per record")
    p.add_argument("--workers", dest="workers_list", type=_int_list, default=None,
                   help="comma-separated worker counts (default: 1 and physical cores)")
    p.add_argument("--repeats", type=_positive_int, default=3)
    p.add_argument("--vault", help="keep the synthetic vault at this path")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("entropy", parents=[common], help="genotype entropy of a frequency table")
    p.add_argument("--freq-table", help="locus,allele,frequency CSV (default: bundled)")
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("simulate", parents=[common], help="shared key bits between relatives")
    p.add_argument("--freq-table")
    p.add_argument("--relation", choices=RELATIONS + ("all",), default="all")
    p.add_argument("--n", type=_positive_int, default=10_000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("attack", parents=[common], help="reduced-roster brute-force demonstration")
    p.add_argument("--freq-table")
    p.add_argument("--relation", choices=RELATIONS, default="sibling")
    p.add_argument("--known", default="shared",
                   help="'none', 'shared' (loci the relative shares), or comma-separated loci")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sample", parents=[common], help="write random profiles for demos")
    p.add_argument("--freq-table")
    p.add_argument("--n", type=_positive_int, default=3)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except CorruptVault as exc:
        print(f"error: corrupt vault: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (ProfileError, FrequencyTableError, OversizeBlob, OversizeMetadata,
            DuplicateRecordId, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (IoFailure, RefusedOverwrite, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except StrVaultError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
