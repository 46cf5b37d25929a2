"""Trial-decryption search over a vault, plus the throughput benchmark."""

from __future__ import annotations

import os
import random
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ._backend import kernels
from .errors import CorruptRecord, StrVaultError, WorkerFailure
from .keygen import profile_cipher_key
from .profile import CORE_LOCI, Genotype, StrProfile
from .record import PlainRecord, seal, unframe, verify_match
from .vault import Vault

MB = 1_000_000

# Assumed single-machine scan rates (records/s) and target populations;
# SCALE_FACTOR stretches a measured rate to a hypothetical 100-core cluster.
ASSUMED_RATES = (30_000, 150_000)
US_POPULATION = 328.2e6
CODIS_PROFILES = 15e6
SCALE_FACTOR = 100


@dataclass(frozen=True)
class MatchResult:
    record_id: str
    plain: PlainRecord
    record_index: int


@dataclass
class SearchReport:
    matches: list
    records_scanned: int
    bytes_processed: int
    elapsed: float
    workers: int
    # decrypted cleanly but embedded profile differs from the query
    key_collisions: int = 0

    @property
    def records_per_sec(self) -> float:
        return self.records_scanned / self.elapsed if self.elapsed > 0 else float("inf")

    @property
    def mb_per_sec(self) -> float:
        return self.bytes_processed / MB / self.elapsed if self.elapsed > 0 else float("inf")

    def to_kv(self) -> str:
        lines = [
            f"matches={len(self.matches)}",
            f"match_indices={','.join(str(m.record_index) for m in self.matches)}",
            f"match_ids={','.join(m.record_id for m in self.matches)}",
            f"records_scanned={self.records_scanned}",
            f"bytes_processed={self.bytes_processed}",
            f"elapsed_s={self.elapsed:.6f}",
            f"workers={self.workers}",
            f"records_per_s={self.records_per_sec:.1f}",
            f"mb_per_s={self.mb_per_sec:.2f}",
            f"key_collisions={self.key_collisions}",
            f"backend={kernels.NAME}",
        ]
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        out = [f"{'index':>8}  record_id"]
        for m in self.matches:
            out.append(f"{m.record_index:>8}  {m.record_id}")
        if not self.matches:
            out.append("    (no match)")
        out.append(
            f"scanned {self.records_scanned} records ({self.bytes_processed / MB:.2f} MB) "
            f"in {self.elapsed:.3f} s with {self.workers} worker(s): "
            f"{self.records_per_sec:.0f} records/s, {self.mb_per_sec:.1f} MB/s"
        )
        return "\n".join(out) + "\n"


def partition(n: int, workers: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into ``workers`` contiguous, near-equal ranges."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    base, extra = divmod(n, workers)
    out, start = [], 0
    for w in range(workers):
        stop = start + base + (1 if w < extra else 0)
        out.append((start, stop))
        start = stop
    return out


@dataclass
class _Partial:
    matches: list = field(default_factory=list)
    scanned: int = 0
    nbytes: int = 0
    collisions: int = 0


def _scan_range(vault: Vault, keys: Sequence[bytes], queries: Sequence[StrProfile],
                start: int, stop: int) -> list[_Partial]:
    parts = [_Partial() for _ in keys]
    for chunk in vault.chunks(start, stop):
        for key, query, part in zip(keys, queries, parts):
            for i, body in kernels.scan_block(key, chunk.ivs, chunk.cts, chunk.offsets):
                rec = unframe(body)
                if rec is None:
                    continue
                if not verify_match(rec, query):
                    part.collisions += 1
                    continue
                part.matches.append(MatchResult(chunk.ids[i], rec, chunk.first + i))
            part.scanned += len(chunk.ids)
            part.nbytes += len(chunk.cts)
    return parts


def _scan_range_by_path(path, keys, queries, start, stop):
    with Vault.open(path) as v:
        return _scan_range(v, keys, queries, start, stop)


def _run(vault: Vault, queries: Sequence[StrProfile], workers: int, executor: str):
    if workers < 1:
        raise ValueError("workers must be >= 1")
    keys = [profile_cipher_key(q).key for q in queries]
    ranges = [r for r in partition(len(vault), workers) if r[1] > r[0]] or [(0, 0)]
    t0 = time.perf_counter()
    if workers == 1 or len(ranges) == 1:
        results = [_scan_range(vault, keys, queries, *ranges[0])]
        errors = []
    else:
        if executor == "process":
            pool = ProcessPoolExecutor(workers)
            futures = [pool.submit(_scan_range_by_path, vault.path, keys, queries, a, b)
                       for a, b in ranges]
        elif executor == "thread":
            pool = ThreadPoolExecutor(workers)
            futures = [pool.submit(_scan_range, vault, keys, queries, a, b) for a, b in ranges]
        else:
            raise ValueError(f"unknown executor {executor!r}")
        results, errors = [], []
        with pool:
            for fut in futures:
                try:
                    results.append(fut.result())
                except Exception as exc:
                    errors.append(exc)
    elapsed = time.perf_counter() - t0
    if errors:
        corrupt = [e for e in errors if isinstance(e, CorruptRecord)]
        if corrupt:
            first = min(corrupt, key=lambda e: e.index)
            raise CorruptRecord(first.index, first.reason)
        err = errors[0]
        if isinstance(err, StrVaultError):
            raise err
        raise WorkerFailure(f"search worker failed: {err!r}") from err

    reports = []
    for qi in range(len(queries)):
        parts = [r[qi] for r in results]
        matches = sorted((m for p in parts for m in p.matches), key=lambda m: m.record_index)
        reports.append(
            SearchReport(
                matches=matches,
                records_scanned=sum(p.scanned for p in parts),
                bytes_processed=sum(p.nbytes for p in parts),
                elapsed=elapsed,
                workers=workers,
                key_collisions=sum(p.collisions for p in parts),
            )
        )
    return reports


def search(vault: Vault, query: StrProfile, workers: int = 1, executor: str = "thread") -> SearchReport:
    """Trial-decrypt every record with the query's key; return the ones that open.

    The scan always covers the whole vault, even after a match.  Results are
    ordered by record index whatever the worker count.
    """
    return _run(vault, [query], workers, executor)[0]


def search_many(vault: Vault, queries: Sequence[StrProfile], workers: int = 1,
                executor: str = "thread") -> list[SearchReport]:
    """Run :func:`search` for many queries with a single pass over the file.

    Each returned report equals what ``search`` gives for that query, except
    that ``elapsed`` covers the whole batch.
    """
    if not queries:
        return []
    return _run(vault, list(queries), workers, executor)


# -- benchmark ---------------------------------------------------------------


def physical_cores() -> int:
    try:
        import psutil

        phys = psutil.cpu_count(logical=False) or 1
    except ImportError:  # pragma: no cover
        phys = os.cpu_count() or 1
    try:
        avail = len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        avail = os.cpu_count() or 1
    return max(1, min(phys, avail))


def random_profile(rng: random.Random) -> StrProfile:
    entries = {}
    for locus in CORE_LOCI:
        a = rng.randrange(5, 40) * 10 + rng.choice((0, 0, 0, 2, 3))
        b = rng.randrange(5, 40) * 10 + rng.choice((0, 0, 0, 2, 3))
        entries[locus] = Genotype(a, b)
    return StrProfile(entries)


def build_synthetic_vault(path, n_records: int, record_size: int, seed: int = 0,
                          force: bool = True) -> Vault:
    """Vault of ``n_records`` random profiles, each carrying a ``record_size`` blob."""
    rng = random.Random(seed)
    vault = Vault.create(path, force=force)
    for i in range(n_records):
        plain = PlainRecord(random_profile(rng), f"synthetic {i}", rng.randbytes(record_size))
        vault.append(seal(plain, f"syn-{i:08d}", rng=rng))
    return vault


@dataclass(frozen=True)
class BenchRow:
    workers: int
    records: int
    bytes: int
    elapsed: float
    records_per_sec: float
    mb_per_sec: float
    efficiency: float


def benchmark(vault: Vault, worker_counts: Iterable[int], repeats: int = 3,
              seed: int = 0, executor: str = "thread") -> list[BenchRow]:
    """Full no-match scans at each worker count; best of ``repeats``.

    Parallel efficiency is ``rate(w) / (w * rate(1))``; a 1-worker run is
    always measured as the baseline.
    """
    probe = random_profile(random.Random(f"probe-{seed}"))
    counts = sorted(set(worker_counts) | {1})
    best: dict[int, SearchReport] = {}
    for w in counts:
        for _ in range(max(1, repeats)):
            rep = search(vault, probe, w, executor)
            if w not in best or rep.elapsed < best[w].elapsed:
                best[w] = rep
    base = best[1].records_per_sec
    rows = []
    for w in counts:
        rep = best[w]
        rows.append(
            BenchRow(w, rep.records_scanned, rep.bytes_processed, rep.elapsed,
                     rep.records_per_sec, rep.mb_per_sec, rep.records_per_sec / (w * base))
        )
    return rows


@dataclass(frozen=True)
class Extrapolation:
    label: str
    key: str
    population: float
    rate_low: float
    rate_high: float
    unit: str  # "hours" or "minutes"

    @property
    def fastest(self) -> float:
        return self._convert(self.population / self.rate_high)

    @property
    def slowest(self) -> float:
        return self._convert(self.population / self.rate_low)

    def _convert(self, seconds: float) -> float:
        return seconds / 3600 if self.unit == "hours" else seconds / 60


def extrapolate(rates: tuple[float, float] = ASSUMED_RATES, tag: str = "assumed") -> list[Extrapolation]:
    """Time to scan the U.S. population and the CODIS offender set at ``rates``."""
    lo, hi = rates
    return [
        Extrapolation(f"US population 328.2M ({tag})", f"us_{tag}", US_POPULATION, lo, hi, "hours"),
        Extrapolation(f"CODIS offenders 15M ({tag})", f"codis_{tag}", CODIS_PROFILES, lo, hi, "minutes"),
    ]


def format_bench(rows: list[BenchRow], extrapolations: list[Extrapolation],
                 fmt: str = "text") -> str:
    if fmt == "kv":
        out = [f"backend={kernels.NAME}"]
        for r in rows:
            p = f"workers_{r.workers}"
            out += [
                f"{p}.records={r.records}",
                f"{p}.bytes={r.bytes}",
                f"{p}.elapsed_s={r.elapsed:.6f}",
                f"{p}.records_per_s={r.records_per_sec:.1f}",
                f"{p}.mb_per_s={r.mb_per_sec:.2f}",
                f"{p}.efficiency={r.efficiency:.3f}",
            ]
        for e in extrapolations:
            p = "extrapolate." + e.key
            out += [
                f"{p}.population={e.population:.0f}",
                f"{p}.rate_low={e.rate_low:.0f}",
                f"{p}.rate_high={e.rate_high:.0f}",
                f"{p}.{e.unit}_fastest={e.fastest:.2f}",
                f"{p}.{e.unit}_slowest={e.slowest:.2f}",
            ]
        return "\n".join(out) + "\n"
    out = [f"backend: {kernels.NAME}",
           f"{'workers':>7} {'records':>9} {'MB':>10} {'seconds':>9} {'rec/s':>10} {'MB/s':>9} {'eff':>6}"]
    for r in rows:
        out.append(
            f"{r.workers:>7} {r.records:>9} {r.bytes / MB:>10.2f} {r.elapsed:>9.3f} "
            f"{r.records_per_sec:>10.1f} {r.mb_per_sec:>9.1f} {r.efficiency:>6.2f}"
        )
    out.append("")
    out.append("extrapolation")
    for e in extrapolations:
        out.append(
            f"  {e.label}: {e.rate_low:,.0f}-{e.rate_high:,.0f} records/s -> "
            f"{e.fastest:.2f}-{e.slowest:.2f} {e.unit}"
        )
    return "\n".join(out) + "\n"
