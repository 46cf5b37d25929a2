"""Append-only vault file.

Layout (little-endian)::

    header   magic "STRVAULT" (8) | version u32 | record_count u64
    record   id_len u16 | id (UTF-8) | iv (16) | ct_len u64 | ciphertext

Records are written first and the header count last, so a crash mid-append
leaves a tail past the committed count that readers ignore and the next
append overwrites.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Iterator, NamedTuple

from .errors import CorruptRecord, CorruptVault, DuplicateRecordId, IoFailure, RefusedOverwrite
from .record import BLOCK, IV_BYTES, EncryptedRecord

MAGIC = b"STRVAULT"
FORMAT_VERSION = 1
HEADER = struct.Struct("<8sIQ")
COUNT_OFFSET = 12
_COUNT = struct.Struct("<Q")
_ID_LEN = struct.Struct("<H")
_CT_LEN = struct.Struct("<Q")
MAX_ID_BYTES = 0xFFFF
DEFAULT_CHUNK_BYTES = 8 * 1024 * 1024


class RecordChunk(NamedTuple):
    """Records ``first .. first+len(ids)`` packed for the scan kernel."""

    first: int
    ids: list
    ivs: bytes
    cts: bytes
    offsets: list  # len(ids) + 1 bounds into ``cts``


def encode_record(rec: EncryptedRecord) -> bytes:
    rid = rec.record_id.encode("utf-8")
    if not rid or len(rid) > MAX_ID_BYTES:
        raise ValueError("record id must be 1..65535 UTF-8 bytes")
    if not rec.ciphertext or len(rec.ciphertext) % BLOCK:
        raise ValueError("ciphertext must be a positive multiple of 16 bytes")
    return b"".join(
        (_ID_LEN.pack(len(rid)), rid, rec.iv, _CT_LEN.pack(len(rec.ciphertext)), rec.ciphertext)
    )


def _parse_record_header(buf, pos: int, limit: int, index: int, ct_limit: int | None = None):
    """Return (record_id, iv_pos, ct_pos, ct_len) or raise CorruptRecord.

    ``ct_limit`` bounds the ciphertext end when ``buf`` holds only the header.
    """
    if pos + 2 > limit:
        raise CorruptRecord(index, "truncated record header")
    (id_len,) = _ID_LEN.unpack_from(buf, pos)
    if id_len == 0:
        raise CorruptRecord(index, "empty record id")
    iv_pos = pos + 2 + id_len
    if iv_pos + IV_BYTES + 8 > limit:
        raise CorruptRecord(index, "truncated record header")
    try:
        rid = bytes(buf[pos + 2 : iv_pos]).decode("utf-8")
    except UnicodeDecodeError:
        raise CorruptRecord(index, "record id is not UTF-8") from None
    (ct_len,) = _CT_LEN.unpack_from(buf, iv_pos + IV_BYTES)
    ct_pos = iv_pos + IV_BYTES + 8
    if ct_len == 0 or ct_len % BLOCK:
        raise CorruptRecord(index, f"ciphertext length {ct_len} not block aligned")
    if ct_pos + ct_len > (limit if ct_limit is None else ct_limit):
        raise CorruptRecord(index, "ciphertext runs past end of vault")
    return rid, iv_pos, ct_pos, ct_len


class Vault:
    """An open vault file.  Use :meth:`create` or :meth:`open`."""

    def __init__(self, path, writable: bool):
        self.path = Path(path)
        self.writable = writable
        self._fh = None
        self._starts: list[int] = [HEADER.size]
        self._ids: set[str] = set()
        self._corrupt: CorruptRecord | None = None
        try:
            self._fh = open(self.path, "r+b" if writable else "rb")
            self._load()
        except OSError as exc:
            self.close()
            raise IoFailure(str(exc)) from exc
        except Exception:
            self.close()
            raise

    # -- construction --------------------------------------------------------

    @classmethod
    def create(cls, path, force: bool = False) -> "Vault":
        path = Path(path)
        if path.exists() and not force:
            raise RefusedOverwrite(f"{path} already exists (use force to overwrite)")
        try:
            with open(path, "wb") as fh:
                fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, 0))
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        return cls(path, writable=True)

    @classmethod
    def open(cls, path, writable: bool = False) -> "Vault":
        return cls(path, writable)

    def _load(self) -> None:
        fh = self._fh
        head = fh.read(HEADER.size)
        if len(head) < HEADER.size:
            raise CorruptVault(f"{self.path}: truncated header")
        magic, version, count = HEADER.unpack(head)
        if magic != MAGIC:
            raise CorruptVault(f"{self.path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise CorruptVault(f"{self.path}: unsupported format version {version}")
        self.record_count = count
        size = os.fstat(fh.fileno()).st_size
        pos = HEADER.size
        for index in range(count):
            fh.seek(pos)
            head = fh.read(2)
            if len(head) == 2:
                head += fh.read(_ID_LEN.unpack(head)[0] + IV_BYTES + 8)
            try:
                # offsets are relative to the record start
                rid, _, ct_pos, ct_len = _parse_record_header(
                    head, 0, len(head), index, ct_limit=size - pos
                )
                if rid in self._ids:
                    raise CorruptRecord(index, f"duplicate record id {rid!r}")
            except CorruptRecord as exc:
                self._corrupt = exc
                return
            self._ids.add(rid)
            pos += ct_pos + ct_len
            self._starts.append(pos)

    # -- writing -------------------------------------------------------------

    def append(self, rec: EncryptedRecord) -> int:
        """Append one record and commit it; returns its index."""
        if not self.writable:
            raise IoFailure("vault opened read-only")
        if self._corrupt is not None:
            raise CorruptVault(f"refusing to append to corrupt vault: {self._corrupt}")
        if rec.record_id in self._ids:
            raise DuplicateRecordId(f"duplicate record id {rec.record_id!r}")
        data = encode_record(rec)
        end = self._starts[-1]
        fh = self._fh
        try:
            fh.seek(end)
            fh.truncate()
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
            fh.seek(COUNT_OFFSET)
            fh.write(_COUNT.pack(self.record_count + 1))
            fh.flush()
            os.fsync(fh.fileno())
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        self._ids.add(rec.record_id)
        self._starts.append(end + len(data))
        self.record_count += 1
        return self.record_count - 1

    # -- reading -------------------------------------------------------------

    def __len__(self) -> int:
        return self.record_count

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._ids

    @property
    def data_bytes(self) -> int:
        return self._starts[-1] - HEADER.size

    def _check_range(self, start: int, stop: int | None) -> int:
        stop = self.record_count if stop is None else stop
        if not 0 <= start <= stop <= self.record_count:
            raise IndexError(f"range {start}:{stop} outside 0:{self.record_count}")
        return stop

    def _raise_if_corrupt(self, stop: int) -> None:
        if self._corrupt is not None and self._corrupt.index < stop:
            raise CorruptRecord(self._corrupt.index, self._corrupt.reason)

    def scan(self, start: int = 0, stop: int | None = None) -> Iterator[EncryptedRecord]:
        """Yield records ``start .. stop-1`` in order, one at a time."""
        for chunk in self.chunks(start, stop):
            for i, rid in enumerate(chunk.ids):
                yield EncryptedRecord(
                    rid,
                    chunk.ivs[16 * i : 16 * i + 16],
                    chunk.cts[chunk.offsets[i] : chunk.offsets[i + 1]],
                )

    def __iter__(self) -> Iterator[EncryptedRecord]:
        return self.scan()

    def chunks(
        self, start: int = 0, stop: int | None = None, max_bytes: int = DEFAULT_CHUNK_BYTES
    ) -> Iterator[RecordChunk]:
        """Read a range as packed chunks of roughly ``max_bytes`` each.

        Opens its own file handle, so concurrent scans are safe.
        """
        stop = self._check_range(start, stop)
        readable = stop
        if self._corrupt is not None:
            readable = min(stop, self._corrupt.index)
        starts = self._starts
        with open(self.path, "rb") as fh:
            i = start
            while i < readable:
                j = i + 1
                while j < readable and starts[j + 1] - starts[i] <= max_bytes:
                    j += 1
                fh.seek(starts[i])
                buf = fh.read(starts[j] - starts[i])
                yield self._unpack_chunk(buf, i, j)
                i = j
        self._raise_if_corrupt(stop)

    @staticmethod
    def _unpack_chunk(buf: bytes, first: int, stop: int) -> RecordChunk:
        ids, ivs, cts, offsets = [], [], [], [0]
        pos = 0
        total = 0
        for index in range(first, stop):
            rid, iv_pos, ct_pos, ct_len = _parse_record_header(buf, pos, len(buf), index)
            ids.append(rid)
            ivs.append(buf[iv_pos : iv_pos + IV_BYTES])
            cts.append(buf[ct_pos : ct_pos + ct_len])
            total += ct_len
            offsets.append(total)
            pos = ct_pos + ct_len
        return RecordChunk(first, ids, b"".join(ivs), b"".join(cts), offsets)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "Vault":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __repr__(self) -> str:
        return f"Vault({str(self.path)!r}, records={self.record_count})"
