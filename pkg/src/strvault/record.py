"""Self-keyed record encryption.

A record is framed as::

    16 zero bytes | version (1) | u16 len + canonical profile
                  | u32 len + UTF-8 metadata | u64 len + blob

(all integers little-endian), PKCS#7 padded and encrypted with AES-256-CBC
under the key derived from the record's own profile.  Decryption succeeds only
if padding, preamble, version and lengths all check out.
"""

from __future__ import annotations

import enum
import os
import random
import struct
from dataclasses import dataclass
from typing import Sequence

from cryptography.hazmat.primitives import padding
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from ._backend import kernels
from .errors import MalformedCiphertext, OversizeBlob, OversizeMetadata, ProfileError
from .keygen import CipherKey, profile_cipher_key
from .profile import StrProfile, canonical_string, parse_canonical

PREAMBLE = bytes(16)
FRAME_VERSION = 1
BLOCK = 16
IV_BYTES = 16
MAX_BLOB = 64 * 1024 * 1024
MAX_METADATA = 64 * 1024

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


@dataclass(frozen=True)
class PlainRecord:
    profile: StrProfile
    metadata: str = ""
    blob: bytes = b""

    def __post_init__(self) -> None:
        if len(self.metadata.encode("utf-8")) > MAX_METADATA:
            raise OversizeMetadata(f"metadata exceeds {MAX_METADATA} bytes")
        if len(self.blob) > MAX_BLOB:
            raise OversizeBlob(f"blob exceeds {MAX_BLOB} bytes")


@dataclass(frozen=True)
class EncryptedRecord:
    record_id: str
    iv: bytes
    ciphertext: bytes

    def __post_init__(self) -> None:
        if len(self.iv) != IV_BYTES:
            raise MalformedCiphertext("iv must be 16 bytes")


class Reason(enum.Enum):
    BAD_PADDING = "BadPadding"
    BAD_PREAMBLE = "BadPreamble"
    BAD_FRAMING = "BadFraming"


@dataclass(frozen=True)
class NoMatch:
    """Decryption did not yield a record.  ``reason`` is diagnostic only."""

    reason: Reason

    def __bool__(self) -> bool:
        return False


def frame(record: PlainRecord) -> bytes:
    profile = canonical_string(record.profile)
    meta = record.metadata.encode("utf-8")
    return b"".join(
        (
            PREAMBLE,
            bytes([FRAME_VERSION]),
            _U16.pack(len(profile)),
            profile,
            _U32.pack(len(meta)),
            meta,
            _U64.pack(len(record.blob)),
            record.blob,
        )
    )


def unframe(body: bytes) -> PlainRecord | None:
    """Parse an unpadded plaintext; None on any framing violation."""
    if len(body) < 17 or body[:16] != PREAMBLE or body[16] != FRAME_VERSION:
        return None
    pos = 17
    try:
        (plen,) = _U16.unpack_from(body, pos)
        pos += 2
        profile_bytes = body[pos : pos + plen]
        pos += plen
        (mlen,) = _U32.unpack_from(body, pos)
        pos += 4
        meta = body[pos : pos + mlen]
        pos += mlen
        (blen,) = _U64.unpack_from(body, pos)
        pos += 8
    except struct.error:
        return None
    if pos + blen != len(body) or mlen > MAX_METADATA or blen > MAX_BLOB:
        return None
    try:
        profile = parse_canonical(profile_bytes)
        metadata = meta.decode("utf-8")
    except (ProfileError, UnicodeDecodeError):
        return None
    return PlainRecord(profile, metadata, body[pos:])


def encrypt(plaintext: bytes, key: CipherKey, iv: bytes) -> bytes:
    padder = padding.PKCS7(128).padder()
    data = padder.update(plaintext) + padder.finalize()
    enc = Cipher(algorithms.AES(key.key), modes.CBC(iv)).encryptor()
    return enc.update(data) + enc.finalize()


def seal(
    record: PlainRecord,
    record_id: str,
    *,
    loci: Sequence[str] | None = None,
    rng: random.Random | None = None,
) -> EncryptedRecord:
    """Encrypt ``record`` under the key of its own profile.

    ``loci`` selects a reduced key roster (attack demonstrations only).  A
    seeded ``rng`` makes the IV reproducible; production use leaves it None.
    """
    key = profile_cipher_key(record.profile, loci)
    iv = rng.randbytes(IV_BYTES) if rng is not None else os.urandom(IV_BYTES)
    return EncryptedRecord(record_id, iv, encrypt(frame(record), key, iv))


def try_unseal(enc: EncryptedRecord, key: CipherKey) -> PlainRecord | NoMatch:
    if not enc.ciphertext or len(enc.ciphertext) % BLOCK:
        raise MalformedCiphertext(f"record {enc.record_id!r}: ciphertext not block aligned")
    status, body = kernels.trial_decrypt(key.key, enc.iv, enc.ciphertext)
    if status == kernels.STATUS_BAD_PADDING:
        return NoMatch(Reason.BAD_PADDING)
    if status == kernels.STATUS_BAD_PREAMBLE:
        return NoMatch(Reason.BAD_PREAMBLE)
    record = unframe(body)
    if record is None:
        return NoMatch(Reason.BAD_FRAMING)
    return record


def verify_match(record: PlainRecord, query: StrProfile) -> bool:
    return canonical_string(record.profile) == canonical_string(query)
