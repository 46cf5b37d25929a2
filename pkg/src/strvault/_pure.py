"""Pure-Python kernels.  Same contract as the compiled ``_kernels`` module."""

from __future__ import annotations

import hmac

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

STATUS_OK = 0
STATUS_BAD_PADDING = 1
STATUS_BAD_PREAMBLE = 2

BLOCK = 16
PREAMBLE = bytes(16)

NAME = "pure"


def hkdf_sha256(salt: bytes, ikm: bytes, info: bytes, length: int = 32) -> bytes:
    if length > 255 * 32:
        raise ValueError("hkdf output too long")
    prk = hmac.digest(salt, ikm, "sha256")
    okm = b""
    t = b""
    counter = 1
    while len(okm) < length:
        t = hmac.digest(prk, t + info + bytes([counter]), "sha256")
        okm += t
        counter += 1
    return okm[:length]


def _unpad(pt: bytes):
    n = pt[-1]
    if n == 0 or n > BLOCK or pt[-n:] != bytes([n]) * n:
        return None
    return pt[:-n]


def trial_decrypt(key: bytes, iv: bytes, ct: bytes):
    """Decrypt one record; report padding / preamble status.

    Returns ``(status, plaintext)`` where plaintext is unpadded and only set
    when status is STATUS_OK.
    """
    dec = Cipher(algorithms.AES(key), modes.CBC(iv)).decryptor()
    pt = dec.update(ct) + dec.finalize()
    body = _unpad(pt)
    if body is None:
        return STATUS_BAD_PADDING, None
    if body[:BLOCK] != PREAMBLE:
        return STATUS_BAD_PREAMBLE, None
    return STATUS_OK, body


def scan_block(key: bytes, ivs: bytes, cts: bytes, offsets) -> list:
    """Trial-decrypt ``len(offsets) - 1`` records packed back to back.

    Record ``i`` has IV ``ivs[16*i:16*i+16]`` and ciphertext
    ``cts[offsets[i]:offsets[i+1]]``.  Returns ``[(i, plaintext), ...]`` for
    records that pass padding and preamble.
    """
    hits = []
    algo = algorithms.AES(key)
    mv = memoryview(cts)
    for i in range(len(offsets) - 1):
        dec = Cipher(algo, modes.CBC(ivs[16 * i : 16 * i + 16])).decryptor()
        pt = dec.update(mv[offsets[i] : offsets[i + 1]]) + dec.finalize()
        body = _unpad(pt)
        if body is not None and body[:BLOCK] == PREAMBLE:
            hits.append((i, body))
    return hits


def candidate_value(base: int, nbits: int, unknown, i: int) -> int:
    u = len(unknown)
    value = base
    for j, pos in enumerate(unknown):
        if (i >> (u - 1 - j)) & 1:
            value |= 1 << (nbits - 1 - pos)
    return value


def attack_search(salt, info, nbits, base, unknown, iv, block0, start=0):
    """Enumerate candidates ``start, start+1, ...`` until one decrypts ``block0`` to ``iv``.

    Returns ``(index, trials)``; index is -1 when the space is exhausted.
    """
    nbytes = (nbits + 7) // 8
    total = 1 << len(unknown)
    for i in range(start, total):
        value = candidate_value(base, nbits, unknown, i)
        key = hkdf_sha256(salt, value.to_bytes(nbytes, "big"), info, 32)
        dec = Cipher(algorithms.AES(key), modes.ECB()).decryptor()
        if dec.update(block0) == iv:
            return i, i - start + 1
    return -1, total - start
