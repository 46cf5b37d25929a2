# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels backed by OpenSSL libcrypto.

Same contract as ``strvault._pure``.  The scan and attack loops run without
the GIL so worker threads scale across cores.
"""

from libc.stdint cimport uint64_t
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy, memcmp, memset

cdef extern from "openssl/sha.h" nogil:
    ctypedef struct SHA256_CTX:
        pass
    int SHA256_Init(SHA256_CTX *c)
    int SHA256_Update(SHA256_CTX *c, const void *data, size_t n)
    int SHA256_Final(unsigned char *md, SHA256_CTX *c)

cdef extern from "openssl/evp.h" nogil:
    ctypedef struct EVP_CIPHER_CTX:
        pass
    ctypedef struct EVP_CIPHER:
        pass
    ctypedef struct ENGINE:
        pass
    EVP_CIPHER_CTX *EVP_CIPHER_CTX_new()
    void EVP_CIPHER_CTX_free(EVP_CIPHER_CTX *c)
    const EVP_CIPHER *EVP_aes_256_cbc()
    const EVP_CIPHER *EVP_aes_256_ecb()
    int EVP_DecryptInit_ex(EVP_CIPHER_CTX *c, const EVP_CIPHER *t, ENGINE *e,
                           const unsigned char *key, const unsigned char *iv)
    int EVP_DecryptUpdate(EVP_CIPHER_CTX *c, unsigned char *out, int *outl,
                          const unsigned char *inp, int inl)
    int EVP_CIPHER_CTX_set_padding(EVP_CIPHER_CTX *c, int pad)

STATUS_OK = 0
STATUS_BAD_PADDING = 1
STATUS_BAD_PREAMBLE = 2

NAME = "compiled"

cdef enum:
    BLOCK = 16
    CHUNK = 1 << 30
    MAX_INFO = 128


cdef struct HmacKey:
    SHA256_CTX inner
    SHA256_CTX outer


cdef void hmac_setup(HmacKey *h, const unsigned char *key, size_t keylen) noexcept nogil:
    cdef unsigned char k[64]
    cdef unsigned char pad[64]
    cdef SHA256_CTX c
    cdef int i
    memset(k, 0, 64)
    if keylen > 64:
        SHA256_Init(&c)
        SHA256_Update(&c, key, keylen)
        SHA256_Final(k, &c)
    else:
        memcpy(k, key, keylen)
    for i in range(64):
        pad[i] = k[i] ^ 0x36
    SHA256_Init(&h.inner)
    SHA256_Update(&h.inner, pad, 64)
    for i in range(64):
        pad[i] = k[i] ^ 0x5C
    SHA256_Init(&h.outer)
    SHA256_Update(&h.outer, pad, 64)


cdef void hmac_finish(const HmacKey *h, const unsigned char *a, size_t alen,
                      const unsigned char *b, size_t blen,
                      unsigned char *out) noexcept nogil:
    # HMAC over the concatenation a || b
    cdef SHA256_CTX c
    cdef unsigned char inner[32]
    memcpy(&c, &h.inner, sizeof(SHA256_CTX))
    if alen:
        SHA256_Update(&c, a, alen)
    if blen:
        SHA256_Update(&c, b, blen)
    SHA256_Final(inner, &c)
    memcpy(&c, &h.outer, sizeof(SHA256_CTX))
    SHA256_Update(&c, inner, 32)
    SHA256_Final(out, &c)


cdef void hkdf32(const HmacKey *salted, const unsigned char *ikm, size_t ikmlen,
                 const unsigned char *info1, size_t info1len,
                 unsigned char *out) noexcept nogil:
    # info1 is info || 0x01; one expand block gives the 32-byte key
    cdef unsigned char prk[32]
    cdef HmacKey hk
    hmac_finish(salted, ikm, ikmlen, NULL, 0, prk)
    hmac_setup(&hk, prk, 32)
    hmac_finish(&hk, info1, info1len, NULL, 0, out)


def hkdf_sha256(const unsigned char[::1] salt, const unsigned char[::1] ikm,
                const unsigned char[::1] info, Py_ssize_t length=32):
    if length > 255 * 32:
        raise ValueError("hkdf output too long")
    cdef HmacKey hs, hp
    cdef unsigned char prk[32]
    cdef unsigned char t[32]
    cdef unsigned char ctr
    cdef Py_ssize_t tlen = 0
    cdef bytearray out = bytearray()
    hmac_setup(&hs, &salt[0] if salt.shape[0] else NULL, salt.shape[0])
    hmac_finish(&hs, &ikm[0] if ikm.shape[0] else NULL, ikm.shape[0], NULL, 0, prk)
    hmac_setup(&hp, prk, 32)
    ctr = 1
    while len(out) < length:
        msg = bytes(t[:tlen]) + bytes(info) + bytes([ctr])
        hmac_finish(&hp, msg, len(msg), NULL, 0, t)
        tlen = 32
        out += t[:32]
        ctr += 1
    return bytes(out[:length])


cdef inline int check_plain(const unsigned char *pt, Py_ssize_t n) noexcept nogil:
    cdef int pad = pt[n - 1]
    cdef int i
    cdef unsigned char zero[BLOCK]
    if pad == 0 or pad > BLOCK:
        return 1
    for i in range(1, pad + 1):
        if pt[n - i] != pad:
            return 1
    if n - pad < BLOCK:
        return 2
    memset(zero, 0, BLOCK)
    if memcmp(pt, zero, BLOCK) != 0:
        return 2
    return 0


cdef int cbc_decrypt(EVP_CIPHER_CTX *ctx, const unsigned char *iv,
                     const unsigned char *ct, Py_ssize_t n,
                     unsigned char *out) noexcept nogil:
    cdef int outl
    cdef Py_ssize_t done = 0
    cdef int step
    if EVP_DecryptInit_ex(ctx, NULL, NULL, NULL, iv) != 1:
        return -1
    while done < n:
        step = <int>(n - done if n - done < CHUNK else CHUNK)
        if EVP_DecryptUpdate(ctx, out + done, &outl, ct + done, step) != 1:
            return -1
        done += step
    return 0


cdef EVP_CIPHER_CTX *keyed_ctx(const unsigned char *key, const EVP_CIPHER *cipher) except NULL:
    cdef EVP_CIPHER_CTX *ctx = EVP_CIPHER_CTX_new()
    if ctx == NULL:
        raise MemoryError()
    if EVP_DecryptInit_ex(ctx, cipher, NULL, key, NULL) != 1:
        EVP_CIPHER_CTX_free(ctx)
        raise RuntimeError("EVP_DecryptInit_ex failed")
    EVP_CIPHER_CTX_set_padding(ctx, 0)
    return ctx


def _check_key_iv(key, iv):
    if len(key) != 32:
        raise ValueError("key must be 32 bytes")
    if len(iv) != BLOCK:
        raise ValueError("iv must be 16 bytes")


def trial_decrypt(const unsigned char[::1] key, const unsigned char[::1] iv,
                  const unsigned char[::1] ct):
    _check_key_iv(key, iv)
    cdef Py_ssize_t n = ct.shape[0]
    if n == 0 or n % BLOCK:
        raise ValueError("ciphertext must be a positive multiple of 16 bytes")
    cdef EVP_CIPHER_CTX *ctx = keyed_ctx(&key[0], EVP_aes_256_cbc())
    cdef unsigned char *buf = <unsigned char *>malloc(n)
    cdef int rc, status
    if buf == NULL:
        EVP_CIPHER_CTX_free(ctx)
        raise MemoryError()
    try:
        with nogil:
            rc = cbc_decrypt(ctx, &iv[0], &ct[0], n, buf)
            if rc == 0:
                status = check_plain(buf, n)
        if rc != 0:
            raise RuntimeError("decryption failed")
        if status != 0:
            return status, None
        return 0, buf[:n - buf[n - 1]]
    finally:
        free(buf)
        EVP_CIPHER_CTX_free(ctx)


def scan_block(const unsigned char[::1] key, const unsigned char[::1] ivs,
               const unsigned char[::1] cts, offsets):
    if len(key) != 32:
        raise ValueError("key must be 32 bytes")
    cdef Py_ssize_t count = len(offsets) - 1
    if count <= 0:
        return []
    if ivs.shape[0] < count * BLOCK:
        raise ValueError("ivs buffer too short")
    cdef uint64_t *off = <uint64_t *>malloc((count + 1) * sizeof(uint64_t))
    cdef char *hit = <char *>malloc(count)
    if off == NULL or hit == NULL:
        free(off)
        free(hit)
        raise MemoryError()
    cdef Py_ssize_t i, n, maxlen = 0
    cdef EVP_CIPHER_CTX *ctx = NULL
    cdef unsigned char *buf = NULL
    cdef int rc = 0
    try:
        for i in range(count + 1):
            off[i] = offsets[i]
        for i in range(count):
            if off[i + 1] <= off[i] or (off[i + 1] - off[i]) % BLOCK or off[i + 1] > <uint64_t>cts.shape[0]:
                raise ValueError(f"bad record bounds at {i}")
            n = off[i + 1] - off[i]
            if n > maxlen:
                maxlen = n
        buf = <unsigned char *>malloc(maxlen)
        if buf == NULL:
            raise MemoryError()
        ctx = keyed_ctx(&key[0], EVP_aes_256_cbc())
        with nogil:
            for i in range(count):
                n = off[i + 1] - off[i]
                if cbc_decrypt(ctx, &ivs[i * BLOCK], &cts[off[i]], n, buf) != 0:
                    rc = -1
                    break
                hit[i] = check_plain(buf, n) == 0
        if rc != 0:
            raise RuntimeError("decryption failed")
        hits = []
        for i in range(count):
            if hit[i]:
                n = off[i + 1] - off[i]
                cbc_decrypt(ctx, &ivs[i * BLOCK], &cts[off[i]], n, buf)
                hits.append((i, buf[:n - buf[n - 1]]))
        return hits
    finally:
        free(off)
        free(hit)
        free(buf)
        if ctx != NULL:
            EVP_CIPHER_CTX_free(ctx)


def attack_search(const unsigned char[::1] salt, const unsigned char[::1] info,
                  int nbits, base, unknown, const unsigned char[::1] iv,
                  const unsigned char[::1] block0, start=0):
    cdef int u = len(unknown)
    if nbits < 1 or nbits > 64:
        raise ValueError("nbits must be in 1..64")
    if u > 40:
        raise ValueError("too many unknown bits")
    if info.shape[0] + 1 > MAX_INFO:
        raise ValueError("info too long")
    if iv.shape[0] != BLOCK or block0.shape[0] != BLOCK:
        raise ValueError("iv and block0 must be 16 bytes")
    cdef uint64_t masks[40]
    cdef int j, b
    for j in range(u):
        if not 0 <= unknown[j] < nbits:
            raise ValueError("unknown bit position out of range")
        masks[j] = (<uint64_t>1) << (nbits - 1 - <int>unknown[j])
    cdef uint64_t basev = base
    cdef uint64_t total = (<uint64_t>1) << u
    cdef uint64_t first = start
    cdef uint64_t idx, value
    cdef int nbytes = (nbits + 7) // 8
    cdef unsigned char material[8]
    cdef unsigned char info1[MAX_INFO]
    cdef Py_ssize_t info1len = info.shape[0] + 1
    cdef unsigned char key[32]
    cdef unsigned char out[BLOCK]
    cdef int outl
    cdef HmacKey hs
    cdef long long found = -1
    if info.shape[0]:
        memcpy(info1, &info[0], info.shape[0])
    info1[info.shape[0]] = 1
    hmac_setup(&hs, &salt[0] if salt.shape[0] else NULL, salt.shape[0])
    memset(key, 0, 32)
    cdef EVP_CIPHER_CTX *ctx = keyed_ctx(key, EVP_aes_256_ecb())
    try:
        with nogil:
            idx = first
            while idx < total:
                value = basev
                for j in range(u):
                    if (idx >> (u - 1 - j)) & 1:
                        value |= masks[j]
                for b in range(nbytes):
                    material[nbytes - 1 - b] = (value >> (8 * b)) & 0xFF
                hkdf32(&hs, material, nbytes, info1, info1len, key)
                EVP_DecryptInit_ex(ctx, NULL, NULL, key, NULL)
                EVP_DecryptUpdate(ctx, out, &outl, &block0[0], BLOCK)
                if memcmp(out, &iv[0], BLOCK) == 0:
                    found = idx
                    break
                idx += 1
        if found >= 0:
            return found, found - first + 1
        return -1, total - first if total > first else 0
    finally:
        EVP_CIPHER_CTX_free(ctx)
