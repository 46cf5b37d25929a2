"""Search keys and cipher keys derived from STR profiles.

Every allele contributes two bits, ``deci_repeats mod 4``.  Slots are laid out
most-significant first: locus in lexicographic order, low allele then high
allele.  Twenty loci give the 80-bit search key, which HKDF-SHA256 stretches
to the 256-bit AES key.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ._backend import kernels
from .profile import CORE_LOCI, StrProfile, check_allele, locus_name

KDF_HASH = "sha256"
KDF_LABEL = b"strvault-v1"
# SHA-256("strvault/kdf-salt/v1"), frozen.
KDF_SALT = bytes.fromhex(
    "ff4f34d7792f74ba19f41ca110c11551405bfc24a4c37519d9b1b716e43b409e"
)
CIPHER_KEY_BYTES = 32
BITS_PER_ALLELE = 2
SEARCH_KEY_BITS = len(CORE_LOCI) * 2 * BITS_PER_ALLELE


def encode_allele(deci: int) -> int:
    return check_allele(deci) % 4


def key_roster(loci: Sequence[str] | None = None) -> tuple[str, ...]:
    """Validate a (sub)roster and return it in key order."""
    if loci is None:
        return CORE_LOCI
    names = sorted({locus_name(l) for l in loci})
    if len(names) != len(loci):
        raise ValueError("duplicate loci in key roster")
    if not names:
        raise ValueError("key roster must not be empty")
    return tuple(names)


@dataclass(frozen=True)
class SearchKey:
    value: int
    nbits: int = SEARCH_KEY_BITS

    def __post_init__(self) -> None:
        if self.nbits <= 0 or self.nbits % 4:
            raise ValueError("search key length must be a positive multiple of 4 bits")
        if not 0 <= self.value < (1 << self.nbits):
            raise ValueError("search key value out of range")

    @classmethod
    def from_codes(cls, codes: Sequence[int]) -> "SearchKey":
        value = 0
        for c in codes:
            if not 0 <= c < 4:
                raise ValueError(f"allele code {c} out of range")
            value = (value << 2) | c
        return cls(value, 2 * len(codes))

    @property
    def codes(self) -> tuple[int, ...]:
        n = self.nbits // 2
        return tuple((self.value >> (2 * (n - 1 - i))) & 3 for i in range(n))

    @property
    def bits(self) -> str:
        return format(self.value, f"0{self.nbits}b")

    def to_bytes(self) -> bytes:
        return self.value.to_bytes((self.nbits + 7) // 8, "big")

    def flip(self, position: int) -> "SearchKey":
        """Flip the bit at ``position`` (0 = most significant)."""
        return SearchKey(self.value ^ (1 << (self.nbits - 1 - position)), self.nbits)

    def __repr__(self) -> str:
        return f"SearchKey({self.to_bytes().hex()}, nbits={self.nbits})"


@dataclass(frozen=True)
class CipherKey:
    key: bytes

    def __post_init__(self) -> None:
        if len(self.key) != CIPHER_KEY_BYTES:
            raise ValueError("cipher key must be 32 bytes")

    def __repr__(self) -> str:
        # keep key material out of logs and tracebacks
        return "CipherKey(<redacted>)"


def derive_search_key(profile: StrProfile, loci: Sequence[str] | None = None) -> SearchKey:
    roster = key_roster(loci)
    return SearchKey.from_codes([a % 4 for a in profile.alleles(roster)])


def expand_cipher_key(key: SearchKey) -> CipherKey:
    return CipherKey(kernels.hkdf_sha256(KDF_SALT, key.to_bytes(), KDF_LABEL, CIPHER_KEY_BYTES))


def profile_cipher_key(profile: StrProfile, loci: Sequence[str] | None = None) -> CipherKey:
    return expand_cipher_key(derive_search_key(profile, loci))


def shared_bits(a: SearchKey, b: SearchKey) -> int:
    if a.nbits != b.nbits:
        raise ValueError("search keys have different lengths")
    return a.nbits - bin(a.value ^ b.value).count("1")


def effective_bits(a: SearchKey, b: SearchKey) -> int:
    """Key bits an attacker holding ``b`` still has to search for ``a``."""
    return a.nbits - shared_bits(a, b)
