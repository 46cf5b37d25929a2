"""STR-keyed joint encryption of genotype profiles and biometric payloads.

A record is encrypted under a key derived from its own STR profile; a vault
of such records is searched by trial decryption, so only a query with the
identical profile opens anything.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import *  # noqa: F401,F403
from .keygen import (
    CipherKey,
    SearchKey,
    derive_search_key,
    effective_bits,
    encode_allele,
    expand_cipher_key,
    shared_bits,
)
from .profile import (
    CORE_LOCI,
    Genotype,
    StrProfile,
    canonical_string,
    format_profile,
    parse_canonical,
    parse_profile,
    read_profile,
)
from .record import EncryptedRecord, NoMatch, PlainRecord, Reason, seal, try_unseal, verify_match
from .search import MatchResult, SearchReport, benchmark, search, search_many
from .vault import Vault
