"""STR profiles over the 20 CODIS core loci.

Alleles are held as integer deci-repeats (``9.3`` -> ``93``) so that no
binary floating point ever reaches key derivation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

from .errors import (
    DuplicateLocus,
    MalformedAllele,
    MissingLocus,
    ProfileSyntaxError,
    UnknownLocus,
)

ROSTER_VERSION = 1

# FBI CODIS core loci (expanded set effective 2017).  Changing this tuple changes
# every derived key, so it is versioned with ROSTER_VERSION.
CORE_LOCI: tuple[str, ...] = tuple(
    sorted(
        (
            "CSF1PO",
            "D1S1656",
            "D2S441",
            "D2S1338",
            "D3S1358",
            "D5S818",
            "D7S820",
            "D8S1179",
            "D10S1248",
            "D12S391",
            "D13S317",
            "D16S539",
            "D18S51",
            "D19S433",
            "D21S11",
            "D22S1045",
            "FGA",
            "TH01",
            "TPOX",
            "VWA",
        )
    )
)
_ROSTER_SET = frozenset(CORE_LOCI)
assert len(CORE_LOCI) == 20

MAX_DECI = 999
_ALLELE_RE = re.compile(r"^(\d{1,2})(?:\.(\d))?$")


def locus_name(name: str) -> str:
    """Normalize a locus name to its roster spelling or raise UnknownLocus."""
    upper = name.strip().upper()
    if upper not in _ROSTER_SET:
        raise UnknownLocus(f"unknown locus {name.strip()!r}")
    return upper


def parse_allele(text: str) -> int:
    """Parse ``"9.3"`` into deci-repeats (93)."""
    m = _ALLELE_RE.match(text.strip())
    if m is None:
        raise MalformedAllele(f"malformed allele {text.strip()!r}")
    whole = int(m.group(1))
    frac = int(m.group(2) or 0)
    if frac > 3:
        raise MalformedAllele(f"allele {text.strip()!r}: fractional part must be .0-.3")
    deci = whole * 10 + frac
    if deci <= 0:
        raise MalformedAllele(f"allele {text.strip()!r} must be positive")
    return deci


def check_allele(deci: int) -> int:
    if not isinstance(deci, int) or isinstance(deci, bool):
        raise MalformedAllele(f"allele must be integer deci-repeats, got {deci!r}")
    if not 0 < deci <= MAX_DECI or deci % 10 > 3:
        raise MalformedAllele(f"invalid allele value {deci} deci-repeats")
    return deci


def format_allele(deci: int) -> str:
    return f"{deci // 10}.{deci % 10}"


@dataclass(frozen=True, order=True)
class Genotype:
    low: int
    high: int

    def __post_init__(self) -> None:
        check_allele(self.low)
        check_allele(self.high)
        if self.low > self.high:
            lo, hi = self.high, self.low
            object.__setattr__(self, "low", lo)
            object.__setattr__(self, "high", hi)

    def __iter__(self) -> Iterator[int]:
        yield self.low
        yield self.high

    def __str__(self) -> str:
        return f"{format_allele(self.low)}/{format_allele(self.high)}"


class StrProfile:
    """An immutable 20-locus genotype record."""

    __slots__ = ("_entries", "_canonical")

    def __init__(self, entries: Mapping[str, Genotype | tuple[int, int]]):
        norm: dict[str, Genotype] = {}
        for name, g in entries.items():
            locus = locus_name(name)
            if locus in norm:
                raise DuplicateLocus(f"duplicate locus {locus}")
            if not isinstance(g, Genotype):
                g = Genotype(*g)
            norm[locus] = g
        missing = [l for l in CORE_LOCI if l not in norm]
        if missing:
            raise MissingLocus(missing)
        self._entries = MappingProxyType({l: norm[l] for l in CORE_LOCI})
        self._canonical = "".join(
            f"{l}={g};" for l, g in self._entries.items()
        ).encode("ascii")

    @property
    def entries(self) -> Mapping[str, Genotype]:
        return self._entries

    def __getitem__(self, locus: str) -> Genotype:
        return self._entries[locus_name(locus)]

    def __iter__(self):
        return iter(self._entries.items())

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StrProfile):
            return NotImplemented
        return self._canonical == other._canonical

    def __hash__(self) -> int:
        return hash(self._canonical)

    def __reduce__(self):
        return parse_canonical, (self._canonical,)

    def __repr__(self) -> str:
        return f"StrProfile({self._canonical.decode()!r})"

    def alleles(self, loci: Iterable[str] = CORE_LOCI) -> list[int]:
        """Allele slots in key order: locus by locus, low then high."""
        out = []
        for l in loci:
            g = self._entries[l]
            out.append(g.low)
            out.append(g.high)
        return out

    def replace(self, locus: str, genotype: Genotype | tuple[int, int]) -> "StrProfile":
        entries = dict(self._entries)
        entries[locus_name(locus)] = genotype if isinstance(genotype, Genotype) else Genotype(*genotype)
        return StrProfile(entries)


def canonical_string(profile: StrProfile) -> bytes:
    """``LOCUS=low/high;`` for every locus in lexicographic order."""
    return profile._canonical


def parse_canonical(data: bytes) -> StrProfile:
    """Inverse of :func:`canonical_string`.  Rejects anything non-canonical."""
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        raise ProfileSyntaxError("canonical profile is not ASCII") from None
    if not text.endswith(";"):
        raise ProfileSyntaxError("canonical profile must end with ';'")
    entries: dict[str, Genotype] = {}
    for item in text[:-1].split(";"):
        name, sep, pair = item.partition("=")
        lo, sep2, hi = pair.partition("/")
        if not sep or not sep2:
            raise ProfileSyntaxError(f"bad canonical entry {item!r}")
        locus = locus_name(name)
        if locus in entries:
            raise DuplicateLocus(f"duplicate locus {locus}")
        entries[locus] = Genotype(parse_allele(lo), parse_allele(hi))
    profile = StrProfile(entries)
    if profile._canonical != data:
        raise ProfileSyntaxError("profile bytes are not in canonical form")
    return profile


def parse_profile(text: str, source: str | None = None) -> StrProfile:
    """Parse a ``LOCUS,allele1,allele2`` profile file."""
    entries: dict[str, Genotype] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) != 3:
            raise ProfileSyntaxError(
                f"expected LOCUS,allele1,allele2, got {len(fields)} field(s)", lineno, source
            )
        try:
            locus = locus_name(fields[0])
            if locus in entries:
                raise DuplicateLocus(f"duplicate locus {locus}")
            entries[locus] = Genotype(parse_allele(fields[1]), parse_allele(fields[2]))
        except (UnknownLocus, DuplicateLocus, MalformedAllele) as exc:
            raise type(exc)(str(exc), lineno, source) from None
    missing = [l for l in CORE_LOCI if l not in entries]
    if missing:
        raise MissingLocus(missing, source=source)
    return StrProfile(entries)


def read_profile(path) -> StrProfile:
    with open(path, encoding="utf-8") as fh:
        return parse_profile(fh.read(), source=str(path))


def format_profile(profile: StrProfile) -> str:
    """Render in the profile file format (round-trips through parse_profile)."""
    return "".join(
        f"{l},{format_allele(g.low)},{format_allele(g.high)}\n" for l, g in profile
    )
