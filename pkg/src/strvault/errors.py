"""Exception hierarchy shared by every strvault module."""

from __future__ import annotations


class StrVaultError(Exception):
    """Base class for all strvault errors."""


# -- profile ingestion -------------------------------------------------------


class ProfileError(StrVaultError, ValueError):
    """A profile file could not be turned into a valid StrProfile."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        self.message = message
        super().__init__(f"{where} {message}".strip() if where else message)

    def __reduce__(self):
        return type(self), (self.message, self.line, self.source)


class UnknownLocus(ProfileError):
    pass


class DuplicateLocus(ProfileError):
    pass


class MissingLocus(ProfileError):
    def __init__(self, missing, source: str | None = None):
        self.missing = tuple(missing)
        super().__init__("missing loci: " + ", ".join(self.missing), source=source)

    def __reduce__(self):
        return type(self), (self.missing, self.source)


class MalformedAllele(ProfileError):
    pass


class ProfileSyntaxError(ProfileError):
    pass


class FrequencyTableError(StrVaultError, ValueError):
    pass


# -- record crypto -----------------------------------------------------------


class OversizeBlob(StrVaultError, ValueError):
    pass


class OversizeMetadata(StrVaultError, ValueError):
    pass


class MalformedCiphertext(StrVaultError, ValueError):
    """Ciphertext is not block aligned: the store is corrupt, this is not a failed match."""


# -- vault -------------------------------------------------------------------


class VaultError(StrVaultError):
    pass


class IoFailure(VaultError, OSError):
    pass


class RefusedOverwrite(VaultError, FileExistsError):
    pass


class DuplicateRecordId(VaultError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class CorruptVault(VaultError):
    pass


class CorruptRecord(CorruptVault):
    def __init__(self, index: int, reason: str):
        self.index = index
        self.reason = reason
        super().__init__(f"record {index}: {reason}")

    def __reduce__(self):
        return type(self), (self.index, self.reason)


# -- search / analysis -------------------------------------------------------


class WorkerFailure(StrVaultError, RuntimeError):
    pass


class Exhausted(StrVaultError):
    """Every candidate key was tried and none decrypted the target."""

    def __init__(self, trials: int):
        self.trials = trials
        super().__init__(f"key space exhausted after {trials} trials")

    def __reduce__(self):
        return type(self), (self.trials,)
