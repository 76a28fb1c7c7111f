"""Exception hierarchy for socbuild.

Every failure carries a stable machine-readable ``code`` so callers (and the
CLI) can classify errors without parsing message text.
"""

from __future__ import annotations


class SocbuildError(Exception):
    """Base class for all socbuild failures."""

    code = "E_INTERNAL"

    def __str__(self) -> str:
        return f"{self.code}: {super().__str__()}"


class InternalError(SocbuildError):
    """Contract violation inside socbuild itself (a bug, not user input)."""

    code = "E_INTERNAL"


# --- VLNV / IP block model ---------------------------------------------------

class ArityError(SocbuildError):
    code = "E_ARITY"


class BadIdentifierError(SocbuildError):
    code = "E_BAD_IDENT"


class BadVersionError(SocbuildError):
    code = "E_BAD_VERSION"


class DuplicateSourceError(SocbuildError):
    code = "E_DUP_SOURCE"


class BadPathError(SocbuildError):
    code = "E_BAD_PATH"


class DuplicateDefineError(SocbuildError):
    code = "E_DUP_DEFINE"


# --- dependency graph --------------------------------------------------------

class UnresolvedRefError(SocbuildError):
    code = "E_UNRESOLVED"


class CycleError(SocbuildError):
    """A reference cycle among IP blocks; ``cycle`` holds the full path."""

    code = "E_CYCLE"

    def __init__(self, message: str, cycle: list | None = None):
        super().__init__(message)
        self.cycle = cycle or []


class VersionConflictError(SocbuildError):
    code = "E_VERSION_CONFLICT"


class MissingFileError(SocbuildError):
    code = "E_MISSING_FILE"


class DuplicateTargetError(SocbuildError):
    code = "E_DUP_TARGET"


# --- manifests ---------------------------------------------------------------

class ManifestParseError(SocbuildError):
    code = "E_PARSE"


class ManifestSchemaError(SocbuildError):
    code = "E_SCHEMA"


class BadLanguageError(SocbuildError):
    code = "E_BAD_LANG"


class DuplicateVlnvError(SocbuildError):
    code = "E_DUP_VLNV"


# --- fetching ----------------------------------------------------------------

class NetworkError(SocbuildError):
    code = "E_NET"


class ChecksumError(SocbuildError):
    code = "E_CHECKSUM"


class RevisionError(SocbuildError):
    code = "E_REV"


class ExtractError(SocbuildError):
    code = "E_EXTRACT"


class LockfileDivergedError(SocbuildError):
    code = "E_LOCK_DIVERGED"


# --- backends ----------------------------------------------------------------

class DuplicateBackendError(SocbuildError):
    code = "E_DUP_BACKEND"


class NoSuchBackendError(SocbuildError):
    code = "E_NO_BACKEND"


class BadTemplateError(SocbuildError):
    code = "E_BAD_TEMPLATE"


class NoSourcesError(SocbuildError):
    code = "E_NO_SOURCES"


# --- executor ----------------------------------------------------------------

class DuplicateOutputError(SocbuildError):
    code = "E_DUP_OUTPUT"


class TargetCycleError(SocbuildError):
    """A cycle in the target graph; ``cycle`` holds the target-name path."""

    code = "E_CYCLE_TARGETS"

    def __init__(self, message: str, cycle: list[str] | None = None):
        super().__init__(message)
        self.cycle = cycle or []


class UnknownDepError(SocbuildError):
    code = "E_UNKNOWN_DEP"


class ExecutionFailedError(SocbuildError):
    """One or more targets failed; ``report`` is the full RunReport."""

    code = "E_EXEC_FAILED"

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class IoError(SocbuildError):
    code = "E_IO"


# --- test driver -------------------------------------------------------------

class DuplicateTestError(SocbuildError):
    code = "E_DUP_TEST"


class BadFilterError(SocbuildError):
    code = "E_BAD_FILTER"
