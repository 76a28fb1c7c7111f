"""VLNV identities and the IP block container.

An IP block never builds anything by itself: it carries per-language source
filesets, include directories, compile defines, links to other blocks, and
optionally attached build targets.  Backends read this information later to
assemble tool command lines.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Optional

from .errors import (
    ArityError,
    BadIdentifierError,
    BadLanguageError,
    BadPathError,
    BadVersionError,
    DuplicateDefineError,
    DuplicateSourceError,
    InternalError,
)

if TYPE_CHECKING:
    from .executor import Target

Version = tuple[int, int, int]

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_-]*")
# strict numeric components: no signs, no leading zeros
_NUM_RE = re.compile(r"0|[1-9][0-9]*")


def is_identifier(text: str) -> bool:
    """True if ``text`` is a valid socbuild identifier (names, target names)."""
    return bool(_IDENT_RE.fullmatch(text))


def _check_identifier(text: str, role: str) -> str:
    if not is_identifier(text):
        raise BadIdentifierError(f"invalid {role} {text!r}")
    return text


def parse_version(text: str) -> Version:
    """Parse a strict ``MAJOR.MINOR.PATCH`` version string."""
    parts = text.split(".")
    if len(parts) != 3 or not all(_NUM_RE.fullmatch(p) for p in parts):
        raise BadVersionError(f"invalid version {text!r}, expected MAJOR.MINOR.PATCH")
    major, minor, patch = (int(p) for p in parts)
    return (major, minor, patch)


def format_version(version: Version) -> str:
    return "{}.{}.{}".format(*version)


def version_cmp(a: Version, b: Version) -> int:
    """Total order on version triples: -1, 0 or 1 (component-wise integers)."""
    if a == b:
        return 0
    return -1 if a < b else 1


def _check_version_triple(version) -> Version:
    ok = (
        isinstance(version, tuple)
        and len(version) == 3
        and all(isinstance(c, int) and c >= 0 for c in version)
    )
    if not ok:
        raise BadVersionError(f"invalid version triple {version!r}")
    return version


@dataclass(frozen=True)
class Vlnv:
    """Fully-qualified IP identity: Vendor, Library, Name, Version."""

    vendor: str
    library: str
    name: str
    version: Version

    def __post_init__(self):
        _check_identifier(self.vendor, "vendor")
        _check_identifier(self.library, "library")
        _check_identifier(self.name, "name")
        _check_version_triple(self.version)

    def __str__(self) -> str:
        return f"{self.vendor}::{self.library}::{self.name}::{format_version(self.version)}"

    @property
    def triple(self) -> tuple[str, str, str]:
        """The version-less (vendor, library, name) key."""
        return (self.vendor, self.library, self.name)

    def sort_key(self):
        return (self.vendor, self.library, self.name, self.version)


@dataclass(frozen=True)
class VlnvRef:
    """A reference to an IP block, either version-exact or any-version."""

    vendor: str
    library: str
    name: str
    version: Optional[Version] = None  # None means "any version"

    def __post_init__(self):
        _check_identifier(self.vendor, "vendor")
        _check_identifier(self.library, "library")
        _check_identifier(self.name, "name")
        if self.version is not None:
            _check_version_triple(self.version)

    def __str__(self) -> str:
        base = f"{self.vendor}::{self.library}::{self.name}"
        if self.version is None:
            return base
        return f"{base}::{format_version(self.version)}"

    @property
    def triple(self) -> tuple[str, str, str]:
        return (self.vendor, self.library, self.name)

    def matches(self, v: Vlnv) -> bool:
        """True iff vendor/library/name match and the version is compatible."""
        if self.triple != v.triple:
            return False
        return self.version is None or self.version == v.version


def parse_vlnv(text: str) -> Vlnv:
    """Parse a canonical ``vendor::library::name::X.Y.Z`` string."""
    parts = text.split("::")
    if len(parts) != 4:
        raise ArityError(f"expected 4 '::'-separated components, got {len(parts)}: {text!r}")
    vendor, library, name, version = parts
    return Vlnv(
        _check_identifier(vendor, "vendor"),
        _check_identifier(library, "library"),
        _check_identifier(name, "name"),
        parse_version(version),
    )


def format_vlnv(v: Vlnv) -> str:
    """Canonical string form; ``parse_vlnv(format_vlnv(v)) == v``."""
    return str(v)


def parse_vlnv_ref(text: str) -> VlnvRef:
    """Parse a reference: 3 components match any version, 4 are exact."""
    parts = text.split("::")
    if len(parts) == 3:
        vendor, library, name = parts
        version = None
    elif len(parts) == 4:
        vendor, library, name = parts[:3]
        version = parse_version(parts[3])
    else:
        raise ArityError(f"expected 3 or 4 '::'-separated components, got {len(parts)}: {text!r}")
    return VlnvRef(
        _check_identifier(vendor, "vendor"),
        _check_identifier(library, "library"),
        _check_identifier(name, "name"),
        version,
    )


def matches_ref(ref: VlnvRef, v: Vlnv) -> bool:
    return ref.matches(v)


class SourceLanguage(Enum):
    """The closed set of source languages an IP block may carry.

    Declaration order is the canonical emission order when several languages
    are collected from one IP.
    """

    VERILOG = "verilog"
    SYSTEMVERILOG = "systemverilog"
    VHDL = "vhdl"
    SYSTEMRDL = "systemrdl"
    C = "c"
    CPP = "cpp"
    ASM = "asm"

    @classmethod
    def from_key(cls, key: str) -> "SourceLanguage":
        for lang in cls:
            if lang.value == key:
                return lang
        known = ", ".join(l.value for l in cls)
        raise BadLanguageError(f"unknown source language {key!r} (known: {known})")


class PropertyKind(Enum):
    INCLUDE_DIR = "include_dir"
    DEFINE = "define"


def _check_abs_norm(path: str, role: str) -> str:
    if not path:
        raise BadPathError(f"empty {role} path")
    if not os.path.isabs(path) or os.path.normpath(path) != path:
        raise BadPathError(f"{role} path must be absolute and normalized: {path!r}")
    return path


@dataclass
class IpBlock:
    """A property-carrying IP library keyed by its VLNV.

    Mutable only during construction (manifest loading or direct API use);
    afterwards treated as immutable and safe to share between threads.
    """

    id: Vlnv
    filesets: dict[SourceLanguage, list[str]] = field(default_factory=dict)
    include_dirs: dict[SourceLanguage, list[str]] = field(default_factory=dict)
    defines: dict[SourceLanguage, dict[str, Optional[str]]] = field(default_factory=dict)
    links: list[VlnvRef] = field(default_factory=list)
    targets: "list[Target]" = field(default_factory=list)

    def add_sources(self, lang: SourceLanguage, paths: Iterable[str]) -> "IpBlock":
        """Append source files to the per-language fileset, keeping order.

        Paths must already be absolute and normalized.  A path may appear in
        at most one position per (IP, language) fileset; the same path under a
        different language is allowed.
        """
        fileset = self.filesets.setdefault(lang, [])
        for path in paths:
            _check_abs_norm(path, "source")
            if path in fileset:
                raise DuplicateSourceError(
                    f"{self.id}: duplicate {lang.value} source {path!r}"
                )
            fileset.append(path)
        return self

    def add_include_dir(self, lang: SourceLanguage, path: str) -> "IpBlock":
        """Append an include directory; repeating the same dir is a no-op."""
        _check_abs_norm(path, "include dir")
        dirs = self.include_dirs.setdefault(lang, [])
        if path not in dirs:
            dirs.append(path)
        return self

    def add_define(self, lang: SourceLanguage, key: str, value: Optional[str] = None) -> "IpBlock":
        """Add a compile define; redefining a key anywhere in this IP is an error.

        A ``None`` value is a flag-style define (rendered as bare ``-DKEY`` /
        ``+define+KEY`` by backends).
        """
        if not key:
            raise DuplicateDefineError(f"{self.id}: empty define key")
        for other_lang, table in self.defines.items():
            if key in table:
                raise DuplicateDefineError(
                    f"{self.id}: define {key!r} already set for {other_lang.value}"
                )
        self.defines.setdefault(lang, {})[key] = value
        return self

    def add_property(self, lang: SourceLanguage, kind: PropertyKind, value) -> "IpBlock":
        """Kind-dispatched property attachment (include dir or define)."""
        if kind is PropertyKind.INCLUDE_DIR:
            return self.add_include_dir(lang, value)
        if kind is PropertyKind.DEFINE:
            key, val = value if isinstance(value, tuple) else (value, None)
            return self.add_define(lang, key, val)
        raise InternalError(f"unknown property kind {kind!r}")  # pragma: no cover

    def link(self, ref: VlnvRef) -> "IpBlock":
        """Record a dependency edge; linking an identical ref twice is a no-op."""
        if ref not in self.links:
            self.links.append(ref)
        return self

    def add_target(self, target: "Target") -> "IpBlock":
        self.targets.append(target)
        return self


def new_ip(id: Vlnv) -> IpBlock:
    """Create an empty IP block for the given identity."""
    return IpBlock(id)
