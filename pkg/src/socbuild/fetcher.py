"""Fetching remote dependencies into a content-addressed cache.

Dependencies are pinned (git commit or archive sha256) and materialized under
a cache keyed by the pin, so a warm cache never touches the network.  The
resolved pins are persisted in a lockfile whose serialization is
byte-reproducible.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import os
import re
import shutil
import subprocess
import tarfile
import urllib.error
import urllib.request
import zipfile
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Optional

from .errors import (
    ChecksumError,
    ExtractError,
    LockfileDivergedError,
    ManifestParseError,
    ManifestSchemaError,
    NetworkError,
    RevisionError,
)

if TYPE_CHECKING:
    from .manifest import ManifestDoc

LOCKFILE_NAME = "socbuild.lock"
LOCK_VERSION = 1
MAX_DEP_DEPTH = 32

_COMMIT_RE = re.compile(r"[0-9a-f]{7,40}")
_SHA256_RE = re.compile(r"[0-9a-f]{64}")


class FetchKind(Enum):
    GIT = "git"
    TARBALL = "tarball"
    ZIP = "zip"


@dataclass(frozen=True)
class FetchSpec:
    """A fully pinned remote source: a git commit or a digest-checked archive."""

    kind: FetchKind
    url: str
    rev: Optional[str] = None      # required for GIT
    sha256: Optional[str] = None   # required for TARBALL/ZIP
    subdir: Optional[str] = None

    def __post_init__(self):
        if not self.url:
            raise ManifestSchemaError("dependency url must be non-empty")
        if self.kind is FetchKind.GIT:
            if not self.rev or not _COMMIT_RE.fullmatch(self.rev):
                raise ManifestSchemaError(
                    f"git dependency {self.url!r} needs a pinned commit hash, got {self.rev!r}"
                )
            if self.sha256 is not None:
                raise ManifestSchemaError("git dependency takes 'rev', not 'sha256'")
        else:
            if not self.sha256 or not _SHA256_RE.fullmatch(self.sha256.lower()):
                raise ManifestSchemaError(
                    f"archive dependency {self.url!r} needs a sha256 hex digest"
                )
            if self.rev is not None:
                raise ManifestSchemaError("archive dependency takes 'sha256', not 'rev'")
        if self.subdir is not None:
            sub = self.subdir
            if not sub or os.path.isabs(sub) or os.path.normpath(sub).startswith(".."):
                raise ManifestSchemaError(f"dependency subdir must stay inside the tree: {sub!r}")

    @property
    def pin(self) -> str:
        return self.rev if self.kind is FetchKind.GIT else self.sha256.lower()

    def to_json(self) -> dict:
        obj: dict = {"kind": self.kind.value, "url": self.url}
        if self.kind is FetchKind.GIT:
            obj["rev"] = self.rev
        else:
            obj["sha256"] = self.sha256.lower()
        if self.subdir is not None:
            obj["subdir"] = self.subdir
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "FetchSpec":
        return cls(
            kind=FetchKind(obj["kind"]),
            url=obj["url"],
            rev=obj.get("rev"),
            sha256=obj.get("sha256"),
            subdir=obj.get("subdir"),
        )


def cache_key(spec: FetchSpec) -> str:
    """Cache entries are addressed purely by (kind, url, pin); subdir is a view."""
    material = json.dumps([spec.kind.value, spec.url, spec.pin], separators=(",", ":"))
    return hashlib.sha256(material.encode()).hexdigest()


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_tree(root: str) -> str:
    """Deterministic content digest of a directory: relative paths + file bytes."""
    h = hashlib.sha256()
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for fn in sorted(filenames):
            full = os.path.join(dirpath, fn)
            rel = os.path.relpath(full, root)
            h.update(rel.encode())
            h.update(b"\0")
            h.update(_sha256_file(full).encode())
            h.update(b"\0")
    return h.hexdigest()


def _download(url: str, dest: str) -> None:
    # Single seam for all archive transfers; tests patch this to count traffic.
    try:
        with urllib.request.urlopen(url) as resp, open(dest, "wb") as out:
            shutil.copyfileobj(resp, out)
    except (urllib.error.URLError, OSError, ValueError) as e:
        raise NetworkError(f"download failed for {url}: {e}") from e


def _run_git(args: list[str]) -> subprocess.CompletedProcess:
    # Single seam for all git subprocesses; tests patch this to count traffic.
    try:
        return subprocess.run(
            ["git", *args], capture_output=True, text=True, check=False
        )
    except FileNotFoundError as e:
        raise NetworkError("git executable not found on PATH") from e


def _tail(text: str, lines: int = 5) -> str:
    return "\n".join(text.strip().splitlines()[-lines:])


def _fetch_archive(spec: FetchSpec, entry_dir: str, tree_dir: str, offline: bool) -> None:
    archive = os.path.join(entry_dir, "archive")
    if not os.path.exists(archive):
        if offline:
            raise NetworkError(f"offline mode and no cached archive for {spec.url}")
        tmp = archive + ".tmp"
        _download(spec.url, tmp)
        os.replace(tmp, archive)
    actual = _sha256_file(archive)
    if actual != spec.sha256.lower():
        os.remove(archive)  # allow a later retry to re-download
        raise ChecksumError(
            f"{spec.url}: expected sha256 {spec.sha256.lower()} but archive has {actual}"
        )
    tmp_tree = tree_dir + ".tmp"
    if os.path.exists(tmp_tree):
        shutil.rmtree(tmp_tree)
    os.makedirs(tmp_tree)
    try:
        if spec.kind is FetchKind.TARBALL:
            with tarfile.open(archive, "r:*") as tf:
                _check_member_names(m.name for m in tf.getmembers())
                try:
                    tf.extractall(tmp_tree, filter="data")
                except TypeError:  # no filter support on this interpreter
                    tf.extractall(tmp_tree)
        else:
            with zipfile.ZipFile(archive) as zf:
                _check_member_names(zf.namelist())
                zf.extractall(tmp_tree)
    except (tarfile.TarError, zipfile.BadZipFile, OSError) as e:
        shutil.rmtree(tmp_tree, ignore_errors=True)
        raise ExtractError(f"cannot extract {spec.url}: {e}") from e
    os.replace(tmp_tree, tree_dir)


def _check_member_names(names) -> None:
    for name in names:
        norm = os.path.normpath(name)
        if os.path.isabs(norm) or norm.startswith(".."):
            raise ExtractError(f"archive member escapes extraction dir: {name!r}")


def _fetch_git(spec: FetchSpec, tree_dir: str, offline: bool) -> None:
    if offline:
        raise NetworkError(f"offline mode and no cached checkout for {spec.url}")
    tmp_tree = tree_dir + ".tmp"
    if os.path.exists(tmp_tree):
        shutil.rmtree(tmp_tree)
    cp = _run_git(["clone", "--quiet", "--no-checkout", spec.url, tmp_tree])
    if cp.returncode != 0:
        raise NetworkError(f"git clone failed for {spec.url}: {_tail(cp.stderr)}")
    cp = _run_git(["-C", tmp_tree, "checkout", "--quiet", "--detach", spec.rev])
    if cp.returncode != 0:
        shutil.rmtree(tmp_tree, ignore_errors=True)
        raise RevisionError(f"rev {spec.rev} not found in {spec.url}: {_tail(cp.stderr)}")
    cp = _run_git(["-C", tmp_tree, "rev-parse", "HEAD"])
    head = cp.stdout.strip()
    if cp.returncode != 0 or not head.startswith(spec.rev):
        shutil.rmtree(tmp_tree, ignore_errors=True)
        raise RevisionError(f"checked out {head or '<unknown>'}, does not match pin {spec.rev}")
    shutil.rmtree(os.path.join(tmp_tree, ".git"), ignore_errors=True)
    os.replace(tmp_tree, tree_dir)


def _subdir_path(tree_dir: str, spec: FetchSpec) -> str:
    if spec.subdir is None:
        return tree_dir
    path = os.path.normpath(os.path.join(tree_dir, spec.subdir))
    if not os.path.isdir(path):
        raise ExtractError(f"subdir {spec.subdir!r} not found in tree fetched from {spec.url}")
    return path


def fetch_source(spec: FetchSpec, cache_dir: str, offline: bool = False) -> str:
    """Materialize a pinned source in the cache and return its local path.

    Idempotent: if the cache entry exists and is marked verified, no network
    or subprocess activity happens at all.
    """
    cache_dir = os.path.abspath(cache_dir)
    os.makedirs(cache_dir, exist_ok=True)
    key = cache_key(spec)
    entry_dir = os.path.join(cache_dir, key)
    tree_dir = os.path.join(entry_dir, "tree")
    marker = os.path.join(entry_dir, ".verified")
    if os.path.exists(marker) and os.path.isdir(tree_dir):
        return _subdir_path(tree_dir, spec)
    os.makedirs(entry_dir, exist_ok=True)
    lock_path = os.path.join(cache_dir, key + ".lock")
    with open(lock_path, "w") as lock_file:
        fcntl.flock(lock_file, fcntl.LOCK_EX)
        try:
            # re-check after winning the lock: another process may have won the race
            if not (os.path.exists(marker) and os.path.isdir(tree_dir)):
                if os.path.isdir(tree_dir):
                    shutil.rmtree(tree_dir)
                if spec.kind is FetchKind.GIT:
                    _fetch_git(spec, tree_dir, offline)
                else:
                    _fetch_archive(spec, entry_dir, tree_dir, offline)
                with open(marker, "w") as f:
                    f.write(json.dumps(spec.to_json(), sort_keys=True) + "\n")
        finally:
            fcntl.flock(lock_file, fcntl.LOCK_UN)
    return _subdir_path(tree_dir, spec)


@dataclass(frozen=True)
class LockEntry:
    spec: FetchSpec
    tree: str  # content digest of the materialized tree

    def to_json(self) -> dict:
        obj = self.spec.to_json()
        obj["tree"] = self.tree
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "LockEntry":
        tree = obj.get("tree", "")
        spec = FetchSpec.from_json({k: v for k, v in obj.items() if k != "tree"})
        return cls(spec, tree)


@dataclass
class Lockfile:
    """Pinned dependency resolutions, serialized byte-reproducibly."""

    entries: dict[str, LockEntry] = field(default_factory=dict)
    version: int = LOCK_VERSION

    def dumps(self) -> str:
        obj = {
            "version": self.version,
            "entries": {key: e.to_json() for key, e in self.entries.items()},
        }
        return json.dumps(obj, indent=2, sort_keys=True) + "\n"

    def write(self, path: str) -> None:
        data = self.dumps()
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as f:
                if f.read() == data:
                    return
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(data)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "Lockfile":
        try:
            with open(path, "r", encoding="utf-8") as f:
                obj = json.load(f)
        except json.JSONDecodeError as e:
            raise ManifestParseError(f"{path}: invalid lockfile: {e.msg} at line {e.lineno}") from e
        if not isinstance(obj, dict) or obj.get("version") != LOCK_VERSION:
            raise ManifestSchemaError(f"{path}: unsupported lockfile version {obj.get('version')!r}")
        entries = {}
        for key, raw in obj.get("entries", {}).items():
            try:
                entries[key] = LockEntry.from_json(raw)
            except (KeyError, ValueError) as e:
                raise ManifestSchemaError(f"{path}: malformed lock entry {key!r}: {e}") from e
        return cls(entries)


@dataclass
class SyncResult:
    fetched_docs: "list[ManifestDoc]"
    lockfile: Lockfile


def sync(
    docs: "list[ManifestDoc]",
    lockfile_path: str,
    cache_dir: str,
    update: bool = False,
    offline: bool = False,
) -> SyncResult:
    """Fetch every declared dependency (transitively) and write the lockfile.

    With a lockfile present, manifests must agree with the recorded pins;
    divergence is an error unless ``update`` is set, in which case the
    manifest wins and the lockfile is rewritten.
    """
    from .manifest import find_manifest_paths, load_manifest

    old: Optional[Lockfile] = None
    if os.path.exists(lockfile_path):
        old = Lockfile.load(lockfile_path)

    entries: dict[str, LockEntry] = {}
    declared: dict[str, tuple[FetchSpec, str]] = {}  # ref -> (spec, declaring manifest)
    fetched_docs: "list[ManifestDoc]" = []
    queue = deque((doc, 0) for doc in docs)
    while queue:
        doc, depth = queue.popleft()
        if depth > MAX_DEP_DEPTH:
            raise ManifestSchemaError(
                f"dependency chain deeper than {MAX_DEP_DEPTH} (at {doc.path})"
            )
        for ref, spec in doc.dependencies.items():
            key = str(ref)
            if key in declared:
                if declared[key][0] != spec:
                    raise ManifestSchemaError(
                        f"dependency {key} pinned differently by {declared[key][1]} and {doc.path}"
                    )
                continue
            declared[key] = (spec, doc.path)
            locked = old.entries.get(key) if old else None
            if locked is not None and locked.spec != spec and not update:
                raise LockfileDivergedError(
                    f"dependency {key}: manifest pin {spec.pin} disagrees with lockfile pin "
                    f"{locked.spec.pin}; pass --update to accept the manifest"
                )
            tree = fetch_source(spec, cache_dir, offline=offline)
            digest = hash_tree(tree)
            if locked is not None and locked.spec == spec and locked.tree != digest:
                raise ChecksumError(
                    f"dependency {key}: materialized tree digest {digest} does not match "
                    f"lockfile digest {locked.tree}"
                )
            entries[key] = LockEntry(spec, digest)
            for mpath in find_manifest_paths(tree):
                sub = load_manifest(mpath)
                fetched_docs.append(sub)
                queue.append((sub, depth + 1))
    lock = Lockfile(entries)
    lock.write(lockfile_path)
    return SyncResult(fetched_docs, lock)


def materialize_lock(
    lock: Lockfile, cache_dir: str, offline: bool = False
) -> "list[ManifestDoc]":
    """Load manifests from every locked dependency tree (cache-first)."""
    from .manifest import find_manifest_paths, load_manifest

    docs: "list[ManifestDoc]" = []
    for key in sorted(lock.entries):
        tree = fetch_source(lock.entries[key].spec, cache_dir, offline=offline)
        for mpath in find_manifest_paths(tree):
            docs.append(load_manifest(mpath))
    return docs
