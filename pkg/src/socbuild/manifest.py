"""Declarative per-IP manifests (``ip.json``) and workspace discovery.

One manifest describes one IP block: identity, filesets, properties, links,
remote dependencies, tests, and the backend pipeline to run when the IP is
built as a root.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import (
    BadPathError,
    DuplicateVlnvError,
    ManifestParseError,
    ManifestSchemaError,
    SocbuildError,
)
from .fetcher import FetchKind, FetchSpec
from .graph import Registry
from .model import (
    IpBlock,
    SourceLanguage,
    VlnvRef,
    is_identifier,
    new_ip,
    parse_vlnv,
    parse_vlnv_ref,
)

MANIFEST_NAME = "ip.json"

_TOP_KEYS = {
    "ip", "sources", "include_dirs", "defines", "links",
    "dependencies", "tests", "backends",
}
_TEST_KEYS = {"name", "command", "pass_regex", "expected_exit"}
_BACKEND_KEYS = {"name", "options"}
_DEP_KEYS = {"git", "tarball", "zip", "rev", "sha256", "subdir", "unused"}
_DEFINE_KEY_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


@dataclass(frozen=True)
class TestDecl:
    """One manifest-declared test: a command plus its pass criteria."""

    name: str
    command: tuple[str, ...]
    pass_regex: Optional[str] = None
    expected_exit: int = 0


@dataclass(frozen=True)
class BackendInvocation:
    name: str
    options: dict  # JSON-shaped values; each backend validates its own options


@dataclass
class ManifestDoc:
    """A parsed and validated manifest, with its derived IP block."""

    path: str
    dir: str
    block: IpBlock
    dependencies: dict[VlnvRef, FetchSpec] = field(default_factory=dict)
    tests: list[TestDecl] = field(default_factory=list)
    backends: list[BackendInvocation] = field(default_factory=list)


def _want(obj: Any, kind: type, what: str) -> Any:
    if kind is int and isinstance(obj, bool):
        raise ManifestSchemaError(f"{what} must be an integer, got a boolean")
    if not isinstance(obj, kind):
        raise ManifestSchemaError(f"{what} must be {kind.__name__}, got {type(obj).__name__}")
    return obj


def _check_keys(obj: dict, allowed: set[str], what: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ManifestSchemaError(f"unknown key(s) in {what}: {', '.join(unknown)}")


def _resolve_inside(base: str, rel: Any, role: str) -> str:
    if not isinstance(rel, str) or not rel:
        raise BadPathError(f"{role} must be a non-empty relative path, got {rel!r}")
    if os.path.isabs(rel):
        raise BadPathError(f"{role} must be relative to the manifest directory: {rel!r}")
    path = os.path.normpath(os.path.join(base, rel))
    if path != base and not path.startswith(base + os.sep):
        raise BadPathError(f"{role} escapes the manifest directory: {rel!r}")
    return path


def _parse_lang_map(obj: Any, what: str) -> dict[SourceLanguage, Any]:
    out: dict[SourceLanguage, Any] = {}
    for key, value in _want(obj, dict, what).items():
        out[SourceLanguage.from_key(key)] = value
    return out


def _parse_dependency(ref_text: str, obj: Any) -> tuple[VlnvRef, FetchSpec, bool]:
    ref = parse_vlnv_ref(ref_text)
    spec_obj = _want(obj, dict, f"dependency {ref_text!r}")
    _check_keys(spec_obj, _DEP_KEYS, f"dependency {ref_text!r}")
    kinds = [k for k in ("git", "tarball", "zip") if k in spec_obj]
    if len(kinds) != 1:
        raise ManifestSchemaError(
            f"dependency {ref_text!r} must have exactly one of git/tarball/zip"
        )
    kind = FetchKind(kinds[0])
    url = _want(spec_obj[kinds[0]], str, f"dependency {ref_text!r} url")
    rev = spec_obj.get("rev")
    sha256 = spec_obj.get("sha256")
    subdir = spec_obj.get("subdir")
    unused = spec_obj.get("unused", False)
    if not isinstance(unused, bool):
        raise ManifestSchemaError(f"dependency {ref_text!r}: 'unused' must be a boolean")
    spec = FetchSpec(kind=kind, url=url, rev=rev, sha256=sha256, subdir=subdir)
    return ref, spec, unused


def _parse_test(obj: Any, index: int, seen: set[str]) -> TestDecl:
    tobj = _want(obj, dict, f"tests[{index}]")
    _check_keys(tobj, _TEST_KEYS, f"tests[{index}]")
    if "name" not in tobj or "command" not in tobj:
        raise ManifestSchemaError(f"tests[{index}] needs 'name' and 'command'")
    name = _want(tobj["name"], str, f"tests[{index}].name")
    if not is_identifier(name):
        raise ManifestSchemaError(f"tests[{index}].name is not a valid identifier: {name!r}")
    if name in seen:
        raise ManifestSchemaError(f"duplicate test name {name!r}")
    seen.add(name)
    command = _want(tobj["command"], list, f"test {name!r} command")
    if not command or not all(isinstance(a, str) for a in command):
        raise ManifestSchemaError(f"test {name!r} command must be a non-empty list of strings")
    pass_regex = tobj.get("pass_regex")
    if pass_regex is not None:
        _want(pass_regex, str, f"test {name!r} pass_regex")
        try:
            re.compile(pass_regex)
        except re.error as e:
            raise ManifestSchemaError(f"test {name!r} pass_regex is invalid: {e}") from e
    expected_exit = _want(tobj.get("expected_exit", 0), int, f"test {name!r} expected_exit")
    return TestDecl(name, tuple(command), pass_regex, expected_exit)


def _parse_backend(obj: Any, index: int) -> BackendInvocation:
    bobj = _want(obj, dict, f"backends[{index}]")
    _check_keys(bobj, _BACKEND_KEYS, f"backends[{index}]")
    if "name" not in bobj:
        raise ManifestSchemaError(f"backends[{index}] needs 'name'")
    name = _want(bobj["name"], str, f"backends[{index}].name")
    options = _want(bobj.get("options", {}), dict, f"backend {name!r} options")
    for key in options:
        _want(key, str, f"backend {name!r} option key")
    return BackendInvocation(name, dict(options))


def _load(path: str) -> ManifestDoc:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ManifestParseError(f"{e.msg} at line {e.lineno} column {e.colno}") from e
    top = _want(raw, dict, "manifest")
    _check_keys(top, _TOP_KEYS, "manifest")
    if "ip" not in top:
        raise ManifestSchemaError("manifest needs an 'ip' identity")
    vlnv = parse_vlnv(_want(top["ip"], str, "'ip'"))
    base = os.path.dirname(os.path.abspath(path))

    block = new_ip(vlnv)
    for lang, paths in _parse_lang_map(top.get("sources", {}), "'sources'").items():
        _want(paths, list, f"sources for {lang.value}")
        block.add_sources(
            lang, [_resolve_inside(base, p, f"{lang.value} source") for p in paths]
        )
    for lang, dirs in _parse_lang_map(top.get("include_dirs", {}), "'include_dirs'").items():
        _want(dirs, list, f"include_dirs for {lang.value}")
        for d in dirs:
            block.add_include_dir(lang, _resolve_inside(base, d, f"{lang.value} include dir"))
    for lang, table in _parse_lang_map(top.get("defines", {}), "'defines'").items():
        _want(table, dict, f"defines for {lang.value}")
        for key, value in table.items():
            if not _DEFINE_KEY_RE.fullmatch(key):
                raise ManifestSchemaError(f"invalid define key {key!r}")
            if value is not None:
                _want(value, str, f"define {key!r} value")
            block.add_define(lang, key, value)
    links = _want(top.get("links", []), list, "'links'")
    for text_ref in links:
        block.link(parse_vlnv_ref(_want(text_ref, str, "link")))

    dependencies: dict[VlnvRef, FetchSpec] = {}
    for ref_text, spec_obj in _want(top.get("dependencies", {}), dict, "'dependencies'").items():
        ref, spec, unused = _parse_dependency(ref_text, spec_obj)
        if ref not in block.links and not unused:
            raise ManifestSchemaError(
                f"dependency {ref_text!r} is not linked; link it or flag it \"unused\": true"
            )
        dependencies[ref] = spec

    tests: list[TestDecl] = []
    seen_tests: set[str] = set()
    for i, tobj in enumerate(_want(top.get("tests", []), list, "'tests'")):
        tests.append(_parse_test(tobj, i, seen_tests))

    backends = [
        _parse_backend(bobj, i)
        for i, bobj in enumerate(_want(top.get("backends", []), list, "'backends'"))
    ]

    return ManifestDoc(
        path=os.path.abspath(path),
        dir=base,
        block=block,
        dependencies=dependencies,
        tests=tests,
        backends=backends,
    )


def load_manifest(path: str) -> ManifestDoc:
    """Parse and validate one manifest file; errors carry the file path."""
    try:
        return _load(path)
    except SocbuildError as e:
        message = e.args[0] if e.args else str(e)
        raise type(e)(f"{path}: {message}") from e


def find_manifest_paths(root: str, skip_paths: Optional[set[str]] = None) -> list[str]:
    """All ``ip.json`` paths below ``root``, sorted, skipping caches and VCS dirs."""
    root = os.path.abspath(root)
    skip_abs = {os.path.abspath(p) for p in (skip_paths or set())}
    skip_names = {".git", ".socbuild"}
    found: list[str] = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(
            d for d in dirnames
            if d not in skip_names and os.path.join(dirpath, d) not in skip_abs
        )
        if MANIFEST_NAME in filenames:
            found.append(os.path.join(dirpath, MANIFEST_NAME))
    return sorted(found)


def build_registry(workspace_root: str, skip_paths: Optional[set[str]] = None) -> Registry:
    """Discover and load every manifest in a workspace into a Registry."""
    registry = Registry()
    declared_at: dict = {}
    for mpath in find_manifest_paths(workspace_root, skip_paths):
        doc = load_manifest(mpath)
        if doc.block.id in declared_at:
            raise DuplicateVlnvError(
                f"{doc.block.id} declared by both {declared_at[doc.block.id]} and {mpath}"
            )
        declared_at[doc.block.id] = mpath
        registry.insert(doc.block, doc)
    return registry
