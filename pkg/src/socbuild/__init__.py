"""socbuild: a build orchestrator for VLNV-named hardware/software IP blocks.

IP blocks carry per-language filesets and properties, link into a dependency
graph, flatten in hierarchical order, and feed pluggable backends that emit
targets for an incremental parallel executor.
"""

from .backends import (
    BackendContext,
    BackendResult,
    list_backends,
    register_backend,
    run_backend,
    run_pipeline,
    sv2v_transform,
)
from .errors import SocbuildError
from .executor import (
    RunReport,
    StampDb,
    Target,
    TargetGraph,
    TargetStatus,
    assemble_plan,
    execute,
    hash_content,
    is_dirty,
)
from .fetcher import FetchKind, FetchSpec, Lockfile, fetch_source, materialize_lock, sync
from .graph import Registry, ResolvedGraph, resolve
from .manifest import BackendInvocation, ManifestDoc, TestDecl, build_registry, load_manifest
from .model import (
    IpBlock,
    PropertyKind,
    SourceLanguage,
    Vlnv,
    VlnvRef,
    format_vlnv,
    matches_ref,
    new_ip,
    parse_vlnv,
    parse_vlnv_ref,
    version_cmp,
)
from .testdrv import TestCase, TestReport, TestStatus, collect_tests, run_tests

__version__ = "0.1.0"

__all__ = [
    "BackendContext",
    "BackendInvocation",
    "BackendResult",
    "FetchKind",
    "FetchSpec",
    "IpBlock",
    "Lockfile",
    "ManifestDoc",
    "PropertyKind",
    "Registry",
    "ResolvedGraph",
    "RunReport",
    "SocbuildError",
    "SourceLanguage",
    "StampDb",
    "Target",
    "TargetGraph",
    "TargetStatus",
    "TestCase",
    "TestDecl",
    "TestReport",
    "TestStatus",
    "Vlnv",
    "VlnvRef",
    "assemble_plan",
    "build_registry",
    "collect_tests",
    "execute",
    "fetch_source",
    "format_vlnv",
    "hash_content",
    "is_dirty",
    "list_backends",
    "load_manifest",
    "materialize_lock",
    "matches_ref",
    "new_ip",
    "parse_vlnv",
    "parse_vlnv_ref",
    "register_backend",
    "resolve",
    "run_backend",
    "run_pipeline",
    "run_tests",
    "sv2v_transform",
    "sync",
    "version_cmp",
]
