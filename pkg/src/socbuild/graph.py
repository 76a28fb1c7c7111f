"""Dependency resolution and hierarchical flattening of IP blocks.

Links between IP blocks form a DAG (diamonds are legal and deduplicated,
true cycles are fatal).  ``resolve`` binds every link reference to a concrete
block; ``flatten`` linearizes the graph dependencies-first, which is the
order every backend reads sources in.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, NamedTuple, Optional

from .errors import (
    CycleError,
    DuplicateTargetError,
    DuplicateVlnvError,
    MissingFileError,
    UnresolvedRefError,
    VersionConflictError,
)
from .model import IpBlock, SourceLanguage, Vlnv, VlnvRef

if TYPE_CHECKING:
    from .executor import Target
    from .manifest import ManifestDoc


@dataclass
class Registry:
    """All known IP blocks, keyed by exact VLNV.

    ``docs`` optionally keeps the manifest document a block came from, for
    consumers that need per-IP metadata beyond the block itself (tests,
    backend pipelines, dependency specs).
    """

    entries: dict[Vlnv, IpBlock] = field(default_factory=dict)
    docs: "dict[Vlnv, ManifestDoc]" = field(default_factory=dict)

    def insert(self, block: IpBlock, doc: "Optional[ManifestDoc]" = None) -> None:
        if block.id in self.entries:
            raise DuplicateVlnvError(f"duplicate IP {block.id}")
        self.entries[block.id] = block
        if doc is not None:
            self.docs[block.id] = doc

    def get(self, vlnv: Vlnv) -> Optional[IpBlock]:
        return self.entries.get(vlnv)

    def find(self, ref: VlnvRef) -> list[IpBlock]:
        """All registered blocks the reference matches (any number of versions)."""
        return [b for b in self.entries.values() if ref.matches(b.id)]


class SourceEntry(NamedTuple):
    ip: Vlnv
    lang: SourceLanguage
    path: str


@dataclass
class PropertyView:
    """Include dirs and defines merged across the flattened hierarchy."""

    include_dirs: list[str]
    defines: dict[str, Optional[str]]
    warnings: list[str]


@dataclass
class ResolvedGraph:
    """An acyclic IP graph with every link bound to a concrete block.

    ``nodes`` holds exactly the blocks reachable from ``root``; ``edges``
    lists each node's bound links in declaration order.
    """

    root: Vlnv
    nodes: dict[Vlnv, IpBlock]
    edges: dict[Vlnv, list[Vlnv]]

    def flatten(self) -> list[Vlnv]:
        """Dependencies-first linearization.

        Post-order depth-first traversal from the root, visiting links in
        declaration order and emitting each node at its first completion
        only.  Deterministic: no sorting, purely structural.
        """
        out: list[Vlnv] = []
        seen: set[Vlnv] = set()

        def visit(v: Vlnv) -> None:
            if v in seen:
                return
            seen.add(v)
            for dep in self.edges[v]:
                visit(dep)
            out.append(v)

        visit(self.root)
        return out

    def collect_sources(
        self,
        langs: Iterable[SourceLanguage],
        check_exists: bool = True,
    ) -> list[SourceEntry]:
        """All matching source files in hierarchical order.

        Per IP, languages come out in enum declaration order, then fileset
        append order.  No cross-IP dedup: two IPs listing the same file both
        contribute an entry.
        """
        wanted = set(langs)
        out: list[SourceEntry] = []
        for vlnv in self.flatten():
            block = self.nodes[vlnv]
            for lang in SourceLanguage:
                if lang not in wanted:
                    continue
                for path in block.filesets.get(lang, []):
                    if check_exists and not os.path.isfile(path):
                        raise MissingFileError(f"{vlnv}: source file not found: {path}")
                    out.append(SourceEntry(vlnv, lang, path))
        return out

    def collect_properties(self, lang: SourceLanguage) -> PropertyView:
        """Merge include dirs and defines for one language across the hierarchy.

        Include dirs keep their first (deepest) occurrence.  A define key set
        by a more dependent IP overrides the dependency's value, and the
        merge records a warning naming both.
        """
        include_dirs: list[str] = []
        defines: dict[str, Optional[str]] = {}
        origin: dict[str, Vlnv] = {}
        warnings: list[str] = []
        for vlnv in self.flatten():
            block = self.nodes[vlnv]
            for d in block.include_dirs.get(lang, []):
                if d not in include_dirs:
                    include_dirs.append(d)
            for key, value in block.defines.get(lang, {}).items():
                if key in defines:
                    warnings.append(
                        f"define {key!r} from {origin[key]} (={defines[key]!r}) "
                        f"overridden by {vlnv} (={value!r})"
                    )
                defines[key] = value
                origin[key] = vlnv
        return PropertyView(include_dirs, defines, warnings)

    def collect_targets(self) -> "list[Target]":
        """Targets attached to any reachable IP, in hierarchical order."""
        out: "list[Target]" = []
        owner: dict[str, Vlnv] = {}
        for vlnv in self.flatten():
            for target in self.nodes[vlnv].targets:
                if target.name in owner:
                    raise DuplicateTargetError(
                        f"target {target.name!r} attached by both {owner[target.name]} and {vlnv}"
                    )
                owner[target.name] = vlnv
                out.append(target)
        return out

    def to_dot(self) -> str:
        """DOT digraph of the resolved hierarchy, byte-deterministic."""
        lines = ["digraph socbuild {"]
        order = self.flatten()
        for vlnv in order:
            lines.append(f'  "{vlnv}";')
        for vlnv in order:
            for dep in self.edges[vlnv]:
                lines.append(f'  "{vlnv}" -> "{dep}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def resolve(registry: Registry, root: VlnvRef) -> ResolvedGraph:
    """Bind all references reachable from ``root`` into a ResolvedGraph.

    Exact references bind to that version; any-version references bind to the
    highest registered version.  Two different bound versions of the same
    (vendor, library, name) are a conflict, and any reference cycle is fatal.
    """
    nodes: dict[Vlnv, IpBlock] = {}
    edges: dict[Vlnv, list[Vlnv]] = {}
    chosen: dict[tuple[str, str, str], tuple[Vlnv, str]] = {}

    def bind(ref: VlnvRef, requirer: str) -> IpBlock:
        candidates = registry.find(ref)
        if not candidates:
            raise UnresolvedRefError(f"{requirer}: no IP matches {ref}")
        block = max(candidates, key=lambda b: b.id.version)
        prev = chosen.get(block.id.triple)
        if prev is not None and prev[0] != block.id:
            raise VersionConflictError(
                f"{block.id.vendor}::{block.id.library}::{block.id.name} required at "
                f"{prev[0]} (by {prev[1]}) and {block.id} (by {requirer})"
            )
        if prev is None:
            chosen[block.id.triple] = (block.id, requirer)
        return block

    stack: list[Vlnv] = []

    def visit(block: IpBlock) -> None:
        if block.id in stack:
            cycle = stack[stack.index(block.id):] + [block.id]
            raise CycleError(
                "dependency cycle: " + " -> ".join(str(v) for v in cycle), cycle
            )
        if block.id in nodes:
            return
        stack.append(block.id)
        nodes[block.id] = block
        bound: list[Vlnv] = []
        for ref in block.links:
            dep = bind(ref, str(block.id))
            bound.append(dep.id)
            visit(dep)
        edges[block.id] = bound
        stack.pop()

    root_block = bind(root, "<root request>")
    visit(root_block)
    return ResolvedGraph(root_block.id, nodes, edges)
