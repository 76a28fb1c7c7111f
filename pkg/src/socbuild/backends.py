"""Backend functions: turn a resolved IP graph into build targets.

A backend reads the flattened hierarchy through an overlay view of the
filesets and emits targets.  It may also rewrite the overlay (the sv2v
backend swaps SystemVerilog entries for generated Verilog ones), so later
backends in the same pipeline see the transformed filesets while the
underlying IP blocks stay untouched.
"""

from __future__ import annotations

import base64
import json
import os
import re
import sys
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from ._sv2v_tool import transform as sv2v_transform
from .errors import (
    BadTemplateError,
    DuplicateBackendError,
    InternalError,
    ManifestSchemaError,
    MissingFileError,
    NoSourcesError,
    NoSuchBackendError,
    SocbuildError,
)
from .executor import Target
from .graph import PropertyView, ResolvedGraph, SourceEntry
from .model import SourceLanguage, Vlnv, is_identifier

HDL_LANGS = (
    SourceLanguage.VERILOG,
    SourceLanguage.SYSTEMVERILOG,
    SourceLanguage.VHDL,
)
SOFT_LANGS = (SourceLanguage.C, SourceLanguage.CPP, SourceLanguage.ASM)

# one-liner used as a target command to rewrite a plan-computed file verbatim
_B64_WRITER = "import base64,sys; open(sys.argv[1],'wb').write(base64.b64decode(sys.argv[2]))"


@dataclass
class BackendResult:
    targets: list[Target] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


@dataclass
class BackendContext:
    """Everything a backend sees: the graph, an overlay of filesets, options.

    ``fileset_view`` starts as a copy of every node's filesets; backends
    mutate only the overlay.  ``planned_outputs`` accumulates the outputs of
    targets emitted earlier in the pipeline, so a file that will exist at
    build time counts as present.
    """

    graph: ResolvedGraph
    build_dir: str
    options: dict = field(default_factory=dict)
    fileset_view: dict[Vlnv, dict[SourceLanguage, list[str]]] = field(init=False)
    planned_outputs: set[str] = field(init=False, default_factory=set)

    def __post_init__(self):
        self.build_dir = os.path.abspath(self.build_dir)
        self.fileset_view = {
            vlnv: {lang: list(paths) for lang, paths in block.filesets.items()}
            for vlnv, block in self.graph.nodes.items()
        }

    @property
    def root(self) -> Vlnv:
        return self.graph.root

    def sources(
        self,
        langs: Optional[Iterable[SourceLanguage]] = None,
        check_exists: bool = True,
    ) -> list[SourceEntry]:
        """Overlay-aware source collection in hierarchical order."""
        wanted = set(langs) if langs is not None else set(SourceLanguage)
        out: list[SourceEntry] = []
        for vlnv in self.graph.flatten():
            view = self.fileset_view[vlnv]
            for lang in SourceLanguage:
                if lang not in wanted:
                    continue
                for path in view.get(lang, []):
                    if check_exists and not os.path.isfile(path) and path not in self.planned_outputs:
                        raise MissingFileError(f"{vlnv}: source file not found: {path}")
                    out.append(SourceEntry(vlnv, lang, path))
        return out

    def properties(self, lang: SourceLanguage) -> PropertyView:
        return self.graph.collect_properties(lang)

    def note_targets(self, result: BackendResult) -> None:
        for target in result.targets:
            self.planned_outputs.update(target.outputs)


BackendFn = Callable[[BackendContext], BackendResult]

_BACKENDS: dict[str, BackendFn] = {}


def register_backend(name: str, fn: BackendFn) -> None:
    """Make a backend invocable by name from manifests and the CLI."""
    if not is_identifier(name):
        raise ManifestSchemaError(f"backend name is not a valid identifier: {name!r}")
    if name in _BACKENDS:
        raise DuplicateBackendError(f"backend {name!r} already registered")
    _BACKENDS[name] = fn


def get_backend(name: str) -> BackendFn:
    try:
        return _BACKENDS[name]
    except KeyError:
        raise NoSuchBackendError(
            f"no backend named {name!r} (known: {', '.join(list_backends())})"
        ) from None


def list_backends() -> list[str]:
    return sorted(_BACKENDS)


def run_backend(name: str, ctx: BackendContext) -> BackendResult:
    """Invoke one backend and fold its outputs into the pipeline state."""
    fn = get_backend(name)
    try:
        result = fn(ctx)
    except SocbuildError as e:
        message = e.args[0] if e.args else str(e)
        raise type(e)(f"{name}: {message}") from e
    produced = {p for t in result.targets for p in t.outputs}
    for artifact in result.artifacts:
        if artifact not in produced:
            raise InternalError(
                f"backend {name!r} declared artifact {artifact!r} that no emitted target produces"
            )
    ctx.note_targets(result)
    return result


def run_pipeline(ctx: BackendContext, invocations) -> tuple[list[Target], list[str]]:
    """Run backends in declaration order over one shared overlay."""
    targets: list[Target] = []
    warnings: list[str] = []
    for inv in invocations:
        ctx.options = dict(inv.options)
        result = run_backend(inv.name, ctx)
        targets.extend(result.targets)
        warnings.extend(result.warnings)
    return targets, warnings


def _langs_option(ctx: BackendContext, default: Iterable[SourceLanguage]) -> list[SourceLanguage]:
    raw = ctx.options.get("languages")
    if raw is None:
        return list(default)
    if isinstance(raw, str):
        keys = [k for k in raw.split(",") if k]
    elif isinstance(raw, list) and all(isinstance(k, str) for k in raw):
        keys = raw
    else:
        raise ManifestSchemaError(f"'languages' must be a list or comma string, got {raw!r}")
    return [SourceLanguage.from_key(k) for k in keys]


def _merged_properties(ctx: BackendContext, langs: Iterable[SourceLanguage]) -> PropertyView:
    wanted = set(langs)
    include_dirs: list[str] = []
    defines: dict[str, Optional[str]] = {}
    warnings: list[str] = []
    for lang in SourceLanguage:
        if lang not in wanted:
            continue
        view = ctx.properties(lang)
        warnings.extend(view.warnings)
        for d in view.include_dirs:
            if d not in include_dirs:
                include_dirs.append(d)
        for key, value in view.defines.items():
            if key in defines and defines[key] != value:
                warnings.append(
                    f"define {key!r} differs across languages; keeping {value!r}"
                )
            defines[key] = value
    return PropertyView(include_dirs, defines, warnings)


def _define_arg(key: str, value: Optional[str], prefix: str) -> str:
    return f"{prefix}{key}" if value is None else f"{prefix}{key}={value}"


def _writer_target(name: str, out_path: str, content: bytes, inputs: list[str], build_dir: str) -> Target:
    payload = base64.b64encode(content).decode("ascii")
    return Target(
        name=name,
        command=[sys.executable, "-c", _B64_WRITER, out_path, payload],
        inputs=list(inputs),
        outputs=[out_path],
        working_dir=build_dir,
    )


def builtin_filelist(ctx: BackendContext) -> BackendResult:
    """Emit an EDA filelist (.f) or its JSON equivalent for the whole design.

    Lines come out as ``+incdir+DIR``, ``+define+KEY[=VAL]``, then one
    absolute source path per line in hierarchical order.  The file is written
    at plan time and also produced by a target so builds refresh it when
    sources change.
    """
    fmt = ctx.options.get("format", "f")
    if fmt not in ("f", "json"):
        raise ManifestSchemaError(f"filelist format must be 'f' or 'json', got {fmt!r}")
    langs = _langs_option(ctx, HDL_LANGS)
    props = _merged_properties(ctx, langs)
    paths = [e.path for e in ctx.sources(langs)]

    if fmt == "f":
        lines = [f"+incdir+{d}" for d in props.include_dirs]
        lines += [_define_arg(k, v, "+define+") for k, v in props.defines.items()]
        lines += paths
        content = ("\n".join(lines) + "\n" if lines else "").encode()
        out_path = os.path.join(ctx.build_dir, f"{ctx.root.name}.f")
    else:
        obj = {"incdirs": props.include_dirs, "defines": props.defines, "sources": paths}
        content = (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()
        out_path = os.path.join(ctx.build_dir, f"{ctx.root.name}.json")

    os.makedirs(ctx.build_dir, exist_ok=True)
    with open(out_path, "wb") as f:
        f.write(content)
    target = _writer_target(
        f"filelist-{ctx.root.name}", out_path, content, paths, ctx.build_dir
    )
    return BackendResult([target], [out_path], list(props.warnings))


_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)(?::([^{}]*))?\}")
_SPLICE_NAMES = ("sources", "incdirs", "defines")


def builtin_tool_cmd(ctx: BackendContext) -> BackendResult:
    """Emit one target from an argv template with placeholder expansion.

    ``{sources}`` / ``{incdirs:PREFIX}`` / ``{defines:PREFIX}`` must each be
    a whole argument and splice into many; ``{build_dir}`` and ``{root}``
    substitute inside any argument.
    """
    template = ctx.options.get("template")
    if not isinstance(template, list) or not template or not all(isinstance(a, str) for a in template):
        raise BadTemplateError("'template' must be a non-empty list of strings")
    langs = _langs_option(ctx, HDL_LANGS)
    props = _merged_properties(ctx, langs)
    paths = [e.path for e in ctx.sources(langs)]

    def literal(m: re.Match) -> str:
        name, prefix = m.group(1), m.group(2)
        if name in _SPLICE_NAMES:
            raise BadTemplateError(f"{m.group(0)!r} must be a whole argument")
        if prefix is not None or name not in ("build_dir", "root"):
            raise BadTemplateError(f"unknown placeholder {m.group(0)!r}")
        return ctx.build_dir if name == "build_dir" else ctx.root.name

    argv: list[str] = []
    for arg in template:
        m = _PLACEHOLDER_RE.fullmatch(arg)
        if m and m.group(1) in _SPLICE_NAMES:
            kind, prefix = m.group(1), m.group(2) or ""
            if kind == "sources":
                if m.group(2) is not None:
                    raise BadTemplateError("{sources} takes no prefix")
                argv.extend(paths)
            elif kind == "incdirs":
                argv.extend(prefix + d for d in props.include_dirs)
            else:
                argv.extend(_define_arg(k, v, prefix) for k, v in props.defines.items())
            continue
        argv.append(_PLACEHOLDER_RE.sub(literal, arg))

    name = ctx.options.get("name", f"tool-{ctx.root.name}")
    if not isinstance(name, str):
        raise ManifestSchemaError("'name' must be a string")
    raw_outputs = ctx.options.get("outputs", [])
    if not isinstance(raw_outputs, list) or not all(isinstance(o, str) for o in raw_outputs):
        raise ManifestSchemaError("'outputs' must be a list of strings")
    outputs = [
        o if os.path.isabs(o) else os.path.normpath(os.path.join(ctx.build_dir, o))
        for o in raw_outputs
    ]
    target = Target(
        name=name,
        command=argv,
        inputs=paths,
        outputs=outputs,
        working_dir=ctx.build_dir,
    )
    return BackendResult([target], list(outputs), list(props.warnings))


def _ip_mangle(vlnv: Vlnv) -> str:
    return f"{vlnv.vendor}_{vlnv.library}_{vlnv.name}"


def _dedup_stem(stem: str, used: set[str]) -> str:
    candidate, i = stem, 2
    while candidate in used:
        candidate = f"{stem}-{i}"
        i += 1
    used.add(candidate)
    return candidate


def builtin_sv2v(ctx: BackendContext) -> BackendResult:
    """Convert SystemVerilog filesets to generated Verilog, rewriting the overlay.

    Every ``X.sv`` entry gets a target producing
    ``<build_dir>/sv2v/<vendor>_<library>_<name>/<stem>.v``; the overlay drops
    the SystemVerilog entry and appends the generated path to the IP's
    Verilog fileset, preserving relative order.
    """
    targets: list[Target] = []
    artifacts: list[str] = []
    for vlnv in ctx.graph.flatten():
        view = ctx.fileset_view[vlnv]
        sv_paths = view.get(SourceLanguage.SYSTEMVERILOG, [])
        if not sv_paths:
            continue
        out_dir = os.path.join(ctx.build_dir, "sv2v", _ip_mangle(vlnv))
        used: set[str] = set()
        generated: list[str] = []
        for src in sv_paths:
            if not os.path.isfile(src) and src not in ctx.planned_outputs:
                raise MissingFileError(f"{vlnv}: source file not found: {src}")
            stem = _dedup_stem(os.path.splitext(os.path.basename(src))[0], used)
            out = os.path.join(out_dir, f"{stem}.v")
            targets.append(
                Target(
                    name=f"sv2v-{_ip_mangle(vlnv)}-{stem}",
                    command=[sys.executable, "-m", "socbuild._sv2v_tool", src, out],
                    inputs=[src],
                    outputs=[out],
                    working_dir=ctx.build_dir,
                )
            )
            generated.append(out)
            artifacts.append(out)
        view[SourceLanguage.SYSTEMVERILOG] = []
        view.setdefault(SourceLanguage.VERILOG, []).extend(generated)
    return BackendResult(targets, artifacts, [])


def builtin_softcc(ctx: BackendContext) -> BackendResult:
    """Plan C/C++/assembly compilation: one compile target per source, one link.

    Compile targets depend only on their own source, so they are maximally
    parallel; the link target consumes every object.  ``toolchain_prefix``
    selects a cross toolchain (e.g. ``riscv64-unknown-elf-``).
    """
    prefix = ctx.options.get("toolchain_prefix", "")
    if not isinstance(prefix, str):
        raise ManifestSchemaError("'toolchain_prefix' must be a string")
    output = ctx.options.get("output", ctx.root.name)
    if not isinstance(output, str) or not is_identifier(output):
        raise ManifestSchemaError(f"'output' must be a valid identifier, got {output!r}")
    entries = ctx.sources(SOFT_LANGS)
    if not entries:
        raise NoSourcesError("no C, C++ or assembly sources in the design")

    targets: list[Target] = []
    objects: list[str] = []
    used_by_ip: dict[Vlnv, set[str]] = {}
    for entry in entries:
        driver = prefix + ("g++" if entry.lang is SourceLanguage.CPP else "gcc")
        used = used_by_ip.setdefault(entry.ip, set())
        stem = _dedup_stem(os.path.splitext(os.path.basename(entry.path))[0], used)
        obj = os.path.join(ctx.build_dir, "obj", _ip_mangle(entry.ip), f"{stem}.o")
        props = ctx.properties(entry.lang)
        argv = [driver, "-c", entry.path, "-o", obj]
        argv += [f"-I{d}" for d in props.include_dirs]
        argv += [_define_arg(k, v, "-D") for k, v in props.defines.items()]
        targets.append(
            Target(
                name=f"compile-{_ip_mangle(entry.ip)}-{stem}",
                command=argv,
                inputs=[entry.path],
                outputs=[obj],
                working_dir=ctx.build_dir,
            )
        )
        objects.append(obj)

    link_driver = prefix + (
        "g++" if any(e.lang is SourceLanguage.CPP for e in entries) else "gcc"
    )
    elf = os.path.join(ctx.build_dir, f"{output}.elf")
    targets.append(
        Target(
            name=f"link-{output}",
            command=[link_driver, "-o", elf, *objects],
            inputs=list(objects),
            outputs=[elf],
            working_dir=ctx.build_dir,
        )
    )
    return BackendResult(targets, [elf], [])


register_backend("filelist", builtin_filelist)
register_backend("tool_cmd", builtin_tool_cmd)
register_backend("sv2v", builtin_sv2v)
register_backend("softcc", builtin_softcc)
