"""socbuild command line: discover, fetch, resolve, plan, build, test, inspect.

Exit codes: 0 success, 1 build/test failure, 2 usage error, 3
resolution/fetch/model error.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
from dataclasses import dataclass

from .backends import BackendContext, run_backend, run_pipeline
from .errors import DuplicateVlnvError, ExecutionFailedError, SocbuildError
from .executor import assemble_plan, execute
from .fetcher import LOCKFILE_NAME, Lockfile, materialize_lock, sync
from .graph import Registry, resolve
from .manifest import build_registry
from .model import parse_vlnv_ref
from .testdrv import collect_tests, run_tests


@dataclass
class GlobalOptions:
    workspace: str
    build_dir: str
    jobs: int
    offline: bool
    update: bool
    verbose: bool

    @property
    def lockfile_path(self) -> str:
        return os.path.join(self.workspace, LOCKFILE_NAME)

    @property
    def cache_dir(self) -> str:
        return os.environ.get(
            "SOCBUILD_CACHE", os.path.join(self.workspace, ".socbuild", "cache")
        )


def find_workspace(start: str) -> str:
    """The nearest ancestor holding a lockfile, or ``start`` itself."""
    cur = os.path.abspath(start)
    while True:
        if os.path.exists(os.path.join(cur, LOCKFILE_NAME)):
            return cur
        parent = os.path.dirname(cur)
        if parent == cur:
            return os.path.abspath(start)
        cur = parent


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="socbuild",
        description="Build orchestrator for VLNV-named IP blocks.",
    )
    parser.add_argument("--workspace", help="workspace root (default: nearest lockfile dir or cwd)")
    parser.add_argument("--build-dir", help="build output dir (default: <workspace>/build)")
    parser.add_argument("-j", "--jobs", type=_positive_int, default=None,
                        help="max concurrent processes (default: logical CPU count)")
    parser.add_argument("--offline", action="store_true",
                        help="forbid network access (cache misses fail)")
    parser.add_argument("--update", action="store_true",
                        help="let manifests override lockfile pins during fetch")
    parser.add_argument("--verbose", action="store_true", help="include per-step details and timings")

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("list", help="list registry contents as canonical VLNVs")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("fetch", help="sync remote dependencies and write the lockfile")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("graph", help="resolve a root IP and print the flatten order")
    p.add_argument("root", help="root IP reference (vendor::library::name[::version])")
    p.add_argument("--dot", action="store_true", help="print DOT instead of the flat list")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("filelist", help="write an EDA filelist for a root IP")
    p.add_argument("root")
    p.add_argument("--format", choices=("f", "json"), default="f")
    p.set_defaults(func=cmd_filelist)

    p = sub.add_parser("build", help="resolve, run declared backends, execute the plan")
    p.add_argument("root")
    p.add_argument("--target", action="append", default=None, metavar="NAME",
                   help="build only NAME (and its deps); repeatable")
    p.add_argument("--keep-going", action="store_true",
                   help="continue independent subgraphs after a failure")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("test", help="run manifest-declared tests for a root IP")
    p.add_argument("root")
    p.add_argument("--filter", default=None, metavar="RE",
                   help="run only tests whose qualified id matches RE")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("clean", help="remove build dir contents (logs kept unless --all)")
    p.add_argument("--all", action="store_true", help="also remove logs")
    p.set_defaults(func=cmd_clean)
    return parser


def _load_registry(opts: GlobalOptions) -> Registry:
    skip = {opts.build_dir, opts.cache_dir}
    registry = build_registry(opts.workspace, skip_paths=skip)
    if os.path.exists(opts.lockfile_path):
        lock = Lockfile.load(opts.lockfile_path)
        for doc in materialize_lock(lock, opts.cache_dir, offline=opts.offline):
            if doc.block.id in registry.entries:
                raise DuplicateVlnvError(
                    f"{doc.block.id} declared both in the workspace and by fetched manifest {doc.path}"
                )
            registry.insert(doc.block, doc)
    return registry


def _resolve_root(opts: GlobalOptions, root_text: str):
    registry = _load_registry(opts)
    graph = resolve(registry, parse_vlnv_ref(root_text))
    return registry, graph


def cmd_list(opts: GlobalOptions, args) -> int:
    registry = _load_registry(opts)
    for text in sorted(str(v) for v in registry.entries):
        print(text)
    return 0


def cmd_fetch(opts: GlobalOptions, args) -> int:
    registry = build_registry(opts.workspace, skip_paths={opts.build_dir, opts.cache_dir})
    result = sync(
        list(registry.docs.values()),
        lockfile_path=opts.lockfile_path,
        cache_dir=opts.cache_dir,
        update=opts.update,
        offline=opts.offline,
    )
    print(f"pinned {len(result.lockfile.entries)} dependencies in {LOCKFILE_NAME}")
    return 0


def cmd_graph(opts: GlobalOptions, args) -> int:
    _, graph = _resolve_root(opts, args.root)
    if args.dot:
        sys.stdout.write(graph.to_dot())
    else:
        for vlnv in graph.flatten():
            print(vlnv)
    return 0


def cmd_filelist(opts: GlobalOptions, args) -> int:
    _, graph = _resolve_root(opts, args.root)
    ctx = BackendContext(graph, opts.build_dir, options={"format": args.format})
    result = run_backend("filelist", ctx)
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(result.artifacts[0])
    return 0


def cmd_build(opts: GlobalOptions, args) -> int:
    registry, graph = _resolve_root(opts, args.root)
    targets = graph.collect_targets()
    doc = registry.docs.get(graph.root)
    ctx = BackendContext(graph, opts.build_dir)
    if doc is not None and doc.backends:
        backend_targets, warnings = run_pipeline(ctx, doc.backends)
        targets = targets + backend_targets
        for warning in warnings:
            print(f"warning: {warning}", file=sys.stderr)
    plan = assemble_plan(targets)
    try:
        report = execute(
            plan,
            goals=args.target,
            jobs=opts.jobs,
            keep_going=args.keep_going,
            build_dir=opts.build_dir,
        )
    except ExecutionFailedError as e:
        report = e.report
        print(f"error: {e}", file=sys.stderr)
        if report is not None:
            _print_build_report(opts, report)
        return 1
    _print_build_report(opts, report)
    return 0


def _print_build_report(opts: GlobalOptions, report) -> int:
    if opts.verbose:
        for name, status in report.statuses.items():
            line = f"{status.value:>8}  {name}"
            if name in report.durations:
                line += f"  ({report.durations[name]:.3f}s)"
            print(line)
    ran = len(report.ran)
    skipped = len(report.skipped)
    print(f"{ran} targets ran, {skipped} up to date")
    return 0


def cmd_test(opts: GlobalOptions, args) -> int:
    registry, graph = _resolve_root(opts, args.root)
    cases = collect_tests(registry, graph)
    report = run_tests(cases, filter=args.filter, jobs=opts.jobs, build_dir=opts.build_dir)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    for result in report.results:
        print(f"{result.status.name:5s} {result.case.qualified_id}")
    print(f"{report.passed} passed, {report.failed} failed, {report.errored} errors")
    return 0 if report.all_passed else 1


def cmd_clean(opts: GlobalOptions, args) -> int:
    if not os.path.isdir(opts.build_dir):
        return 0
    for entry in sorted(os.listdir(opts.build_dir)):
        if entry == "log" and not args.all:
            continue
        path = os.path.join(opts.build_dir, entry)
        if os.path.isdir(path) and not os.path.islink(path):
            shutil.rmtree(path)
        else:
            os.remove(path)
    return 0


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    workspace = os.path.abspath(args.workspace) if args.workspace else find_workspace(os.getcwd())
    opts = GlobalOptions(
        workspace=workspace,
        build_dir=os.path.abspath(args.build_dir) if args.build_dir
        else os.path.join(workspace, "build"),
        jobs=args.jobs if args.jobs is not None else (os.cpu_count() or 1),
        offline=args.offline or os.environ.get("SOCBUILD_OFFLINE") == "1",
        update=args.update,
        verbose=args.verbose,
    )
    try:
        return args.func(opts, args)
    except ExecutionFailedError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SocbuildError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
