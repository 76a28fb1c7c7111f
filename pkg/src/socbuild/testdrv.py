"""Built-in test driver: manifest-declared tests run as parallel processes.

A test passes iff its exit code equals the declared expectation and, when a
pass regex is declared, the regex matches the captured output.  Results go
to stdout (via the CLI), per-test log files, and a JUnit-style XML report.
"""

from __future__ import annotations

import os
import re
import subprocess
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from time import monotonic
from typing import TYPE_CHECKING, Optional

from .errors import BadFilterError, DuplicateTestError
from .executor import scrubbed_env
from .graph import Registry, ResolvedGraph
from .model import Vlnv

if TYPE_CHECKING:
    from .manifest import TestDecl

RESULTS_XML_NAME = "test-results.xml"
_FAILURE_TAIL_LINES = 20


@dataclass(frozen=True)
class TestCase:
    owner: Vlnv
    decl: "TestDecl"
    working_dir: str

    @property
    def qualified_id(self) -> str:
        return f"{self.owner}/{self.decl.name}"


class TestStatus(Enum):
    PASS = "pass"
    FAIL = "fail"
    ERROR = "error"


@dataclass
class TestResult:
    case: TestCase
    status: TestStatus
    exit_code: Optional[int]
    regex_missed: bool
    duration: float
    log_path: str
    message: str = ""


@dataclass
class TestReport:
    results: list[TestResult] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def count(self, status: TestStatus) -> int:
        return sum(1 for r in self.results if r.status is status)

    @property
    def passed(self) -> int:
        return self.count(TestStatus.PASS)

    @property
    def failed(self) -> int:
        return self.count(TestStatus.FAIL)

    @property
    def errored(self) -> int:
        return self.count(TestStatus.ERROR)

    @property
    def all_passed(self) -> bool:
        return self.failed == 0 and self.errored == 0


def collect_tests(registry: Registry, graph: Optional[ResolvedGraph] = None) -> list[TestCase]:
    """All declared tests, ordered by qualified id.

    With a resolved graph, only tests of IPs reachable in that graph are
    collected; otherwise the whole registry contributes.
    """
    owners = graph.nodes.keys() if graph is not None else registry.entries.keys()
    cases: list[TestCase] = []
    for vlnv in owners:
        doc = registry.docs.get(vlnv)
        if doc is None:
            continue
        for decl in doc.tests:
            cases.append(TestCase(vlnv, decl, doc.dir))
    cases.sort(key=lambda c: c.qualified_id)
    for a, b in zip(cases, cases[1:]):
        if a.qualified_id == b.qualified_id:
            raise DuplicateTestError(f"duplicate test id {a.qualified_id!r}")
    return cases


def _log_slug(qualified_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", qualified_id)


def _run_one(case: TestCase, log_path: str) -> TestResult:
    decl = case.decl
    started = monotonic()
    try:
        proc = subprocess.run(
            list(decl.command),
            cwd=case.working_dir,
            env=scrubbed_env(),
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
        )
    except OSError as e:
        duration = monotonic() - started
        message = f"cannot spawn {list(decl.command)!r}: {e}"
        with open(log_path, "w", encoding="utf-8") as f:
            f.write(message + "\n")
        return TestResult(case, TestStatus.ERROR, None, False, duration, log_path, message)
    duration = monotonic() - started
    with open(log_path, "wb") as f:
        f.write(proc.stdout)
    text = proc.stdout.decode("utf-8", errors="replace")
    exit_ok = proc.returncode == decl.expected_exit
    regex_missed = bool(decl.pass_regex) and re.search(decl.pass_regex, text) is None
    if exit_ok and not regex_missed:
        return TestResult(case, TestStatus.PASS, proc.returncode, False, duration, log_path)
    if not exit_ok:
        message = f"exit code {proc.returncode}, expected {decl.expected_exit}"
    else:
        message = f"output did not match pass regex {decl.pass_regex!r}"
    return TestResult(
        case, TestStatus.FAIL, proc.returncode, regex_missed, duration, log_path, message
    )


def run_tests(
    cases: list[TestCase],
    filter: Optional[str] = None,
    jobs: int = 1,
    build_dir: str = ".",
) -> TestReport:
    """Run (a filtered subset of) the cases with up to ``jobs`` processes."""
    if filter is not None:
        try:
            rx = re.compile(filter)
        except re.error as e:
            raise BadFilterError(f"invalid test filter {filter!r}: {e}") from e
        selected = [c for c in cases if rx.search(c.qualified_id)]
    else:
        selected = list(cases)

    report = TestReport()
    if filter is not None and not selected:
        report.warnings.append(f"test filter {filter!r} matched no tests")

    build_dir = os.path.abspath(build_dir)
    log_dir = os.path.join(build_dir, "log", "tests")
    os.makedirs(log_dir, exist_ok=True)
    log_paths = [os.path.join(log_dir, _log_slug(c.qualified_id) + ".log") for c in selected]
    if selected:
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            report.results = list(pool.map(_run_one, selected, log_paths))
    _write_junit_xml(report, os.path.join(build_dir, RESULTS_XML_NAME))
    return report


def _log_tail(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8", errors="replace") as f:
            return "\n".join(f.read().splitlines()[-_FAILURE_TAIL_LINES:])
    except OSError:
        return ""


def _write_junit_xml(report: TestReport, path: str) -> None:
    suites = ET.Element("testsuites")
    by_owner: dict[str, list[TestResult]] = {}
    for result in report.results:
        by_owner.setdefault(str(result.case.owner), []).append(result)
    for owner, results in by_owner.items():
        suite = ET.SubElement(
            suites,
            "testsuite",
            name=owner,
            tests=str(len(results)),
            failures=str(sum(1 for r in results if r.status is TestStatus.FAIL)),
            errors=str(sum(1 for r in results if r.status is TestStatus.ERROR)),
        )
        for r in results:
            case_el = ET.SubElement(
                suite,
                "testcase",
                name=r.case.decl.name,
                classname=owner,
                time=f"{r.duration:.3f}",
            )
            if r.status is TestStatus.FAIL:
                fail_el = ET.SubElement(case_el, "failure", message=r.message)
                fail_el.text = _log_tail(r.log_path)
            elif r.status is TestStatus.ERROR:
                err_el = ET.SubElement(case_el, "error", message=r.message)
                err_el.text = _log_tail(r.log_path)
    tree = ET.ElementTree(suites)
    ET.indent(tree)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tree.write(path, encoding="utf-8", xml_declaration=True)
