"""Incremental parallel execution of a target DAG.

Dirtiness is decided by content hashing (command digest, input digests,
output digests), never by mtimes.  That buys early cutoff: a target that
reruns but reproduces byte-identical outputs leaves its dependents clean.
"""

from __future__ import annotations

import hashlib
import json
import os
import subprocess
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .errors import (
    BadIdentifierError,
    DuplicateOutputError,
    DuplicateTargetError,
    ExecutionFailedError,
    IoError,
    TargetCycleError,
    UnknownDepError,
)
from .model import is_identifier

STAMP_DB_RELPATH = os.path.join(".socbuild", "stamps.json")
LOG_DIR_NAME = "log"


def hash_content(path: str) -> str:
    """SHA-256 of the file's bytes, lowercase hex."""
    h = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 16), b""):
                h.update(chunk)
    except OSError as e:
        raise IoError(f"cannot hash {path}: {e}") from e
    return h.hexdigest()


def scrubbed_env(extra: Optional[dict[str, str]] = None) -> dict[str, str]:
    """Minimal hermetic child environment: PATH and HOME plus explicit additions."""
    env = {
        "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
        "HOME": os.environ.get("HOME", "/tmp"),
    }
    if extra:
        env.update(extra)
    return env


@dataclass
class Target:
    """One build step: a command with declared inputs, outputs and deps."""

    name: str
    command: list[str]
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    deps: list[str] = field(default_factory=list)
    working_dir: Optional[str] = None
    env: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not is_identifier(self.name):
            raise BadIdentifierError(f"invalid target name {self.name!r}")


def command_digest(target: Target) -> str:
    """Digest of everything that defines *how* the target runs."""
    material = json.dumps(
        {
            "argv": list(target.command),
            "cwd": target.working_dir or "",
            "env": dict(sorted(target.env.items())),
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(material.encode()).hexdigest()


class StampDb:
    """Per-target digests from the last successful run.

    Absence of a record means dirty.  Persisted atomically (temp file then
    rename) after every recorded completion.
    """

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._records: dict[str, dict] = {}
        if os.path.exists(path):
            try:
                with open(path, "r", encoding="utf-8") as f:
                    obj = json.load(f)
                if isinstance(obj, dict) and isinstance(obj.get("targets"), dict):
                    self._records = obj["targets"]
            except (json.JSONDecodeError, OSError):
                self._records = {}  # unreadable db just means a full rebuild

    def get(self, name: str) -> Optional[dict]:
        with self._lock:
            return self._records.get(name)

    def record(
        self,
        name: str,
        command: str,
        inputs: dict[str, str],
        outputs: dict[str, str],
    ) -> None:
        with self._lock:
            self._records[name] = {
                "command": command,
                "inputs": inputs,
                "outputs": outputs,
            }
            self._save_locked()

    def _save_locked(self) -> None:
        os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump({"version": 1, "targets": self._records}, f, indent=2, sort_keys=True)
            f.write("\n")
        os.replace(tmp, self.path)


def is_dirty(target: Target, db: StampDb) -> tuple[bool, str]:
    """Decide whether a target must run, and name the first trigger."""
    rec = db.get(target.name)
    if rec is None:
        return True, "no record"
    if rec.get("command") != command_digest(target):
        return True, "command changed"
    rec_inputs = rec.get("inputs", {})
    if set(rec_inputs) != set(target.inputs):
        return True, "input set changed"
    for path in target.inputs:
        if not os.path.isfile(path):
            return True, f"input missing: {path}"
        if hash_content(path) != rec_inputs[path]:
            return True, f"input changed: {path}"
    rec_outputs = rec.get("outputs", {})
    if set(rec_outputs) != set(target.outputs):
        return True, "output set changed"
    for path in target.outputs:
        if not os.path.isfile(path):
            return True, f"output missing: {path}"
        if hash_content(path) != rec_outputs[path]:
            return True, f"output changed: {path}"
    return False, "up to date"


@dataclass
class TargetGraph:
    """A validated plan: targets in declaration order plus both edge maps."""

    targets: dict[str, Target]
    deps_of: dict[str, list[str]]
    dependents_of: dict[str, list[str]]

    def __len__(self) -> int:
        return len(self.targets)


def assemble_plan(targets: Sequence[Target]) -> TargetGraph:
    """Validate targets and build the edge maps.

    Edges come from explicit ``deps`` plus inference: if A's input is B's
    output, B runs before A.  Output paths must be produced by exactly one
    target, and the combined graph must be acyclic.
    """
    by_name: dict[str, Target] = {}
    for t in targets:
        if t.name in by_name:
            raise DuplicateTargetError(f"duplicate target name {t.name!r}")
        by_name[t.name] = t

    producer: dict[str, str] = {}
    for t in targets:
        for out in t.outputs:
            key = os.path.normpath(out)
            if key in producer:
                raise DuplicateOutputError(
                    f"{out} produced by both {producer[key]!r} and {t.name!r}"
                )
            producer[key] = t.name

    deps_of: dict[str, list[str]] = {}
    for t in by_name.values():
        deps: list[str] = []
        for d in t.deps:
            if d not in by_name:
                raise UnknownDepError(f"target {t.name!r} depends on unknown target {d!r}")
            if d not in deps:
                deps.append(d)
        for inp in t.inputs:
            p = producer.get(os.path.normpath(inp))
            if p is not None and p not in deps:
                deps.append(p)
        deps_of[t.name] = deps

    # cycle check over the combined edges, reporting one full path
    state: dict[str, int] = {}  # 0 visiting, 1 done
    stack: list[str] = []

    def visit(name: str) -> None:
        if state.get(name) == 1:
            return
        if state.get(name) == 0:
            cycle = stack[stack.index(name):] + [name]
            raise TargetCycleError("target cycle: " + " -> ".join(cycle), cycle)
        state[name] = 0
        stack.append(name)
        for d in deps_of[name]:
            visit(d)
        stack.pop()
        state[name] = 1

    for name in by_name:
        visit(name)

    dependents_of: dict[str, list[str]] = {name: [] for name in by_name}
    for name in by_name:
        for d in deps_of[name]:
            dependents_of[d].append(name)
    return TargetGraph(by_name, deps_of, dependents_of)


class TargetStatus(Enum):
    SKIPPED_UP_TO_DATE = "skipped"
    RAN_OK = "ok"
    FAILED = "failed"
    NOT_RUN = "not-run"


@dataclass
class RunReport:
    """Outcome of one execute() call, in plan order."""

    statuses: dict[str, TargetStatus]
    reasons: dict[str, str]
    durations: dict[str, float]
    max_concurrency: int
    processes_spawned: int

    def names_with(self, status: TargetStatus) -> list[str]:
        return [n for n, s in self.statuses.items() if s is status]

    @property
    def ran(self) -> list[str]:
        return self.names_with(TargetStatus.RAN_OK)

    @property
    def failed(self) -> list[str]:
        return self.names_with(TargetStatus.FAILED)

    @property
    def skipped(self) -> list[str]:
        return self.names_with(TargetStatus.SKIPPED_UP_TO_DATE)

    @property
    def not_run(self) -> list[str]:
        return self.names_with(TargetStatus.NOT_RUN)


def _closure(plan: TargetGraph, goals: Sequence[str]) -> list[str]:
    wanted: set[str] = set()
    stack = list(goals)
    while stack:
        name = stack.pop()
        if name in wanted:
            continue
        wanted.add(name)
        stack.extend(plan.deps_of[name])
    return [n for n in plan.targets if n in wanted]  # plan order


def _log_tail(path: str, lines: int = 5) -> str:
    try:
        with open(path, "r", encoding="utf-8", errors="replace") as f:
            return "\n".join(f.read().strip().splitlines()[-lines:])
    except OSError:
        return "<no log>"


def execute(
    plan: TargetGraph,
    goals: Optional[Sequence[str]] = None,
    jobs: int = 1,
    keep_going: bool = False,
    build_dir: str = ".",
) -> RunReport:
    """Run the dirty part of the plan with at most ``jobs`` concurrent processes.

    A target starts only after all its dependencies finished cleanly; on
    failure its transitive dependents are NOT_RUN, and without ``keep_going``
    nothing new is scheduled.  Raises ExecutionFailedError (report attached)
    if any target failed.
    """
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    build_dir = os.path.abspath(build_dir)
    if goals is None:
        goal_names = list(plan.targets)
    else:
        for g in goals:
            if g not in plan.targets:
                raise UnknownDepError(f"unknown target {g!r}")
        goal_names = list(goals)
    order = _closure(plan, goal_names)
    total = len(order)
    in_closure = set(order)

    db = StampDb(os.path.join(build_dir, STAMP_DB_RELPATH))
    log_dir = os.path.join(build_dir, LOG_DIR_NAME)
    os.makedirs(log_dir, exist_ok=True)

    PENDING = object()
    status: dict[str, object] = {n: PENDING for n in order}
    reasons: dict[str, str] = {}
    durations: dict[str, float] = {}
    indeg = {n: sum(1 for d in plan.deps_of[n] if d in in_closure) for n in order}
    ready: deque[str] = deque(n for n in order if indeg[n] == 0)
    in_flight: set[str] = set()

    cond = threading.Condition()
    counters = {"terminal": 0, "running": 0, "max": 0, "spawned": 0}
    halt = {"stop": False}

    def finish_locked(name: str, st: TargetStatus, reason: str = "") -> None:
        status[name] = st
        if reason:
            reasons[name] = reason
        counters["terminal"] += 1

    def unlock_dependents_locked(name: str) -> None:
        for dep in plan.dependents_of[name]:
            if dep not in in_closure or status[dep] is not PENDING:
                continue
            indeg[dep] -= 1
            if indeg[dep] == 0 and not halt["stop"]:
                ready.append(dep)

    def cancel_dependents_locked(name: str) -> None:
        queue = [d for d in plan.dependents_of[name] if d in in_closure]
        while queue:
            dep = queue.pop()
            if status[dep] is not PENDING:
                continue
            finish_locked(dep, TargetStatus.NOT_RUN, "dependency failed")
            queue.extend(d for d in plan.dependents_of[dep] if d in in_closure)

    def drain_pending_locked() -> None:
        halt["stop"] = True
        ready.clear()
        for n in order:
            if status[n] is PENDING and n not in in_flight:
                finish_locked(n, TargetStatus.NOT_RUN, "build halted")

    def run_one(target: Target, log_path: str) -> int:
        env = scrubbed_env(target.env)
        cwd = target.working_dir or build_dir
        for out in target.outputs:
            parent = os.path.dirname(out)
            if parent:
                os.makedirs(parent, exist_ok=True)
        try:
            with open(log_path, "wb") as log_file:
                proc = subprocess.run(
                    list(target.command),
                    cwd=cwd,
                    env=env,
                    stdout=log_file,
                    stderr=subprocess.STDOUT,
                )
            return proc.returncode
        except OSError as e:
            with open(log_path, "a", encoding="utf-8") as log_file:
                log_file.write(f"socbuild: cannot spawn {target.command!r}: {e}\n")
            return 127

    def process_one(name: str) -> None:
        target = plan.targets[name]
        log_path = os.path.join(log_dir, f"{name}.log")
        try:
            dirty, reason = is_dirty(target, db)
        except IoError as e:
            dirty, reason = True, str(e)
        if not dirty:
            with cond:
                in_flight.discard(name)
                finish_locked(name, TargetStatus.SKIPPED_UP_TO_DATE, reason)
                unlock_dependents_locked(name)
                cond.notify_all()
            return
        with cond:
            counters["running"] += 1
            counters["spawned"] += 1
            counters["max"] = max(counters["max"], counters["running"])
        started = time.monotonic()
        code = run_one(target, log_path)
        duration = time.monotonic() - started
        ok = code == 0
        if ok:
            try:
                db.record(
                    name,
                    command_digest(target),
                    {p: hash_content(p) for p in target.inputs},
                    {p: hash_content(p) for p in target.outputs},
                )
            except IoError as e:
                ok = False
                code = -1
                with open(log_path, "a", encoding="utf-8") as log_file:
                    log_file.write(f"socbuild: cannot stamp results: {e}\n")
        with cond:
            counters["running"] -= 1
            in_flight.discard(name)
            durations[name] = duration
            if ok:
                finish_locked(name, TargetStatus.RAN_OK, reason)
                unlock_dependents_locked(name)
            else:
                finish_locked(name, TargetStatus.FAILED, f"exit code {code}")
                cancel_dependents_locked(name)
                if not keep_going:
                    drain_pending_locked()
            cond.notify_all()

    def worker() -> None:
        while True:
            with cond:
                while not ready and counters["terminal"] < total:
                    cond.wait()
                if counters["terminal"] >= total:
                    cond.notify_all()
                    return
                name = ready.popleft()
                in_flight.add(name)
            try:
                process_one(name)
            except Exception as e:  # defensive: a scheduler bug must not deadlock
                with cond:
                    in_flight.discard(name)
                    if status[name] is PENDING:
                        finish_locked(name, TargetStatus.FAILED, f"internal error: {e}")
                        cancel_dependents_locked(name)
                        if not keep_going:
                            drain_pending_locked()
                    cond.notify_all()

    threads = [threading.Thread(target=worker, daemon=True) for _ in range(min(jobs, max(total, 1)))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    statuses = {n: status[n] for n in order}
    report = RunReport(
        statuses=statuses,  # type: ignore[arg-type]
        reasons=reasons,
        durations=durations,
        max_concurrency=counters["max"],
        processes_spawned=counters["spawned"],
    )
    failed = report.failed
    if failed:
        details = []
        for name in failed:
            tail = _log_tail(os.path.join(log_dir, f"{name}.log"))
            details.append(f"{name}: {reasons.get(name, 'failed')}\n{tail}")
        raise ExecutionFailedError(
            f"{len(failed)} target(s) failed: " + "; ".join(failed) + "\n" + "\n".join(details),
            report=report,
        )
    return report
